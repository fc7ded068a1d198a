"""Decentralized truncated spectral initialization.

Nodes agree on a truncation threshold, build truncated local sketches
``(1/n) X_t^T y_t``, then run a power method on the network average of
``Theta_g Theta_g^T`` with a broadcast from node 0 to align bases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .consensus import agree
from .errors import InitRankCollapse, RankDeficient
from .linalg import batched_thin_qr, thin_qr

__all__ = [
    "InitConfig",
    "InitResult",
    "truncation_threshold",
    "truncated_sketch",
    "decentralized_power_method",
    "spectral_initialization",
]


@dataclass(frozen=True)
class InitConfig:
    """Schedule of the initialization.

    ``kappa_hint`` / ``mu_hint`` default to the generator's true values when
    left as ``None``.
    """

    T_pm: int = 100
    T_con_init: int = 10
    kappa_hint: Optional[float] = None
    mu_hint: Optional[float] = None
    shared_seed: int = 0
    broadcast_every_round: bool = True

    def __post_init__(self):
        if self.T_pm < 1:
            raise ValueError("T_pm must be >= 1")
        if self.T_con_init < 0:
            raise ValueError("T_con_init must be >= 0")
        for hint in (self.kappa_hint, self.mu_hint):
            if hint is not None and hint <= 0:
                raise ValueError("kappa/mu hints must be positive")


@dataclass
class InitResult:
    U: np.ndarray  # (L, d, r)
    R: np.ndarray  # (L, r, r), from the last power-method projection
    alpha: np.ndarray
    sketches: List[np.ndarray]
    records: list = field(default_factory=list)
    broadcast_misses: int = 0

    @property
    def sigma_sq_hat(self):
        """Largest diagonal entry of each node's final ``R``."""
        return np.max(np.diagonal(self.R, axis1=1, axis2=2), axis=1)


def _hints(problem, config):
    kappa = problem.kappa if config.kappa_hint is None else config.kappa_hint
    mu = problem.mu_measured if config.mu_hint is None else config.mu_hint
    return kappa, mu


def truncation_threshold(problem, network, config):
    """Per-node threshold after agreeing on the local energy estimates.

    Returns
    -------
    alpha : ndarray, shape (L,)
    record : CommRecord
    """
    kappa, mu = _hints(problem, config)
    _, Y = problem.block("00")
    n_used = Y.shape[1]
    L = network.L
    energy = np.array([np.sum(Y[S] ** 2) for S in network.task_partition])
    alpha_in = 9.0 * kappa**2 * mu**2 * L / (n_used * problem.T) * energy
    alpha, record = agree(alpha_in, network, config.T_con_init)
    return alpha, record


def truncated_sketch(problem, tasks, alpha):
    """``d x |tasks|`` matrix of ``(1/n) X_t^T y_t`` with large ``y_ti^2`` zeroed."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    X, Y = problem.block("0", tasks)
    n_used = Y.shape[1]
    Yt = np.where(Y**2 <= alpha, Y, 0.0)
    return np.einsum("tnd,tn->dt", X, Yt) / n_used


def decentralized_power_method(sketches, network, config, r):
    """Power iterations on the network-averaged ``Theta_g Theta_g^T``.

    Returns
    -------
    U : ndarray, shape (L, d, r)
    R : ndarray, shape (L, r, r)
    records : list of CommRecord
    misses : int
        Broadcast rounds in which some node received a rank-deficient basis
        (e.g. farther than ``T_con_init`` hops from node 0) and kept its own.
    """
    L = network.L
    d = sketches[0].shape[0]
    start = np.random.default_rng(config.shared_seed).standard_normal((d, r))
    try:
        U0, _ = thin_qr(start)
    except RankDeficient as exc:
        raise InitRankCollapse(f"random start is rank deficient: {exc}") from exc
    U = np.repeat(U0[None], L, axis=0)
    grams = np.stack([S @ S.T for S in sketches])
    records = []
    misses = 0
    R = None
    for it in range(config.T_pm):
        local = grams @ U
        mixed, rec = agree(local, network, config.T_con_init)
        records.append(rec)
        try:
            U, R = batched_thin_qr(mixed)
        except RankDeficient as exc:
            raise InitRankCollapse(
                f"power iteration {it} lost rank at column {exc.column}; r may be too large for the data"
            ) from exc
        if L > 1 and (config.broadcast_every_round or it == config.T_pm - 1):
            seed_basis = np.zeros_like(U)
            seed_basis[0] = U[0]
            spread, rec = agree(seed_basis, network, config.T_con_init)
            records.append(rec)
            for g in range(1, L):
                # the broadcast shrinks scale by roughly 1/L; QR undoes it
                try:
                    U[g], _ = thin_qr(spread[g])
                except RankDeficient:
                    misses += 1
    return U, R, records, misses


def spectral_initialization(problem, network, config):
    """Full initialization: threshold agreement, sketches, power method."""
    alpha, rec_alpha = truncation_threshold(problem, network, config)
    sketches = [truncated_sketch(problem, S, a) for S, a in zip(network.task_partition, alpha)]
    U, R, records, misses = decentralized_power_method(sketches, network, config, problem.r)
    return InitResult(
        U=U, R=R, alpha=alpha, sketches=sketches,
        records=[rec_alpha] + records, broadcast_misses=misses,
    )
