"""Alternating GD/minimization solvers for the shared subspace.

All four variants share the column-wise least-squares step for ``B`` and the
local gradient kernel; they differ only in how node updates are combined:

* ``dif``   - local gradient step, then agreement on the updated bases
* ``dec``   - agreement on gradients, then a local gradient step
* ``dgd``   - one neighbour average of bases plus a local gradient step
* ``central`` - exact gradient sum at a fusion centre
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .consensus import CommRecord, agree
from .errors import DivergenceDetected, RankDeficient
from .linalg import batched_least_squares, batched_thin_qr, thin_qr
from .metrics import CommClock, CommModel, RunTrace, record_iteration
from .spectral_init import InitConfig, spectral_initialization
from .synth import block_label_index, sample_split
from .topology import Network

__all__ = [
    "Algorithm",
    "EtaRule",
    "SigmaEstimate",
    "SolverConfig",
    "min_step_B",
    "local_gradient",
    "residual_gradient",
    "step_size",
    "dif_altgdmin_step",
    "dec_altgdmin_step",
    "dgd_variant_step",
    "centralized_altgdmin_step",
    "shared_centralized_init",
    "run_solver",
]


class Algorithm(str, Enum):
    DIF = "dif"
    CENTRAL = "central"
    DEC = "dec"
    DGD = "dgd"


class EtaRule(str, Enum):
    THEOREM = "theorem"
    ESTIMATED = "estimated"


class SigmaEstimate(str, Enum):
    """How the init ``R`` diagonal is turned into a ``sigma_max^2`` estimate."""

    LITERAL = "literal"  # max diag(R) is sigma^2
    SQUARED = "squared"  # max diag(R) is sigma, square it
    NETWORK = "network"  # L * max diag(R): undo the 1/L of network averaging


@dataclass(frozen=True)
class SolverConfig:
    algorithm: Algorithm = Algorithm.DIF
    T_GD: int = 300
    T_con_GD: int = 10
    eta_rule: EtaRule = EtaRule.ESTIMATED
    eta_constant: float = 0.4
    sigma_estimate: SigmaEstimate = SigmaEstimate.NETWORK
    use_sample_split: bool = False
    centralized_init: str = "shared"
    init_config: InitConfig = field(default_factory=InitConfig)

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "eta_rule", EtaRule(self.eta_rule))
        object.__setattr__(self, "sigma_estimate", SigmaEstimate(self.sigma_estimate))
        if self.T_GD < 0:
            raise ValueError("T_GD must be >= 0")
        if self.T_con_GD < 0:
            raise ValueError("T_con_GD must be >= 0")
        if not (0 < self.eta_constant < 1):
            raise ValueError("eta_constant must lie in (0, 1)")
        if self.centralized_init not in ("shared", "own"):
            raise ValueError("centralized_init must be 'shared' or 'own'")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def min_step_B(U, X, Y):
    """Least-squares coefficients for every task given a fixed basis.

    Parameters
    ----------
    U : ndarray, shape (d, r)
    X : ndarray, shape (k, n, d)
    Y : ndarray, shape (k, n)

    Returns
    -------
    B : ndarray, shape (r, k)
    theta : ndarray, shape (d, k)
    """
    B = batched_least_squares(X @ U, Y).T
    return B, U @ B


def residual_gradient(X, resid, B):
    """``sum_t X_t^T resid_t b_t^T`` for a fixed residual matrix."""
    return np.einsum("knd,kn->dk", X, resid) @ B.T


def local_gradient(U, B, X, Y):
    """Gradient in ``U`` of ``sum_t ||y_t - X_t U b_t||^2 / 2`` with ``B`` held fixed."""
    resid = np.einsum("knr,rk->kn", X @ U, B) - Y
    return residual_gradient(X, resid, B)


def _project(Ut):
    if not np.all(np.isfinite(Ut)):
        raise DivergenceDetected("non-finite basis update; step size too large?")
    try:
        return batched_thin_qr(Ut)[0]
    except RankDeficient as exc:
        raise DivergenceDetected(f"projection lost rank at column {exc.column}") from exc


class _NodeData:
    """Measurement blocks of every task, stacked in node-partition order."""

    def __init__(self, problem, network, split):
        self.problem = problem
        self.order = np.concatenate(network.task_partition)
        self.owner = np.repeat(np.arange(network.L), [len(S) for S in network.task_partition])
        # node-by-task indicator that sums per-task terms into node totals
        self.member = np.zeros((network.L, len(self.order)))
        self.member[self.owner, np.arange(len(self.order))] = 1.0
        self.split = split
        self.X = problem.X[self.order]
        self.Y = problem.Y[self.order]

    def _rows(self, label):
        lo, hi = self.problem.blocks[block_label_index(label)]
        return self.X[:, lo:hi], self.Y[:, lo:hi]

    def blocks(self, tau, T_GD):
        if not self.split:
            full = (self.X, self.Y)
            return full, full
        return self._rows(tau), self._rows(tau + T_GD)


def _b_and_grad(U, data, bdata, gdata):
    """Per-task ``B`` and ``theta`` plus per-node gradients, all nodes at once."""
    Uo = U[data.owner]
    Xb, Yb = bdata
    Xg, Yg = gdata
    B = batched_least_squares(np.einsum("knd,kdr->knr", Xb, Uo), Yb)
    theta = np.einsum("kdr,kr->dk", Uo, B)
    resid = np.einsum("knd,kd->kn", Xg, theta.T) - Yg
    per_task = np.einsum("knd,kn->kd", Xg, resid)[:, :, None] * B[:, None, :]
    grads = (data.member @ per_task.reshape(len(B), -1)).reshape(U.shape)
    return B, theta, grads


def dif_altgdmin_step(U, grads, network, eta, T_con):
    """Local step, agreement on the updated bases, then QR projection.

    ``eta`` may be a scalar or one value per node.

    Returns
    -------
    U_new, local, agreed, record
    """
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (network.L,))
    local = U - (eta * network.L)[:, None, None] * grads
    agreed, record = agree(local, network, T_con)
    return _project(agreed), local, agreed, record


def dec_altgdmin_step(U, grads, network, eta, T_con):
    """Agreement on the local gradients, then a projected gradient step."""
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (network.L,))
    mixed, record = agree(grads, network, T_con)
    scale = (eta * network.L)[:, None, None]
    local = U - scale * grads
    updated = U - scale * mixed
    return _project(updated), local, updated, record


def dgd_variant_step(U, grads, network, eta):
    """``QR(mean of neighbour bases - eta * grad_g)``; isolated nodes use their own basis."""
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (network.L,))
    A = network.adjacency.astype(float)
    deg = A.sum(axis=1)
    avg = np.einsum("gj,jdr->gdr", A, U)
    lonely = deg == 0
    avg[lonely] = U[lonely]
    avg[~lonely] /= deg[~lonely][:, None, None]
    record = CommRecord(1 if network.L > 1 else 0, int(A.sum()), tuple(U.shape[1:]))
    return _project(avg - eta[:, None, None] * grads), record


def centralized_altgdmin_step(U, grad_total, eta):
    """Projected gradient step on the full objective at a fusion centre."""
    return _project((U - eta * grad_total)[None])[0]


def shared_centralized_init(U0):
    """Fusion-centre start: QR of the average of the node bases."""
    return thin_qr(np.mean(U0, axis=0))[0]


def step_size(problem, config, init, n_used, L):
    """Per-node step sizes ``eta_constant / (n * sigma_max^2)``."""
    if config.eta_rule is EtaRule.THEOREM:
        sig2 = np.full(L, problem.sigma_max**2)
    else:
        diag = init.sigma_sq_hat
        if config.sigma_estimate is SigmaEstimate.LITERAL:
            sig2 = diag
        elif config.sigma_estimate is SigmaEstimate.SQUARED:
            sig2 = diag**2
        else:
            sig2 = L * diag
    return config.eta_constant / (n_used * np.asarray(sig2, dtype=float))


def _theta_error(problem, order, theta):
    Theta_hat = np.empty((problem.d, problem.T))
    Theta_hat[:, order] = theta
    Theta = problem.ThetaStar
    return np.linalg.norm(Theta_hat - Theta, axis=0) / np.linalg.norm(Theta, axis=0)


def run_solver(problem, network, config, seed=0, init=None, comm_model=None):
    """Run one algorithm for ``T_GD`` iterations and record its trace.

    Parameters
    ----------
    problem : ProblemInstance
    network : Network
    config : SolverConfig
    seed : int
        Seeds the communication-jitter stream.
    init : InitResult, optional
        Shared initialization; computed (and charged) here when omitted.
    comm_model : CommModel, optional

    Returns
    -------
    RunTrace
    """
    alg = config.algorithm
    if config.use_sample_split and not problem.is_split:
        problem = sample_split(problem, max(config.T_GD, 1))
    if init is None:
        init = spectral_initialization(problem, network, config.init_config)
    clock = CommClock(comm_model or CommModel(), np.random.default_rng([seed, 7]))
    for rec in init.records:
        clock.charge(rec, network)

    n_used = problem.block(1)[1].shape[1]
    L = network.L
    eta = step_size(problem, config, init, n_used, L)
    data = _NodeData(problem, network, config.use_sample_split)
    meta = {
        "algorithm": alg.value,
        "eta": eta.tolist(),
        "eta_spread": float(eta.max() - eta.min()),
        "n_used": n_used,
        "init_broadcast_misses": init.broadcast_misses,
    }

    if alg is Algorithm.CENTRAL:
        if config.centralized_init == "own":
            solo = Network.from_adjacency(np.zeros((1, 1), bool), network.scheme, [np.arange(problem.T)])
            own = spectral_initialization(problem, solo, config.init_config)
            U = own.U
        else:
            U = shared_centralized_init(init.U)[None]
        meta["centralized_init"] = config.centralized_init
        # the fusion centre averages the node estimates
        eta = np.array([eta.mean()])
    else:
        U = init.U.copy()

    trace = RunTrace(alg.value, metadata=meta)
    trace.rows.append(record_iteration(0, U, problem.Ustar, clock))
    theta = None
    for tau in range(1, config.T_GD + 1):
        bdata, gdata = data.blocks(tau, config.T_GD)
        if alg is Algorithm.CENTRAL:
            # fusion centre: the node-gradient sum equals the full gradient
            B, theta, grads = _b_and_grad(np.repeat(U, L, axis=0), data, bdata, gdata)
            clock.charge_star(L, U.shape[1:], "up")
            U = centralized_altgdmin_step(U[0], grads.sum(axis=0), eta[0])[None]
            clock.charge_star(L, U.shape[1:], "down")
            trace.rows.append(record_iteration(tau, U, problem.Ustar, clock))
            continue
        _, theta, grads = _b_and_grad(U, data, bdata, gdata)
        agreed = local = None
        if alg is Algorithm.DIF:
            U, local, agreed, rec = dif_altgdmin_step(U, grads, network, eta, config.T_con_GD)
        elif alg is Algorithm.DEC:
            U, local, agreed, rec = dec_altgdmin_step(U, grads, network, eta, config.T_con_GD)
        else:
            U, rec = dgd_variant_step(U, grads, network, eta)
        clock.charge(rec, network)
        trace.rows.append(record_iteration(tau, U, problem.Ustar, clock, agreed, local))

    if theta is not None:
        trace.theta_rel_err = _theta_error(problem, data.order, theta)
    trace.U_final = U
    trace.payload_shapes = clock.payload_shapes
    trace.round_times = clock.round_times
    return trace
