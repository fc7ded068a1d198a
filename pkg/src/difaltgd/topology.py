"""Communication graphs, task assignment and mixing matrices."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import List

import numpy as np

from .errors import DisconnectedGraph, TooFewTasks
from .linalg import symmetric_eigenvalues

__all__ = [
    "MixingScheme",
    "Network",
    "erdos_renyi",
    "is_connected",
    "build_mixing_matrix",
    "spectral_gap",
    "partition_tasks",
    "build_network",
    "edge_list_text",
]

MAX_RETRIES = 1000


class MixingScheme(str, Enum):
    AS_WRITTEN = "as_written"
    METROPOLIS = "metropolis"
    LAZY_AS_WRITTEN = "lazy_as_written"


def is_connected(adjacency):
    A = np.asarray(adjacency, dtype=bool)
    L = A.shape[0]
    seen = np.zeros(L, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        g = queue.popleft()
        for j in np.flatnonzero(A[g] & ~seen):
            seen[j] = True
            queue.append(j)
    return bool(seen.all())


def erdos_renyi(L, p, seed, max_retries=MAX_RETRIES):
    """Sample a connected G(L, p) graph by rejection.

    Returns
    -------
    adjacency : ndarray of bool, shape (L, L)
    retries : int
        Number of rejected draws before the accepted one.
    """
    if L < 2:
        raise ValueError("need at least two nodes")
    if not (0 < p <= 1):
        raise ValueError("edge probability must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(L, k=1)
    for attempt in range(max_retries):
        A = np.zeros((L, L), dtype=bool)
        A[iu] = rng.random(iu[0].size) < p
        A |= A.T
        if is_connected(A):
            return A, attempt
    raise DisconnectedGraph(L, p, max_retries)


def build_mixing_matrix(adjacency, scheme=MixingScheme.METROPOLIS):
    """Row-stochastic averaging matrix for one agreement round.

    ``as_written`` puts ``1/deg_g`` on every neighbour and nothing on the
    diagonal; ``metropolis`` uses ``1/(1 + max(deg_g, deg_j))`` with the
    remainder on the diagonal; ``lazy_as_written`` is ``(I + W_as_written)/2``.
    """
    A = np.asarray(adjacency, dtype=bool)
    L = A.shape[0]
    deg = A.sum(axis=1)
    scheme = MixingScheme(scheme)
    if L == 1:
        return np.ones((1, 1))
    if scheme is MixingScheme.METROPOLIS:
        W = np.where(A, 1.0 / (1.0 + np.maximum.outer(deg, deg)), 0.0)
        W[np.diag_indices(L)] = 1.0 - W.sum(axis=1)
        return W
    W = np.where(A, 1.0 / np.maximum(deg, 1)[:, None], 0.0)
    if scheme is MixingScheme.LAZY_AS_WRITTEN:
        W = 0.5 * (np.eye(L) + W)
    return W


def spectral_gap(W, degrees=None):
    """``max(|lambda_2|, |lambda_L|)`` of a reversible row-stochastic ``W``.

    Non-symmetric ``W`` (the ``1/deg`` schemes on irregular graphs) is
    symmetrized by the similarity ``D^{1/2} W D^{-1/2}``. When ``degrees`` is
    omitted it is read off the off-diagonal sparsity pattern.
    """
    W = np.asarray(W, dtype=float)
    L = W.shape[0]
    if L == 1:
        return 0.0
    if np.max(np.abs(W - W.T)) > 1e-12:
        if degrees is None:
            off = W.copy()
            off[np.diag_indices(L)] = 0.0
            degrees = (off > 0).sum(axis=1)
        s = np.sqrt(np.asarray(degrees, dtype=float))
        W = s[:, None] * W / s[None, :]
        W = 0.5 * (W + W.T)
    lam = symmetric_eigenvalues(W)
    return float(min(max(abs(lam[1]), abs(lam[-1])), 1.0))


def partition_tasks(T, L, seed):
    """Randomly split ``range(T)`` into ``L`` sets whose sizes differ by at most one."""
    if T < L:
        raise TooFewTasks(f"cannot give each of {L} nodes a task with only {T} tasks")
    perm = np.random.default_rng(seed).permutation(T)
    return [np.sort(part) for part in np.array_split(perm, L)]


@dataclass(frozen=True, eq=False)
class Network:
    adjacency: np.ndarray
    task_partition: List[np.ndarray]
    scheme: MixingScheme
    W: np.ndarray
    gamma: float
    retries: int = 0
    seed: int = 0
    p: float = float("nan")

    @property
    def L(self):
        return self.adjacency.shape[0]

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1)

    @property
    def num_edges(self):
        return int(np.triu(self.adjacency, 1).sum())

    @property
    def directed_edges(self):
        """``(src, dst)`` index arrays, one entry per directed transmission."""
        src, dst = np.nonzero(self.adjacency)
        return src, dst

    def neighbors(self, g):
        return np.flatnonzero(self.adjacency[g])

    @classmethod
    def from_adjacency(cls, adjacency, scheme=MixingScheme.METROPOLIS, task_partition=None, **meta):
        A = np.asarray(adjacency, dtype=bool)
        if A.shape[0] > 1 and not is_connected(A):
            raise DisconnectedGraph(A.shape[0], meta.get("p", float("nan")), meta.get("retries", 0))
        scheme = MixingScheme(scheme)
        W = build_mixing_matrix(A, scheme)
        if task_partition is None:
            task_partition = [np.array([g]) for g in range(A.shape[0])]
        gamma = spectral_gap(W, A.sum(axis=1) if A.shape[0] > 1 else None)
        return cls(adjacency=A, task_partition=list(task_partition), scheme=scheme, W=W, gamma=gamma, **meta)

    def metadata(self):
        return {
            "L": self.L,
            "p": self.p,
            "scheme": self.scheme.value,
            "gamma": self.gamma,
            "num_edges": self.num_edges,
            "retries": self.retries,
            "seed": self.seed,
        }


def build_network(L, p, T, scheme=MixingScheme.METROPOLIS, seed=0, partition_seed=None):
    """Connected ER graph, mixing matrix and a random task partition."""
    if L == 1:
        A, retries = np.zeros((1, 1), dtype=bool), 0
    else:
        A, retries = erdos_renyi(L, p, seed)
    part = partition_tasks(T, L, [seed, 1] if partition_seed is None else partition_seed)
    return Network.from_adjacency(A, scheme, part, retries=retries, seed=seed, p=p)


def edge_list_text(network):
    """One ``"u v"`` line per undirected edge, ``u < v``."""
    u, v = np.nonzero(np.triu(network.adjacency, 1))
    return "".join(f"{a} {b}\n" for a, b in zip(u, v))
