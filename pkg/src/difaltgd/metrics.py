"""Run diagnostics and the simulated communication clock.

Every diagnostic compares against the ground-truth basis, which only a
simulator has access to; these columns are oracle-only.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy.spatial.distance import pdist

from .consensus import BYTES_PER_ENTRY
from .linalg import batched_subspace_distance

__all__ = [
    "CommModel",
    "comm_time",
    "round_elapsed",
    "CommClock",
    "RunTrace",
    "record_iteration",
    "pairwise_disagreement",
    "CSV_COLUMNS",
    "write_trace_csv",
    "format_value",
]

CSV_COLUMNS = [
    "trial",
    "algorithm",
    "tau",
    "sd_max",
    "sd_mean",
    "rho",
    "psi",
    "cons_err",
    "cons_err_proj",
    "messages_cum",
    "bytes_cum",
    "sim_time_s",
    "sd_node1",
]


@dataclass(frozen=True)
class CommModel:
    """Per-message time ``latency + bytes / bandwidth + jitter``.

    ``jitter`` is drawn uniformly from ``[jitter_low, jitter_high]``.
    """

    latency_s: float = 50e-3
    bandwidth_bps: float = 1e9
    bytes_per_entry: int = BYTES_PER_ENTRY
    jitter_low: float = 0.0
    jitter_high: float = 1e-3
    parallel_links: bool = True

    def __post_init__(self):
        if self.latency_s < 0 or self.bandwidth_bps <= 0 or self.bytes_per_entry <= 0:
            raise ValueError("latency must be >= 0, bandwidth and entry size > 0")
        if not (0 <= self.jitter_low <= self.jitter_high):
            raise ValueError("jitter bounds must satisfy 0 <= low <= high")

    def message_time(self, entries, rng, size=None):
        base = self.latency_s + self.bytes_per_entry * entries / self.bandwidth_bps
        if self.jitter_high == 0:
            return base if size is None else np.full(size, base)
        return base + rng.uniform(self.jitter_low, self.jitter_high, size=size)


def comm_time(d, r, model=CommModel(), rng=None):
    """Simulated seconds to ship one ``d x r`` double-precision matrix."""
    if rng is None:
        rng = np.random.default_rng()
    return float(model.message_time(d * r, rng))


def round_elapsed(dst, times, L, parallel_links=True):
    """Wall-clock duration of one synchronous exchange round.

    Parameters
    ----------
    dst : array of int
        Receiving node of each transmission.
    times : array of float
        Duration of each transmission.
    L : int
        Number of endpoints.
    parallel_links : bool
        With parallel links a node waits for its slowest transmission,
        otherwise for the sum of them; the round ends when the slowest node
        is done.
    """
    dst = np.asarray(dst, dtype=int)
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return 0.0
    per_node = np.zeros(L)
    if parallel_links:
        np.maximum.at(per_node, dst, times)
    else:
        np.add.at(per_node, dst, times)
    return float(per_node.max())


@dataclass
class CommClock:
    """Accumulates messages, bytes and simulated time for one run."""

    model: CommModel
    rng: np.random.Generator
    messages: int = 0
    bytes: int = 0
    sim_time_s: float = 0.0
    payload_shapes: Counter = field(default_factory=Counter)
    round_times: List[float] = field(default_factory=list)

    def _round(self, dst, L, entries):
        times = self.model.message_time(entries, self.rng, size=len(dst))
        elapsed = round_elapsed(dst, times, L, self.model.parallel_links)
        self.round_times.append(elapsed)
        self.sim_time_s += elapsed
        return elapsed

    def charge(self, record, network):
        """Account for an exchange described by a ``CommRecord``."""
        if record.rounds == 0 or record.messages_per_round == 0:
            return 0.0
        _, dst = network.directed_edges
        entries = int(np.prod(record.payload_shape, dtype=np.int64))
        elapsed = sum(self._round(dst, network.L, entries) for _ in range(record.rounds))
        self.messages += record.messages
        self.bytes += record.bytes
        self.payload_shapes[tuple(record.payload_shape)] += record.messages
        return elapsed

    def charge_star(self, L, payload_shape, direction):
        """One fusion-centre round: ``L`` messages to (``"up"``) or from (``"down"``) the server."""
        entries = int(np.prod(payload_shape, dtype=np.int64))
        # server is endpoint L
        dst = np.full(L, L) if direction == "up" else np.arange(L)
        elapsed = self._round(dst, L + 1, entries)
        self.messages += L
        self.bytes += L * self.model.bytes_per_entry * entries
        self.payload_shapes[tuple(payload_shape)] += L
        return elapsed


def pairwise_disagreement(U, Ustar=None):
    """``max_{g<g'} ||U_g - U_g'||_F``, optionally after projecting out ``U*``."""
    U = np.asarray(U, dtype=float)
    L = U.shape[0]
    if Ustar is not None:
        # the projection is linear, so project each basis once
        U = U - Ustar @ np.einsum("dr,kds->krs", Ustar, U)
    if L < 2:
        return 0.0
    return float(pdist(U.reshape(L, -1)).max())


def record_iteration(tau, U, Ustar, clock, agreed=None, local_updates=None):
    """Diagnostics for one iteration.

    Parameters
    ----------
    U : ndarray, shape (L, d, r)
        Projected node bases after the iteration.
    agreed, local_updates : ndarray, shape (L, d, r), optional
        Post-agreement and pre-agreement node updates; consensus errors are
        reported against the mean of ``local_updates`` when both are given.
    """
    U = np.asarray(U)
    sd = batched_subspace_distance(U, Ustar)
    if agreed is not None and local_updates is not None:
        E = agreed - local_updates.mean(axis=0)
        cons = float(np.sqrt(np.sum(E**2, axis=(1, 2))).max())
        E_perp = E - Ustar @ np.einsum("dr,kds->krs", Ustar, E)
        cons_proj = float(np.sqrt(np.sum(E_perp**2, axis=(1, 2))).max())
    else:
        cons = cons_proj = float("nan")
    return {
        "tau": int(tau),
        "sd_max": float(sd.max()),
        "sd_mean": float(sd.mean()),
        "rho": pairwise_disagreement(U),
        "psi": pairwise_disagreement(U, Ustar),
        "cons_err": cons,
        "cons_err_proj": cons_proj,
        "messages_cum": int(clock.messages),
        "bytes_cum": int(clock.bytes),
        "sim_time_s": float(clock.sim_time_s),
        "sd_node1": float(sd[0]),
    }


@dataclass
class RunTrace:
    algorithm: str
    rows: List[Dict] = field(default_factory=list)
    metadata: Dict = field(default_factory=dict)
    payload_shapes: Counter = field(default_factory=Counter)
    round_times: List[float] = field(default_factory=list)
    theta_rel_err: np.ndarray = None
    U_final: np.ndarray = None

    def column(self, name):
        return np.array([row[name] for row in self.rows])

    @property
    def final(self):
        return self.rows[-1]


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_trace_csv(fh, traces_by_trial):
    """Write rows of ``(trial, RunTrace)`` pairs in the fixed column order."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for trial, trace in traces_by_trial:
        for row in trace.rows:
            full = {"trial": trial, "algorithm": trace.algorithm, **row}
            writer.writerow([format_value(full[c]) for c in CSV_COLUMNS])
