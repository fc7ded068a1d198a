"""Synchronous neighbour averaging (the agreement protocol)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoContraction

__all__ = ["CommRecord", "agree", "required_rounds", "BYTES_PER_ENTRY"]

BYTES_PER_ENTRY = 8


@dataclass(frozen=True)
class CommRecord:
    """Traffic generated by one call to an exchange primitive.

    Every round sends one message of ``payload_shape`` along each directed
    edge, so ``messages = rounds * messages_per_round``.
    """

    rounds: int
    messages_per_round: int
    payload_shape: tuple

    @property
    def messages(self):
        return self.rounds * self.messages_per_round

    @property
    def payload_bytes(self):
        return BYTES_PER_ENTRY * int(np.prod(self.payload_shape, dtype=np.int64))

    @property
    def bytes(self):
        return self.messages * self.payload_bytes


def agree(Z, network, T_con):
    """Run ``T_con`` rounds of ``Z <- W Z`` over the stacked node states.

    Parameters
    ----------
    Z : array_like, shape (L, ...)
        One state per node, all of the same shape.
    network : Network
    T_con : int

    Returns
    -------
    Z_out : ndarray, shape (L, ...)
    record : CommRecord
    """
    if isinstance(Z, (list, tuple)):
        shapes = {np.shape(z) for z in Z}
        if len(shapes) > 1:
            raise DimensionMismatch(f"node states have differing shapes {sorted(shapes)}")
    Z = np.asarray(Z, dtype=float)
    L = network.L
    if Z.shape[0] != L:
        raise DimensionMismatch(f"got {Z.shape[0]} node states for a {L}-node network")
    if T_con < 0:
        raise ValueError("T_con must be non-negative")
    W = network.W
    flat = Z.reshape(L, -1)
    for _ in range(T_con):
        flat = W @ flat
    record = CommRecord(int(T_con), int(network.adjacency.sum()), tuple(Z.shape[1:]))
    return flat.reshape(Z.shape), record


def required_rounds(L, gamma, eps_con):
    """Smallest round count meeting the geometric contraction target ``eps_con``."""
    if not (gamma < 1):
        raise NoContraction(f"gamma={gamma} >= 1: agreement does not contract")
    if not (0 < eps_con < 1):
        raise ValueError("eps_con must lie in (0, 1)")
    if gamma <= 0:
        return 1
    return int(math.ceil(math.log(L / eps_con) / math.log(1.0 / gamma)))
