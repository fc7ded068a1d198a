"""Synthetic low-rank multi-task regression problems.

Each task ``t`` observes ``y_t = X_t theta_t`` with Gaussian ``X_t`` and
``theta_t`` a column of ``Theta = U B`` of rank ``r``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InvalidRank, SplitSizeError
from .linalg import thin_qr

__all__ = [
    "ProblemInstance",
    "generate_problem",
    "sample_split",
    "block_label_index",
    "save_problem",
    "load_problem",
]

_MAGIC = b"DIFMTRL1\n"


def block_label_index(label):
    """Map a block label (``"00"``, ``"0"``, ``1`` .. ``2*T_GD``) to its position."""
    if label == "00":
        return 0
    if label == "0":
        return 1
    k = int(label)
    if k < 1:
        raise ValueError(f"invalid block label {label!r}")
    return k + 1


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Ground truth plus per-task measurements.

    ``X`` has shape ``(T, n, d)`` and ``Y`` shape ``(T, n)``. When
    ``blocks`` is set, row ranges ``blocks[k] = (start, stop)`` partition every
    task's rows; position 0 is block ``"00"``, 1 is ``"0"``, ``k + 1`` is block ``k``.
    """

    d: int
    T: int
    r: int
    n: int
    seed: int
    kappa_target: float
    Ustar: np.ndarray
    Bstar: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    sigma_profile: str = "geometric"
    blocks: Optional[tuple] = None
    split_T_GD: Optional[int] = None

    @property
    def ThetaStar(self):
        return self.Ustar @ self.Bstar

    @cached_property
    def _sigmas(self):
        return np.linalg.svd(self.Bstar, compute_uv=False)

    @property
    def sigma_max(self):
        return float(self._sigmas[0])

    @property
    def sigma_min(self):
        return float(self._sigmas[-1])

    @property
    def kappa(self):
        return self.sigma_max / self.sigma_min

    @property
    def mu_measured(self):
        col_sq = np.sum(self.Bstar**2, axis=0)
        return float(np.sqrt(col_sq.max() * self.T / (self.r * self.sigma_max**2)))

    @property
    def is_split(self):
        return self.blocks is not None

    def block(self, label, tasks=None):
        """Return ``(X, Y)`` restricted to one sample-split block.

        Without a split, every label maps to the full data.
        """
        X, Y = self.X, self.Y
        if tasks is not None:
            X, Y = X[tasks], Y[tasks]
        if self.blocks is None:
            return X, Y
        lo, hi = self.blocks[block_label_index(label)]
        return X[:, lo:hi, :], Y[:, lo:hi]

    def metadata(self):
        return {
            "d": self.d,
            "T": self.T,
            "r": self.r,
            "n": self.n,
            "seed": self.seed,
            "kappa_target": self.kappa_target,
            "kappa": self.kappa,
            "mu_measured": self.mu_measured,
            "sigma_profile": self.sigma_profile,
            "split_T_GD": self.split_T_GD,
        }


def _singular_profile(r, kappa, profile):
    if profile == "geometric":
        if r == 1:
            return np.ones(1)
        # descending from kappa to 1
        return kappa ** (np.arange(r - 1, -1, -1) / (r - 1))
    if profile == "equal":
        return np.ones(r)
    raise ValueError(f"unknown singular value profile {profile!r}")


def generate_problem(d, T, r, n, kappa_target=1.0, seed=0, sigma_profile="geometric"):
    """Draw a rank-``r`` problem with condition number ``kappa_target``.

    ``U*`` and ``V*`` are Q-factors of seeded Gaussian matrices, singular
    values are spaced geometrically in ``[1, kappa_target]`` and each task's
    design is drawn from its own substream keyed by ``(seed, t)``.
    """
    if not (1 <= r <= min(d, T)):
        raise InvalidRank(f"rank r={r} must satisfy 1 <= r <= min(d, T) = {min(d, T)}")
    if n < 1:
        raise ValueError("n must be positive")
    if kappa_target < 1:
        raise ValueError("kappa_target must be >= 1")
    Ustar, _ = thin_qr(np.random.default_rng([seed, 0]).standard_normal((d, r)))
    Vstar, _ = thin_qr(np.random.default_rng([seed, 1]).standard_normal((T, r)))
    sigma = _singular_profile(r, float(kappa_target), sigma_profile)
    Bstar = sigma[:, None] * Vstar.T
    Theta = Ustar @ Bstar
    X = np.empty((T, n, d))
    for t in range(T):
        X[t] = np.random.default_rng([seed, 2, t]).standard_normal((n, d))
    Y = np.einsum("tnd,dt->tn", X, Theta)
    return ProblemInstance(
        d=d, T=T, r=r, n=n, seed=seed, kappa_target=float(kappa_target),
        Ustar=Ustar, Bstar=Bstar, X=X, Y=Y, sigma_profile=sigma_profile,
    )


def sample_split(problem, T_GD):
    """Partition each task's rows into ``2*T_GD + 2`` equal contiguous blocks."""
    if T_GD < 1:
        raise ValueError("T_GD must be >= 1 for sample splitting")
    nblocks = 2 * T_GD + 2
    if problem.n % nblocks:
        raise SplitSizeError(problem.n, nblocks)
    m = problem.n // nblocks
    blocks = tuple((k * m, (k + 1) * m) for k in range(nblocks))
    return dataclasses.replace(problem, blocks=blocks, split_T_GD=T_GD)


def save_problem(problem, path):
    """Write a problem as a JSON header line followed by row-major float64 arrays."""
    arrays = {"Ustar": problem.Ustar, "Bstar": problem.Bstar, "X": problem.X, "Y": problem.Y}
    header = problem.metadata()
    header["arrays"] = [[k, list(v.shape)] for k, v in arrays.items()]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_problem(path):
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise ValueError(f"{path}: not a problem file")
        header = json.loads(fh.readline())
        arrays = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise DimensionMismatch(f"{path}: truncated array {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    p = ProblemInstance(
        d=header["d"], T=header["T"], r=header["r"], n=header["n"], seed=header["seed"],
        kappa_target=header["kappa_target"], sigma_profile=header["sigma_profile"], **arrays,
    )
    if header.get("split_T_GD"):
        p = sample_split(p, header["split_T_GD"])
    return p
