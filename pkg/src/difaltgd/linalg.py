"""Dense linear-algebra kernels.

Thin wrappers over LAPACK (through numpy) that pin down the conventions the
rest of the package relies on: positive diagonal in QR, explicit rank checks,
and a one-sided subspace distance.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotSymmetric, RankDeficient, Underdetermined

__all__ = [
    "thin_qr",
    "batched_thin_qr",
    "least_squares",
    "batched_least_squares",
    "subspace_distance",
    "batched_subspace_distance",
    "extreme_singular_values",
    "symmetric_eigenvalues",
    "is_orthonormal",
]

RANK_TOL = 1e-12


def _check_finite(M):
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")


def _rank_check(R, tol):
    diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    scale = diag.max(axis=-1, keepdims=True)
    bad = ~(diag > tol * scale) | ~(scale > 0)
    if np.any(bad):
        # first offending column across the batch
        col = int(np.argmax(bad.reshape(-1, bad.shape[-1]).any(axis=0)))
        raise RankDeficient(col)


def batched_thin_qr(M, tol=RANK_TOL):
    """Thin QR of a stack of tall matrices with positive ``diag(R)``.

    Parameters
    ----------
    M : ndarray, shape (..., d, r)

    Returns
    -------
    Q : ndarray, shape (..., d, r)
    R : ndarray, shape (..., r, r)
    """
    M = np.asarray(M, dtype=float)
    if M.shape[-2] < M.shape[-1]:
        raise DimensionMismatch(f"thin QR needs rows >= cols, got {M.shape[-2:]}")
    _check_finite(M)
    Q, R = np.linalg.qr(M, mode="reduced")
    _rank_check(R, tol)
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    Q = Q * signs[..., None, :]
    R = R * signs[..., :, None]
    return Q, R


def thin_qr(M, tol=RANK_TOL):
    """Thin QR factorization ``M = Q R`` with a strictly positive R diagonal.

    Raises
    ------
    RankDeficient
        If some ``|R_jj|`` falls below ``tol`` times the largest one; the
        exception carries the offending column index.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatch("thin_qr expects a 2-D matrix")
    return batched_thin_qr(M, tol)


def least_squares(A, y):
    """Minimize ``||y - A b||`` through a QR factorization of ``A``.

    ``y`` may be a vector or a matrix of right-hand sides (column-wise).
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    n, r = A.shape
    if n < r:
        raise Underdetermined(f"{n} equations for {r} unknowns")
    if y.shape[0] != n:
        raise DimensionMismatch(f"A has {n} rows but y has {y.shape[0]}")
    Q, R = thin_qr(A)
    return solve_triangular(R, Q.T @ y, lower=False)


def batched_least_squares(A, y):
    """Column-wise least squares for a stack of problems.

    Parameters
    ----------
    A : ndarray, shape (k, n, r)
    y : ndarray, shape (k, n)

    Returns
    -------
    ndarray, shape (k, r)
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    k, n, r = A.shape
    if n < r:
        raise Underdetermined(f"{n} equations for {r} unknowns")
    if y.shape != (k, n):
        raise DimensionMismatch(f"expected y of shape {(k, n)}, got {y.shape}")
    Q, R = batched_thin_qr(A)
    rhs = np.einsum("knr,kn->kr", Q, y)
    return np.linalg.solve(R, rhs[..., None])[..., 0]


def subspace_distance(U1, U2):
    """Spectral norm of ``(I - U1 U1^T) U2``.

    One-sided as defined; for orthonormal inputs of equal shape it lies in [0, 1].
    """
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    if U1.shape != U2.shape:
        raise DimensionMismatch(f"basis shapes differ: {U1.shape} vs {U2.shape}")
    resid = U2 - U1 @ (U1.T @ U2)
    val = np.linalg.norm(resid, 2)
    return float(min(max(val, 0.0), 1.0))


def batched_subspace_distance(Us, U2):
    """``subspace_distance(U, U2)`` for every ``U`` in a stack of shape (k, d, r)."""
    Us = np.asarray(Us, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    if Us.shape[1:] != U2.shape:
        raise DimensionMismatch(f"basis shapes differ: {Us.shape[1:]} vs {U2.shape}")
    resid = U2 - Us @ (np.swapaxes(Us, 1, 2) @ U2)
    vals = np.linalg.svd(resid, compute_uv=False)[:, 0]
    return np.clip(vals, 0.0, 1.0)


def extreme_singular_values(M):
    """Return ``(sigma_max, sigma_min)`` over the min(rows, cols) singular values."""
    M = np.asarray(M, dtype=float)
    _check_finite(M)
    s = np.linalg.svd(M, compute_uv=False)
    return float(s[0]), float(s[-1])


def symmetric_eigenvalues(S, tol=1e-12):
    """Eigenvalues of a symmetric matrix, sorted in descending order."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch("expected a square matrix")
    if np.max(np.abs(S - S.T), initial=0.0) > tol:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    return np.linalg.eigvalsh(S)[::-1].copy()


def is_orthonormal(U, tol=1e-10):
    U = np.asarray(U)
    return bool(np.max(np.abs(U.T @ U - np.eye(U.shape[1]))) <= tol)
