import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from difaltgd.errors import DimensionMismatch, NotSymmetric, RankDeficient, Underdetermined
from difaltgd.linalg import (
    batched_least_squares,
    extreme_singular_values,
    least_squares,
    subspace_distance,
    symmetric_eigenvalues,
    thin_qr,
)
from oracles import (
    gram_schmidt,
    jacobi_singular_values,
    normal_equations,
    power_deflation_eigs,
    random_orthogonal,
    subspace_distance_oracle,
)


def test_qr_identity():
    Q, R = thin_qr(np.eye(3))
    np.testing.assert_array_equal(Q, np.eye(3))
    np.testing.assert_array_equal(R, np.eye(3))


def test_qr_positive_diagonal_forces_identity_q():
    Q, R = thin_qr(np.diag([2.0, 3.0]))
    np.testing.assert_allclose(Q, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(R, np.diag([2.0, 3.0]), atol=1e-15)


def test_qr_flips_negative_diagonal():
    Q, R = thin_qr(np.diag([-2.0, 3.0]))
    assert np.all(np.diag(R) > 0)
    np.testing.assert_allclose(Q @ R, np.diag([-2.0, 3.0]), atol=1e-15)


def test_qr_random_reconstruction():
    M = np.random.default_rng(5).standard_normal((5, 2))
    Q, R = thin_qr(M)
    np.testing.assert_allclose(Q.T @ Q, np.eye(2), atol=1e-10)
    assert np.linalg.norm(Q @ R - M) <= 1e-10 * np.linalg.norm(M)
    assert np.allclose(np.tril(R, -1), 0)


def test_qr_rank_deficient_names_column():
    M = np.ones((4, 3))
    M[:, 0] = [1, 2, 3, 4]
    M[:, 2] = [0, 1, 0, 1]
    M[:, 1] = 2 * M[:, 0]
    with pytest.raises(RankDeficient) as info:
        thin_qr(M)
    assert info.value.column == 1


@settings(max_examples=60, deadline=None)
@given(d=st.integers(1, 12), extra=st.integers(0, 6), seed=st.integers(0, 2**31))
def test_qr_properties(d, extra, seed):
    r = max(1, d - extra)
    M = np.random.default_rng(seed).standard_normal((d, r))
    Q, R = thin_qr(M)
    assert np.max(np.abs(Q.T @ Q - np.eye(r))) <= 1e-10
    assert np.all(np.diag(R) > 0)
    assert np.all(np.tril(R, -1) == 0)
    assert np.linalg.norm(Q @ R - M) <= 1e-10 * np.linalg.norm(M)


def test_least_squares_identity():
    np.testing.assert_allclose(least_squares(np.eye(3), [1.0, 2.0, 3.0]), [1, 2, 3], atol=1e-15)


def test_least_squares_consistent_system():
    A = np.random.default_rng(11).standard_normal((6, 2))
    b = least_squares(A, A @ np.array([1.0, -1.0]))
    np.testing.assert_allclose(b, [1.0, -1.0], atol=1e-10)


def test_least_squares_matches_normal_equations():
    rng = np.random.default_rng(12)
    A = rng.standard_normal((9, 3))
    y = rng.standard_normal(9)
    np.testing.assert_allclose(least_squares(A, y), normal_equations(A, y), atol=1e-8)


def test_least_squares_errors():
    with pytest.raises(Underdetermined):
        least_squares(np.ones((2, 3)), np.ones(2))
    with pytest.raises(RankDeficient):
        least_squares(np.ones((4, 2)), np.ones(4))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 20), seed=st.integers(0, 2**31))
def test_least_squares_residual_orthogonal(n, seed):
    rng = np.random.default_rng(seed)
    r = rng.integers(1, n + 1)
    A = rng.standard_normal((n, r))
    y = rng.standard_normal(n)
    b = least_squares(A, y)
    assert np.linalg.norm(A.T @ (y - A @ b)) <= 1e-8 * np.linalg.norm(A, 2) * np.linalg.norm(y)


def test_batched_least_squares_matches_loop():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((5, 8, 3))
    y = rng.standard_normal((5, 8))
    out = batched_least_squares(A, y)
    for k in range(5):
        np.testing.assert_allclose(out[k], normal_equations(A[k], y[k]), atol=1e-10)


def test_subspace_distance_trivial_cases():
    U = gram_schmidt(np.random.default_rng(0).standard_normal((6, 2)))
    assert subspace_distance(U, U) <= 1e-15
    assert subspace_distance(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])) == 1.0


def test_subspace_distance_jacobi_oracle():
    rng = np.random.default_rng(7)
    U1 = gram_schmidt(rng.standard_normal((6, 2)))
    U2 = gram_schmidt(rng.standard_normal((6, 2)))
    assert abs(subspace_distance(U1, U2) - subspace_distance_oracle(U1, U2)) <= 1e-10


def test_subspace_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        subspace_distance(np.eye(4)[:, :2], np.eye(4)[:, :3])


@settings(max_examples=40, deadline=None)
@given(d=st.integers(2, 10), seed=st.integers(0, 2**31))
def test_subspace_distance_rotation_invariance(d, seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, d + 1))
    U1 = gram_schmidt(rng.standard_normal((d, r)))
    U2 = gram_schmidt(rng.standard_normal((d, r)))
    Q1, Q2 = random_orthogonal(r, rng), random_orthogonal(r, rng)
    base = subspace_distance(U1, U2)
    assert subspace_distance(U1, U1 @ Q1) <= 1e-10
    assert abs(subspace_distance(U1 @ Q1, U2 @ Q2) - base) <= 1e-10
    assert 0.0 <= base <= 1.0


def test_extreme_singular_values_trivial():
    assert extreme_singular_values(np.diag([3.0, 1.0])) == (3.0, 1.0)
    assert extreme_singular_values(np.eye(4)) == (1.0, 1.0)


def test_extreme_singular_values_power_oracle():
    M = np.random.default_rng(8).standard_normal((8, 3))
    vals, _ = power_deflation_eigs(M.T @ M, 3)
    smax, smin = extreme_singular_values(M)
    np.testing.assert_allclose([smax, smin], np.sqrt([vals[0], vals[-1]]), rtol=1e-8)
    np.testing.assert_allclose(jacobi_singular_values(M)[[0, -1]], [smax, smin], rtol=1e-9)


def test_extreme_singular_values_rejects_nan():
    with pytest.raises(ValueError):
        extreme_singular_values(np.array([[np.nan]]))


def test_symmetric_eigenvalues():
    np.testing.assert_allclose(symmetric_eigenvalues(np.eye(3)), [1, 1, 1])
    np.testing.assert_allclose(symmetric_eigenvalues([[0.0, 1.0], [1.0, 0.0]]), [1, -1], atol=1e-15)
    W = 0.5 * (np.ones((3, 3)) - np.eye(3))
    np.testing.assert_allclose(symmetric_eigenvalues(W), [1, -0.5, -0.5], atol=1e-14)


def test_symmetric_eigenvalues_characteristic_identity():
    S = np.random.default_rng(3).standard_normal((4, 4))
    S = S + S.T
    for lam in symmetric_eigenvalues(S):
        assert abs(np.linalg.det(S - lam * np.eye(4))) <= 1e-9 * np.linalg.norm(S) ** 4


def test_symmetric_eigenvalues_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        symmetric_eigenvalues([[0.0, 1.0], [0.0, 0.0]])
