import dataclasses

import numpy as np
import pytest

from difaltgd.errors import InitRankCollapse
from difaltgd.linalg import is_orthonormal, subspace_distance
from difaltgd.spectral_init import (
    InitConfig,
    decentralized_power_method,
    spectral_initialization,
    truncated_sketch,
    truncation_threshold,
)
from difaltgd.synth import generate_problem
from difaltgd.topology import Network, build_network

PATH2 = np.array([[0, 1], [1, 0]], dtype=bool)


def solo(T):
    return Network.from_adjacency(np.zeros((1, 1), dtype=bool), task_partition=[np.arange(T)])


def test_threshold_zero_data():
    p = generate_problem(6, 4, 1, 5, seed=0)
    p = dataclasses.replace(p, Y=np.zeros_like(p.Y))
    alpha, _ = truncation_threshold(p, build_network(2, 1.0, 4, seed=0), InitConfig(kappa_hint=1, mu_hint=1))
    np.testing.assert_array_equal(alpha, 0.0)


def test_threshold_single_node():
    p = generate_problem(6, 4, 2, 5, seed=1)
    alpha, rec = truncation_threshold(p, solo(4), InitConfig(kappa_hint=1.0, mu_hint=1.0))
    assert alpha[0] == pytest.approx(9.0 / (5 * 4) * np.sum(p.Y**2), rel=1e-14)
    assert rec.payload_shape == ()


def test_threshold_two_nodes_reach_central_value():
    p = generate_problem(6, 6, 2, 5, kappa_target=2.0, seed=2)
    net = Network.from_adjacency(PATH2, "metropolis", [np.arange(0, 2), np.arange(2, 6)])
    alpha, rec = truncation_threshold(p, net, InitConfig(T_con_init=50))
    central = 9 * p.kappa**2 * p.mu_measured**2 / (5 * 6) * np.sum(p.Y**2)
    np.testing.assert_allclose(alpha, central, rtol=1e-9)
    assert rec.messages == 50 * 2 and rec.bytes == 8 * 100


def test_sketch_without_truncation():
    p = generate_problem(6, 4, 2, 5, seed=3)
    S = truncated_sketch(p, np.array([1, 3]), alpha=np.max(p.Y**2))
    np.testing.assert_allclose(S[:, 0], p.X[1].T @ p.Y[1] / 5, atol=1e-14)
    np.testing.assert_allclose(S[:, 1], p.X[3].T @ p.Y[3] / 5, atol=1e-14)


def test_sketch_zero_threshold():
    p = generate_problem(6, 4, 2, 5, seed=3)
    np.testing.assert_array_equal(truncated_sketch(p, np.arange(4), 0.0), 0.0)


def test_sketch_truncates_exactly_one_entry():
    p = generate_problem(6, 1, 1, 8, seed=4)
    y2 = np.sort(p.Y[0] ** 2)
    alpha = 0.5 * (y2[-1] + y2[-2])
    S = truncated_sketch(p, np.array([0]), alpha)
    keep = p.Y[0] ** 2 <= alpha
    assert (~keep).sum() == 1
    oracle = sum(p.X[0][i] * p.Y[0][i] for i in range(8) if keep[i]) / 8
    np.testing.assert_allclose(S[:, 0], oracle, atol=1e-14)


def test_single_node_matches_dense_eigensolver():
    p = generate_problem(20, 30, 2, 15, kappa_target=2.0, seed=5)
    net = solo(30)
    cfg = InitConfig(T_pm=100, T_con_init=0, shared_seed=1)
    res = spectral_initialization(p, net, cfg)
    S = res.sketches[0]
    _, vecs = np.linalg.eigh(S @ S.T)
    top = vecs[:, -2:]
    assert subspace_distance(top, res.U[0]) <= 1e-6


def test_identical_sketches_identical_output():
    rng = np.random.default_rng(0)
    S = rng.standard_normal((8, 3))
    net = Network.from_adjacency(PATH2, "metropolis")
    U, R, _, _ = decentralized_power_method([S, S], net, InitConfig(T_pm=1, T_con_init=0), r=2)
    np.testing.assert_array_equal(U[0], U[1])


def test_rank_collapse():
    net = solo(3)
    with pytest.raises(InitRankCollapse):
        decentralized_power_method([np.zeros((5, 3))], net, InitConfig(T_pm=2), r=2)


def _complete_graph_init(seed):
    p = generate_problem(40, 40, 2, 20, seed=1000 + seed)
    net = build_network(4, 1.0, 40, "metropolis", seed=seed)
    res = spectral_initialization(p, net, InitConfig(T_pm=100, T_con_init=30, shared_seed=seed))
    return p, net, res


@pytest.mark.parametrize("seed", range(20))
def test_fully_connected_structure(seed):
    p, _, res = _complete_graph_init(seed)
    spread = max(np.linalg.norm(a - b) for a in res.U for b in res.U)
    assert spread <= 1e-3
    assert all(is_orthonormal(U) for U in res.U)
    P = np.eye(40) - p.Ustar @ p.Ustar.T
    for a in res.U:
        for b in res.U:
            assert np.linalg.norm(P @ (a - b)) <= np.linalg.norm(a - b) + 1e-12
    # on a complete graph one Metropolis round is the exact mean, so every
    # node should hold the top-r eigenspace of the pooled sketch
    Theta = np.hstack(res.sketches)
    top = np.linalg.eigh(Theta @ Theta.T)[1][:, -2:]
    assert max(subspace_distance(top, U) for U in res.U) <= 1e-6


@pytest.mark.xfail(
    strict=False,
    reason="at n=20, d=T=40 the sketch noise puts the pooled-eigenspace error near 0.5; "
    "about 8 of 20 seeds land between 0.5 and 0.61",
)
def test_fully_connected_accuracy_bound():
    sds = []
    for seed in range(20):
        p, _, res = _complete_graph_init(seed)
        sds.append(max(subspace_distance(U, p.Ustar) for U in res.U))
    assert max(sds) <= 0.5


def test_more_rounds_improve_init():
    """Subspace error and node disagreement shrink with longer schedules."""
    sd = {}
    spread = {}
    for key, cfg in {"short": (3, 1), "long": (60, 15)}.items():
        sds, rhos = [], []
        for seed in range(20):
            p = generate_problem(30, 30, 2, 20, seed=500 + seed)
            net = build_network(10, 0.3, 30, "metropolis", seed=seed)
            res = spectral_initialization(p, net, InitConfig(T_pm=cfg[0], T_con_init=cfg[1], shared_seed=seed))
            sds.append(max(subspace_distance(U, p.Ustar) for U in res.U))
            rhos.append(max(np.linalg.norm(a - b) for a in res.U for b in res.U))
        sd[key], spread[key] = np.mean(sds), np.mean(rhos)
    assert sd["long"] < sd["short"]
    assert spread["long"] < spread["short"]


def test_broadcast_only_at_end_flag():
    p = generate_problem(20, 20, 2, 20, seed=8)
    net = build_network(5, 0.6, 20, "metropolis", seed=8)
    every = spectral_initialization(p, net, InitConfig(T_pm=30, T_con_init=8))
    once = spectral_initialization(p, net, InitConfig(T_pm=30, T_con_init=8, broadcast_every_round=False))
    # one alpha exchange, then per round one U exchange (+ broadcast)
    assert len(every.records) == 1 + 2 * 30
    assert len(once.records) == 1 + 30 + 1
    assert all(is_orthonormal(U) for U in once.U)
