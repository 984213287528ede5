import math

import numpy as np
import pytest

from riemvr import distributed as D
from riemvr.compression import Identity, RandK
from riemvr.exceptions import ConfigError
from riemvr.geometry import Euclidean
from riemvr.oracles import marina_atoms
from riemvr.optimizers import OptimizerConfig, rgd_run
from riemvr.problems import make_quadratic, make_rayleigh


def workers_for(n=4, d=5, seed=0):
    return D.split_problem(make_quadratic(n, d, 0.1, 1.0, seed=seed), n)


def test_defaults():
    assert D.default_stepsize_marina(2.0, 0.3, 0.0, 5) == 0.5
    assert D.default_stepsize_marina(1, 0.5, 4, 4) == 0.5
    assert D.default_stepsize_marina(1, 1 / 11, 10, 10) == pytest.approx(1 / (1 + math.sqrt(10)), rel=1e-14)
    assert D.default_stepsize_marina(1, 1 / 11, 10, 10) == pytest.approx(0.2403, abs=1e-4)
    assert D.default_p_marina(10, 10) == 1.0
    assert D.default_p_marina(1, 10) == 0.1
    assert D.default_p_marina(5, 50) == 0.1
    assert D.expected_comm_per_round(1.0, 3, 10, 4) == 10
    assert D.expected_comm_per_round(0.5, 2, 10, 4) == 6
    rho, d = 3, 12
    assert D.expected_comm_per_round(rho / d, rho, d) == pytest.approx(rho * (2 - rho / d))
    assert D.default_stepsize_marina_pl(1.0, 1.0, 0.0, 3, 0.1) == 1.0
    assert D.default_stepsize_marina_pl(1.0, 1.0, 0.0, 3, 1.0) == 0.5
    with pytest.raises(ConfigError):
        D.default_p_marina(11, 10)


def test_identity_reproduces_gd_per_iterate():
    workers = workers_for(8, 6, seed=3)
    glob = D.WorkerAverage(workers)
    objective, ws, server, coin = D.init_marina(workers, np.zeros(6), seed=1)
    x = np.zeros(6)
    worst = 0.0
    for _ in range(300):
        D.marina_round(objective, ws, server, 0.7, 0.25, Identity(), coin)
        x = x - 0.7 * glob.full_gradient(x)
        worst = max(worst, float(np.max(np.abs(server.x - x))))
    assert worst <= 1e-12


def test_p1_every_round_dense():
    workers = workers_for(4, 5)
    tr = D.rmarina_run(workers, np.ones(5), 0.5, p=1.0, compressor=RandK(2), K=20, seed=0)
    assert tr.summary["dense_rounds"] == 20
    comm = tr.column("comm_coords")
    assert np.all(np.diff(comm) == 5 * 4)
    gd = rgd_run(D.WorkerAverage(workers), np.ones(5), OptimizerConfig(eta=0.5, K=20))
    assert np.array_equal(tr.x_final, gd.x_final)


def test_ledger_matches_realized_messages():
    workers = workers_for(3, 10)
    tr = D.rmarina_run(workers, np.ones(10), 0.3, p=0.2, compressor=RandK(3), K=200, seed=4)
    server = tr.summary["_server"]
    realized = np.sum(server.round_costs, axis=0) + 10
    assert np.array_equal(server.comm_ledger, realized)
    dense = tr.summary["dense_rounds"]
    assert int(server.comm_ledger.sum()) == 3 * (10 + dense * 10 + (200 - dense) * 3)
    assert tr.records[-1]["comm_coords"] == int(server.comm_ledger.sum())


def test_aggregation_exact_after_every_round():
    workers = workers_for(5, 6, seed=2)
    objective, ws, server, coin = D.init_marina(workers, np.zeros(6), seed=3)
    for _ in range(50):
        D.marina_round(objective, ws, server, 0.4, 0.3, RandK(2), coin)
        assert D.check_aggregation(server, ws) <= 1e-14


def test_order_independent_aggregation():
    rng = np.random.default_rng(0)
    vecs = rng.standard_normal((9, 4)) * 10.0 ** rng.integers(-8, 8, size=(9, 1))
    base = D.exact_mean(vecs)
    for _ in range(10):
        assert np.array_equal(D.exact_mean(vecs[rng.permutation(9)]), base)


def test_single_worker_estimator_unbiased_by_enumeration():
    P = make_quadratic(3, 4, 0.2, 1.0, seed=1)
    workers = [P]
    rng = np.random.default_rng(2)
    x = rng.standard_normal(4)
    g = [P.full_gradient(x) + rng.standard_normal(4)]
    x_new = x - 0.3 * g[0]
    # unbiased given an exact previous estimator
    atoms = marina_atoms(workers, x, x_new, [P.full_gradient(x)], 0.25, RandK(1))
    assert sum(w for w, _ in atoms) == pytest.approx(1.0, abs=1e-14)
    mean = sum(w * v for w, v in atoms)
    assert np.allclose(mean, P.full_gradient(x_new), atol=1e-13)
    # otherwise the bias is the carried (1 - p) share of the old error
    atoms = marina_atoms(workers, x, x_new, g, 0.25, RandK(1))
    mean = sum(w * v for w, v in atoms)
    assert np.allclose(mean - P.full_gradient(x_new), 0.75 * (g[0] - P.full_gradient(x)), atol=1e-13)


@pytest.mark.parametrize("n,d", [(2, 3), (3, 4), (3, 2)])
def test_marina_recursion_inequality(n, d):
    P = make_quadratic(n, d, 0.1, 1.0, seed=n + d)
    workers = D.split_problem(P, n)
    L = max(w.meta.L for w in workers)
    op = RandK(1)
    omega = op.omega(d)
    rng = np.random.default_rng(d)
    for p in (0.1, 0.5):
        for _ in range(3):
            x = rng.standard_normal(d)
            gs = [w.full_gradient(x) + 0.5 * rng.standard_normal(d) for w in workers]
            g = np.mean(gs, axis=0)
            x_new = x - 0.3 * g
            target = D.WorkerAverage(workers).full_gradient(x_new)
            atoms = marina_atoms(workers, x, x_new, gs, p, op)
            lhs = sum(w * np.sum((v - target) ** 2) for w, v in atoms)
            dev = g - D.WorkerAverage(workers).full_gradient(x)
            rhs = (1 - p) * omega * L**2 / n * np.sum((x_new - x) ** 2) + (1 - p) * dev @ dev
            assert lhs <= rhs + 1e-9


def test_pl_variant():
    workers = workers_for(4, 5, seed=1)
    tr = D.rmarina_run_pl(workers, np.ones(5), p=1.0, compressor="identity", K=0, mu=0.1)
    glob = D.WorkerAverage(workers)
    assert tr.records[0]["lyapunov"] == pytest.approx(glob.value(np.ones(5)) - glob.meta.f_star, abs=1e-12)
    tr = D.rmarina_run_pl(workers, np.ones(5), p=1.0, compressor="identity", K=10, mu=0.1)
    assert tr.summary["eta"] == min(1 / glob.meta.L, 1 / (2 * 0.1))
    rng = np.random.default_rng(0)
    sphere_workers = [make_rayleigh(rng.standard_normal((3, 4))) for _ in range(2)]
    with pytest.raises(ConfigError):
        D.rmarina_run_pl(sphere_workers, np.array([1.0, 0, 0, 0]), eta=0.1, K=3)


def test_mismatched_manifolds_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        D.WorkerAverage([make_quadratic(2, 3, 0.1, 1.0), make_rayleigh(rng.standard_normal((2, 4)))])


def test_sphere_workers_stay_on_manifold():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((12, 5)) / math.sqrt(12)
    P = make_rayleigh(Z)
    workers = D.split_problem(P, 3)
    x0 = P.manifold.random_point(rng)
    tr = D.rmarina_run(workers, x0, 0.05, p="auto", compressor="randk:2", K=300, seed=1)
    assert abs(np.linalg.norm(tr.x_final) - 1) <= 1e-12
    g = tr.column("grad_norm_sq")
    assert g[-1] < g[0]


def test_worker_average_matches_equal_shards():
    P = make_quadratic(12, 4, 0.1, 1.0, seed=8)
    glob = D.WorkerAverage(D.split_problem(P, 4))
    x = np.arange(4.0)
    assert np.allclose(glob.full_gradient(x), P.full_gradient(x), atol=1e-14)
    assert np.allclose(glob.meta.x_star, P.meta.x_star, atol=1e-12)
    assert isinstance(glob.manifold, Euclidean)


def test_mean_comm_cost_matches_expectation():
    workers = workers_for(4, 20, seed=1)
    op = RandK(10)
    p = D.default_p_marina(op.rho(20), 20)
    tr = D.rmarina_run(workers, np.zeros(20), 0.2, p=p, compressor=op, K=4000, seed=2, trace_stride=4000)
    expected = D.expected_comm_per_round(p, 10, 20)
    assert tr.summary["mean_round_cost_per_worker"] == pytest.approx(expected, rel=0.02)


def test_closed_form_metrics_match_worker_sums():
    workers = workers_for(5, 4, seed=9)
    glob = D.WorkerAverage(workers)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(4)
        assert glob.value(x) == pytest.approx(math.fsum(w.value(x) for w in workers) / 5, rel=1e-13, abs=1e-13)
        assert np.allclose(glob.metric_gradient(x), glob.full_gradient(x), rtol=1e-13, atol=1e-13)
