import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riemvr.exceptions import ConfigError, StructuralError
from riemvr.oracles import gradient_check
from riemvr.problems import (
    IndexBatch,
    QuadraticProblem,
    RayleighProblem,
    load_samples_csv,
    make_online,
    make_quadratic,
    make_rayleigh,
    online_batch_size,
    partition_indices,
)


def test_identical_components_optimum():
    b = np.array([1.0, -2.0, 0.5])
    P = make_quadratic(4, 3, 1.0, 1.0, seed=0, centers=b)
    assert np.allclose(P.meta.x_star, b, atol=1e-12)
    assert abs(P.meta.f_star) <= 1e-12


def test_single_component_meta_exact():
    P = QuadraticProblem(np.diag([0.3, 2.0])[None], np.zeros((1, 2)))
    assert (P.meta.mu, P.meta.L) == (0.3, 2.0)
    x = np.array([1.0, 1.0])
    assert P.value(x) == P.component_value(0, x)


def test_quadratic_gradient_at_optimum_vanishes():
    P = make_quadratic(20, 6, 0.1, 1.0, seed=3)
    assert np.max(np.abs(P.full_gradient(P.meta.x_star))) <= 1e-12
    assert P.value(P.meta.x_star) == pytest.approx(P.meta.f_star, abs=1e-12)


def test_quadratic_spectrum_and_smoothness():
    P = make_quadratic(30, 8, 0.1, 1.0, seed=1)
    eig = np.linalg.eigvalsh(P.H_mean)
    assert eig[0] == pytest.approx(0.1, abs=1e-12) and eig[-1] == pytest.approx(1.0, abs=1e-12)
    assert P.meta.L_components <= 1.0 + 1e-12
    with pytest.raises(ConfigError):
        make_quadratic(3, 3, 2.0, 1.0)


def test_unit_quadratic_gradient():
    # f_i = 1/2 ||x - b_i||^2 has gradient x - b_i
    b = np.array([[1.0, 2.0], [0.0, -1.0]])
    P = QuadraticProblem(np.stack([np.eye(2)] * 2), b)
    x = np.array([0.5, 0.5])
    assert np.array_equal(P.component_gradient(1, x), x - b[1])


def test_rayleigh_examples():
    P = make_rayleigh([[1.0, 0.0]])
    assert P.meta.f_star == pytest.approx(-1.0)
    assert min(np.linalg.norm(P.meta.x_star - s * np.array([1.0, 0])) for s in (1, -1)) <= 1e-12
    P = make_rayleigh([[2.0, 0.0], [0.0, 1.0]])
    assert P.meta.f_star == pytest.approx(-4.0)
    P = make_rayleigh([[1.0, 0.0], [0.0, 1.0]])
    assert P.value(np.array([1.0, 0.0])) == -1.0
    # A proportional to I: every unit vector is optimal
    y = np.array([0.6, 0.8])
    assert P.value(y) == pytest.approx(-1.0) and np.allclose(P.full_gradient(y), 0.0, atol=1e-15)
    assert P.meta.L == pytest.approx(3.0)


def test_rayleigh_component_gradient_orthogonal_sample():
    P = make_rayleigh([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(P.component_gradient(0, np.array([1.0, 0.0])), [0.0, 0.0])


def test_rayleigh_gradient_on_circle():
    P = make_rayleigh([[1.0, 0.0]])
    x = np.array([1.0, 1.0]) / math.sqrt(2)
    # ambient -2 (z.x) z = (-sqrt2, 0), projected onto the tangent line at x
    assert np.allclose(P.component_gradient(0, x), [-1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-15)


def test_rayleigh_top_eigenvector_is_stationary():
    A = np.array([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]])
    w, V = np.linalg.eigh(A)
    Z = V * np.sqrt(w)  # Z^T Z = A
    P = RayleighProblem(Z.T)
    assert np.max(np.abs(P.full_gradient(V[:, -1]))) <= 1e-10
    assert P.meta.f_star == pytest.approx(-w[-1])


def test_rayleigh_large_dimension_has_unknown_optimum():
    P = RayleighProblem(np.random.default_rng(0).standard_normal((80, 70)))
    assert P.meta.f_star is None and P.dist_to_opt(P.manifold.random_point(np.random.default_rng(1))) is None
    assert P.lam_max > 0


def test_rayleigh_structural_errors():
    with pytest.raises(StructuralError):
        make_rayleigh([[1.0, 0.0], [1.0, 0.0, 0.0]])
    P = make_rayleigh([[1.0, 0.0]])
    with pytest.raises(StructuralError):
        P.component_gradient(1, np.array([1.0, 0.0]))
    with pytest.raises(StructuralError):
        P.batch_gradient(IndexBatch(np.array([], dtype=int)), np.array([1.0, 0.0]))


def test_batches():
    P = make_quadratic(6, 3, 0.5, 1.0, seed=0)
    x = np.ones(3)
    assert np.allclose(P.batch_gradient(P.all_indices(), x), P.full_gradient(x), atol=1e-15)
    assert np.allclose(P.minibatch_gradient(IndexBatch(np.array([2])), x), P.component_gradient(2, x))
    with pytest.raises(StructuralError):
        P.batch_gradient(IndexBatch(np.array([1, 1])), x)
    with pytest.raises(StructuralError):
        P.batch_gradient(IndexBatch(np.array([6])), x)
    with pytest.raises(ConfigError):
        P.sample_batch(7, np.random.default_rng(0))


@pytest.mark.parametrize("b", [1, 2, 3])
def test_minibatch_unbiased_by_enumeration(b):
    P = make_quadratic(6, 3, 0.2, 1.0, seed=2)
    x = np.array([0.3, -1.0, 2.0])
    subsets = list(itertools.combinations(range(6), b))
    mean = sum(P.batch_gradient(IndexBatch(np.array(s)), x) for s in subsets) / len(subsets)
    assert np.allclose(mean, P.full_gradient(x), atol=1e-13)


def test_identical_components_batch_invariant():
    P = make_quadratic(3, 2, 1.0, 1.0, seed=0, centers=[1.0, 2.0])
    x = np.array([0.0, 5.0])
    for s in ([0], [1, 2], [0, 1, 2]):
        assert np.allclose(P.batch_gradient(IndexBatch(np.array(s)), x), P.full_gradient(x))


def test_gradient_correctness_all_problem_types():
    rng = np.random.default_rng(5)
    probs = [
        make_quadratic(10, 5, 0.1, 1.0, seed=4),
        make_rayleigh(rng.standard_normal((12, 6)) / math.sqrt(12)),
        make_online({"kind": "atoms", "atoms": rng.standard_normal((3, 4))}),
        make_online({"kind": "gaussian", "cov": np.diag([2.0, 1.0, 0.5])}, scale=2.0),
    ]
    for P in probs:
        assert gradient_check(P, points=25, directions=5)["pass"]


@given(st.integers(0, 10**6))
def test_smoothness_certificate(seed):
    rng = np.random.default_rng(seed)
    for P in (make_quadratic(8, 4, 0.1, 1.0, seed=1), make_rayleigh(np.eye(3)[[0, 0, 1, 2]] * [[1.0], [0.5], [0.7], [0.2]])):
        M = P.manifold
        x = M.random_point(rng)
        y = M.exp(x, M.random_tangent(x, rng, scale=0.5))
        gap = np.linalg.norm(P.full_gradient(x) - M.transport(y, x, P.full_gradient(y)))
        assert gap <= P.meta.L * M.dist(x, y) * (1 + 1e-6) + 1e-14


@given(st.integers(0, 10**6))
def test_quadratic_strong_convexity(seed):
    P = make_quadratic(8, 4, 0.1, 1.0, seed=2)
    rng = np.random.default_rng(seed)
    x, y = 3 * rng.standard_normal(4), 3 * rng.standard_normal(4)
    lower = P.value(x) + P.full_gradient(x) @ (y - x) + 0.05 * np.sum((y - x) ** 2)
    assert P.value(y) >= lower - 1e-9


def test_online_single_atom_is_deterministic():
    P = make_online({"kind": "atoms", "atoms": [[1.0, 2.0]]})
    assert P.meta.sigma == 0.0 and math.isinf(P.n)
    x = np.array([0.6, 0.8])
    batch = P.sample_batch(5, np.random.default_rng(0))
    assert np.allclose(P.batch_gradient(batch, x), P.full_gradient(x))
    assert np.allclose(P.full_gradient(x), make_rayleigh([[1.0, 2.0]]).full_gradient(x))


def test_online_two_atoms_match_finite_sum():
    Z = np.array([[1.0, 0.5], [-0.3, 2.0]])
    P = make_online({"kind": "atoms", "atoms": Z}, scale=2.0)
    F = make_rayleigh(Z)
    x = np.array([0.8, -0.6])
    assert np.allclose(P.full_gradient(x), F.full_gradient(x), atol=1e-14)
    assert P.value(x) == pytest.approx(F.value(x))
    assert P.meta.f_star == pytest.approx(F.meta.f_star)


def test_online_gaussian_monte_carlo_mean():
    P = make_online({"kind": "gaussian", "cov": np.eye(2)})
    x = np.array([0.6, 0.8])
    rng = np.random.default_rng(11)
    G = np.array([P.batch_gradient(P.sample_batch(1, rng), x) for _ in range(20_000)])
    G = np.concatenate([G] + [P._sample_gradients(P.draw(80_000, rng), x)])
    se = G.std(axis=0) / math.sqrt(len(G))
    assert np.all(np.abs(G.mean(axis=0) - P.full_gradient(x)) <= 3 * se + 1e-15)


def test_online_batch_size():
    assert online_batch_size(1.0, 0.1) == 200
    assert online_batch_size(0.0, 0.1) == 1
    with pytest.raises(ConfigError):
        online_batch_size(1.0, 0.0)


def test_csv_loading(tmp_path):
    path = tmp_path / "z.csv"
    np.savetxt(path, np.array([[1.0, 0.0], [0.0, 2.0]]), delimiter=",")
    P = make_rayleigh(load_samples_csv(path))
    assert P.meta.f_star == pytest.approx(-4.0)
    with pytest.raises(FileNotFoundError):
        load_samples_csv(tmp_path / "missing.csv")


def test_partitions():
    parts = partition_indices(10, 3)
    assert [len(p) for p in parts] == [4, 3, 3]
    parts = partition_indices(20, 4, "shard-dirichlet:0.5", np.random.default_rng(0))
    assert sorted(np.concatenate(parts).tolist()) == list(range(20))
    assert all(len(p) >= 1 for p in parts)
    for bad in ("round-robin", "shard-dirichlet:-1"):
        with pytest.raises(ConfigError):
            partition_indices(10, 2, bad)
    with pytest.raises(ConfigError):
        partition_indices(3, 4)
