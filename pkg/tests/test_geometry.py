import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riemvr import geometry as G
from riemvr.exceptions import ConfigError, DomainError, StructuralError
from riemvr.geometry import Euclidean, Point, Sphere, TangentVector


def test_euclidean_closed_forms():
    E = Euclidean(2)
    x = Point(E, [1.0, 2.0])
    assert np.array_equal(G.exp(x, TangentVector(x, [3.0, -1.0])).coords, [4.0, 1.0])
    o = Point(E, [0.0, 0.0])
    assert np.array_equal(G.log(o, Point(E, [2.0, 3.0])).coords, [2.0, 3.0])
    assert G.dist(o, Point(E, [3.0, 4.0])) == 5.0
    v = np.array([0.3, -2.0])
    assert np.array_equal(E.transport(o.coords, x.coords, v), v)


def test_sphere_quarter_turn():
    S = Sphere(2)
    x = Point(S, [1.0, 0.0])
    y = G.exp(x, TangentVector(x, [0.0, math.pi / 2]))
    assert np.allclose(y.coords, [0.0, 1.0], atol=1e-15)
    assert np.allclose(G.log(x, Point(S, [0.0, 1.0])).coords, [0.0, math.pi / 2], atol=1e-15)
    assert G.dist(x, Point(S, [0.0, 1.0])) == pytest.approx(math.pi / 2, abs=1e-15)


def test_sphere_transport_normal_vector_unchanged():
    S = Sphere(3)
    out = S.transport(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))
    assert np.allclose(out, [0, 0, 1.0], atol=1e-15)


def test_transport_along_geodesic_direction():
    # the unit velocity at x is carried to the velocity at y
    S = Sphere(2)
    x, y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert np.allclose(S.transport(x, y, np.array([0.0, 1.0])), [-1.0, 0.0], atol=1e-15)
    # an obtuse pair takes the other branch of the formula
    t = 2.5
    y = np.array([math.cos(t), math.sin(t)])
    assert np.allclose(S.transport(x, y, np.array([0.0, 1.0])), [-math.sin(t), math.cos(t)], atol=1e-15)


def test_zero_vector_and_self_cases():
    for M in (Sphere(3), Euclidean(3)):
        rng = np.random.default_rng(0)
        x = M.random_point(rng)
        assert np.array_equal(M.exp(x, np.zeros(3)), x)
        assert np.allclose(M.log(x, x), 0.0)
        v = M.random_tangent(x, rng)
        assert np.allclose(M.transport(x, x, v), v, atol=1e-15)
        assert M.dist(x, x) == 0.0


def test_projection():
    S = Sphere(3)
    x = np.array([1.0, 0, 0])
    assert np.array_equal(S.project_tangent(x, np.array([1.0, 1.0, 0])), [0, 1.0, 0])
    assert np.allclose(S.project_tangent(x, 3 * x), 0.0)


def test_inner_bilinear():
    S = Sphere(3)
    x = Point(S, [0.0, 0.0, 1.0])
    u, v = TangentVector(x, [2.0, 0, 0]), TangentVector(x, [3.0, 0, 0])
    assert G.inner(x, u, v) == 6.0
    assert G.inner(x, u, TangentVector(x, [0, 1.0, 0])) == 0.0


def test_antipodal_log_and_transport_refused_but_dist_is_pi():
    S = Sphere(3)
    x = np.array([1.0, 0, 0])
    with pytest.raises(DomainError):
        S.log(x, -x)
    with pytest.raises(DomainError):
        S.transport(x, -x, np.array([0, 1.0, 0]))
    assert S.dist(x, -x) == pytest.approx(math.pi)


def test_validation_errors():
    S = Sphere(3)
    with pytest.raises(DomainError):
        Point(S, [1.0, 1.0, 0])
    x = Point(S, [1.0, 0, 0])
    with pytest.raises(DomainError):
        TangentVector(x, [1.0, 0, 0])
    with pytest.raises(StructuralError):
        S.exp(np.array([1.0, 0]), np.array([0, 1.0]))
    with pytest.raises(StructuralError):
        G.dist(x, Point(Euclidean(3), [1.0, 0, 0]))
    y = Point(S, [0, 1.0, 0])
    with pytest.raises(StructuralError):
        G.exp(y, TangentVector(x, [0, 1.0, 0]))
    with pytest.raises(ConfigError):
        Sphere(1)
    with pytest.raises(ConfigError):
        Euclidean(0)


def test_zeta_values():
    assert G.zeta(0.5, 2.0) == 1.0
    assert G.zeta(-1.0, 1.0) == pytest.approx(1.0 / math.tanh(1.0), rel=1e-15)
    assert G.zeta(-1.0, 1.0) == pytest.approx(1.3130, abs=1e-4)
    assert G.zeta(-1.0, 1e-8) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ConfigError):
        G.zeta(-1.0, 0.0)


@given(st.floats(-5, -0.01), st.floats(0.01, 5), st.floats(0.01, 5))
def test_zeta_monotone(kappa, d1, d2):
    lo, hi = sorted((d1, d2))
    assert 1.0 <= G.zeta(kappa, lo) <= G.zeta(kappa, hi) + 1e-12
    assert G.zeta(kappa, lo) <= G.zeta(2 * kappa, lo) + 1e-12


def test_geometry_meta():
    assert G.geometry_meta(Sphere(3), 1.0).zeta == 1.0
    m = G.geometry_meta(Euclidean(3), 10.0)
    assert (m.kappa_min, m.zeta) == (0.0, 1.0)
    stress = G.geometry_meta(Euclidean(3), 10.0, kappa_min=-1.0)
    assert stress.zeta == pytest.approx(10.0 / math.tanh(10.0))
    assert stress.kappa_min <= stress.kappa_max
    with pytest.raises(DomainError):
        G.geometry_meta(Sphere(3), math.pi)


dims = st.integers(2, 8)
seeds = st.integers(0, 2**32 - 1)


@given(dims, seeds, st.floats(0.0, 0.9 * math.pi))
def test_roundtrip_and_norm_equals_distance(d, seed, r):
    S = Sphere(d)
    rng = np.random.default_rng(seed)
    x = S.random_point(rng)
    v = S.random_tangent(x, rng)
    nv = np.linalg.norm(v)
    if nv == 0:
        return
    v *= r / nv
    y = S.exp(x, v)
    assert abs(np.linalg.norm(y) - 1.0) <= 1e-12
    w = S.log(x, y)
    assert np.max(np.abs(w - v)) <= 1e-8
    assert abs(np.linalg.norm(w) - S.dist(x, y)) <= 1e-12
    assert abs(S.dist(x, y) - S.dist(y, x)) <= 1e-12


@given(dims, seeds)
def test_transport_isometry(d, seed):
    S = Sphere(d)
    rng = np.random.default_rng(seed)
    x, y = S.random_point(rng), S.random_point(rng)
    if np.dot(x, y) <= -1 + 1e-6:
        return
    u, v = S.random_tangent(x, rng), S.random_tangent(x, rng)
    tu, tv = S.transport(x, y, u), S.transport(x, y, v)
    assert abs(np.dot(tu, tv) - np.dot(u, v)) <= 1e-10
    assert abs(np.dot(y, tu)) <= 1e-10 * max(1.0, np.linalg.norm(tu))


@given(dims, seeds)
def test_projection_idempotent(d, seed):
    S = Sphere(d)
    rng = np.random.default_rng(seed)
    x = S.random_point(rng)
    u = rng.standard_normal(d)
    p = S.project_tangent(x, u)
    assert np.allclose(S.project_tangent(x, p), p, atol=1e-14)
    S.check_tangent(x, p)


@given(st.integers(3, 6), seeds, st.floats(0.0, 1.0))
def test_squared_distance_convex_on_small_caps(d, seed, t):
    S = Sphere(d)
    rng = np.random.default_rng(seed)
    c = S.random_point(rng)

    def near(scale):
        return S.exp(c, S.random_tangent(c, rng, scale=scale / math.sqrt(d)))

    p, x, y = near(0.3), near(0.3), near(0.3)
    f = lambda z: S.dist(z, p) ** 2  # noqa: E731
    z = S.exp(x, t * S.log(x, y))
    assert f(z) <= (1 - t) * f(x) + t * f(y) + 1e-9
