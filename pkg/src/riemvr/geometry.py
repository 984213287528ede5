"""Manifolds in ambient coordinates: the unit sphere and Euclidean space.

Manifold methods work on plain numpy arrays so the optimizers stay cheap per
step. The :class:`Point` / :class:`TangentVector` wrappers and the module-level
functions (:func:`exp`, :func:`log`, ...) add the base-point and manifold
bookkeeping for callers who want it checked.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DomainError, StructuralError

# |<x, y>| closer than this to -1 counts as antipodal
ANTIPODAL_TOL = 1e-9
POINT_TOL = 1e-12
TANGENT_TOL = 1e-10


class Manifold:
    """Common interface. ``dim`` is the ambient dimension of the coordinates."""

    name = "manifold"
    dim: int
    curvature = 0.0

    def _check_shape(self, *arrays):
        for a in arrays:
            if np.shape(a) != (self.dim,):
                raise StructuralError(
                    f"expected a vector of length {self.dim} on {self}, got shape {np.shape(a)}"
                )

    def check_point(self, x, tol=POINT_TOL):
        self._check_shape(x)

    def check_tangent(self, x, v, tol=TANGENT_TOL):
        self._check_shape(x, v)

    def inner(self, x, u, v):
        return float(np.dot(u, v))

    def norm(self, x, v):
        return float(np.linalg.norm(v))

    def zero_vector(self, x):
        return np.zeros(self.dim)

    def exp(self, x, v):
        raise NotImplementedError

    def log(self, x, y):
        raise NotImplementedError

    def transport(self, x, y, v):
        raise NotImplementedError

    def dist(self, x, y):
        raise NotImplementedError

    def project_tangent(self, x, u):
        raise NotImplementedError

    def random_point(self, rng):
        raise NotImplementedError

    def random_tangent(self, x, rng, scale=1.0):
        return self.project_tangent(x, scale * rng.standard_normal(self.dim))


@dataclass(frozen=True)
class Euclidean(Manifold):
    dim: int
    name = "euclidean"

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("Euclidean dimension must be at least 1")

    def exp(self, x, v):
        self._check_shape(x, v)
        return x + v

    def log(self, x, y):
        self._check_shape(x, y)
        return y - x

    def transport(self, x, y, v):
        self._check_shape(x, y, v)
        return np.array(v, dtype=float, copy=True)

    def dist(self, x, y):
        self._check_shape(x, y)
        return float(np.linalg.norm(y - x))

    def project_tangent(self, x, u):
        self._check_shape(x, u)
        return np.array(u, dtype=float, copy=True)

    def random_point(self, rng):
        return rng.standard_normal(self.dim)

    def __str__(self):
        return f"Euclidean({self.dim})"


@dataclass(frozen=True)
class Sphere(Manifold):
    """Unit sphere in R^dim with the induced metric (sectional curvature 1)."""

    dim: int
    name = "sphere"
    curvature = 1.0

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError("sphere ambient dimension must be at least 2")

    def check_point(self, x, tol=POINT_TOL):
        self._check_shape(x)
        if abs(np.linalg.norm(x) - 1.0) > tol:
            raise DomainError(f"point has norm {np.linalg.norm(x)!r}, not 1")

    def check_tangent(self, x, v, tol=TANGENT_TOL):
        self._check_shape(x, v)
        if abs(np.dot(x, v)) > tol * max(1.0, float(np.linalg.norm(v))):
            raise DomainError("vector is not tangent at the base point")

    def exp(self, x, v):
        self._check_shape(x, v)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.array(x, dtype=float, copy=True)
        y = math.cos(nv) * x + (math.sin(nv) / nv) * v
        return y / np.linalg.norm(y)

    def dist(self, x, y):
        self._check_shape(x, y)
        # chordal form is accurate for both tiny and near-antipodal pairs
        half_chord = 0.5 * np.linalg.norm(x - y)
        return 2.0 * math.asin(min(1.0, half_chord))

    def _require_not_antipodal(self, x, y):
        if np.dot(x, y) <= -1.0 + ANTIPODAL_TOL:
            raise DomainError("antipodal points: the minimizing geodesic is not unique")

    def log(self, x, y):
        self._check_shape(x, y)
        self._require_not_antipodal(x, y)
        u = y - np.dot(x, y) * x
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return np.zeros(self.dim)
        return (self.dist(x, y) / nu) * u

    def transport(self, x, y, v):
        self._check_shape(x, y, v)
        c = np.dot(x, y)
        self._require_not_antipodal(x, y)
        if c >= 0.0:
            return v - (np.dot(y, v) / (1.0 + c)) * (x + y)
        # same map written along the geodesic; 1/(1+c) loses accuracy near -1
        w = y - c * x
        u = w / np.linalg.norm(w)
        t = self.dist(x, y)
        return v - np.dot(u, v) * ((1.0 - math.cos(t)) * u + math.sin(t) * x)

    def project_tangent(self, x, u):
        self._check_shape(x, u)
        return u - np.dot(x, u) * x

    def random_point(self, rng):
        x = rng.standard_normal(self.dim)
        return x / np.linalg.norm(x)

    def __str__(self):
        return f"Sphere({self.dim})"


@dataclass(frozen=True, eq=False)
class Point:
    manifold: Manifold
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))
        self.manifold.check_point(self.coords)


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: Point
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))
        self.base.manifold.check_tangent(self.base.coords, self.coords)

    @property
    def manifold(self):
        return self.base.manifold


def _same_manifold(*objs):
    m = objs[0].manifold
    for o in objs[1:]:
        if o.manifold != m:
            raise StructuralError(f"manifold mismatch: {m} vs {o.manifold}")
    return m


def _based_at(x, *vectors):
    for v in vectors:
        if v.base is not x and not (
            v.base.manifold == x.manifold and np.array_equal(v.base.coords, x.coords)
        ):
            raise StructuralError("tangent vector is not based at the given point")


def exp(x: Point, v: TangentVector) -> Point:
    _based_at(x, v)
    return Point(x.manifold, x.manifold.exp(x.coords, v.coords))


def log(x: Point, y: Point) -> TangentVector:
    m = _same_manifold(x, y)
    return TangentVector(x, m.log(x.coords, y.coords))


def transport(x: Point, y: Point, v: TangentVector) -> TangentVector:
    m = _same_manifold(x, y)
    _based_at(x, v)
    return TangentVector(y, m.transport(x.coords, y.coords, v.coords))


def inner(x: Point, u: TangentVector, v: TangentVector) -> float:
    _based_at(x, u, v)
    return x.manifold.inner(x.coords, u.coords, v.coords)


def dist(x: Point, y: Point) -> float:
    m = _same_manifold(x, y)
    return m.dist(x.coords, y.coords)


def project_tangent(x: Point, u) -> TangentVector:
    return TangentVector(x, x.manifold.project_tangent(x.coords, np.asarray(u, dtype=float)))


def zeta(kappa_min: float, D: float) -> float:
    """Curvature constant: sqrt|k| D / tanh(sqrt|k| D) for k < 0, else 1."""
    if D <= 0:
        raise ConfigError("diameter D must be positive")
    if kappa_min >= 0:
        return 1.0
    t = math.sqrt(-kappa_min) * D
    return t / math.tanh(t)


@dataclass(frozen=True)
class GeometryMeta:
    kappa_min: float
    kappa_max: float
    diameter_D: float
    zeta: float = field(init=False)

    def __post_init__(self):
        if self.kappa_min > self.kappa_max:
            raise ConfigError("kappa_min must not exceed kappa_max")
        object.__setattr__(self, "zeta", zeta(self.kappa_min, self.diameter_D))


def geometry_meta(manifold: Manifold, D: float = 1.0, kappa_min: float | None = None) -> GeometryMeta:
    """Curvature bounds and zeta for a region of diameter ``D``.

    ``kappa_min`` overrides the manifold's own curvature lower bound, which lets
    a flat problem be run with the stepsizes of a negatively curved one.
    """
    if D <= 0:
        raise ConfigError("diameter D must be positive")
    if isinstance(manifold, Sphere) and D >= math.pi:
        raise DomainError("on the sphere the diameter must stay below pi")
    k = manifold.curvature
    kmin = k if kappa_min is None else kappa_min
    return GeometryMeta(kappa_min=kmin, kappa_max=max(k, kmin), diameter_D=D)
