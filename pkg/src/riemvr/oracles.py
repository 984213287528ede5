"""Independent checks: finite differences, exact expectations by enumeration,
Lyapunov potentials and rate envelopes.

Nothing here calls into the optimizers' estimator code; expectations are
rebuilt from the problem's component gradients so that the two can be
compared.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, RefusalError, StructuralError
from .geometry import Sphere
from .problems import IndexBatch

MAX_ATOMS = 10_000


# --- finite differences -------------------------------------------------------


def finite_diff_directional(problem, x, v_unit, h=1e-5):
    """Central difference of f along the geodesic t -> Exp_x(t v)."""
    if not 1e-8 <= h <= 1e-3:
        raise ConfigError("h must lie in [1e-8, 1e-3]")
    M = problem.manifold
    v = np.asarray(v_unit, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ConfigError("direction must have unit norm")
    return (problem.value(M.exp(x, h * v)) - problem.value(M.exp(x, -h * v))) / (2.0 * h)


def finite_diff_component(problem, i, x, v_unit, h=1e-5):
    M = problem.manifold
    return (
        problem.component_value(i, M.exp(x, h * v_unit))
        - problem.component_value(i, M.exp(x, -h * v_unit))
    ) / (2.0 * h)


def gradient_check(problem, points=100, directions=5, seed=0, h=1e-6, tol=1e-5, components=3):
    """Compare <v, grad f(x)> with finite differences at random points and directions.

    Errors are relative to max(1, |<v, grad f>|). A few components are checked
    at every point as well.
    """
    rng = np.random.default_rng(seed)
    M = problem.manifold
    worst = 0.0
    for _ in range(points):
        x = M.random_point(rng)
        grad = problem.full_gradient(x)
        comps = []
        if math.isfinite(problem.n):
            comps = [int(i) for i in rng.choice(problem.n, size=min(components, problem.n), replace=False)]
        comp_grads = {i: problem.component_gradient(i, x) for i in comps}
        for _ in range(directions):
            v = M.random_tangent(x, rng)
            v /= np.linalg.norm(v)
            exact = float(np.dot(v, grad))
            err = abs(finite_diff_directional(problem, x, v, h) - exact) / max(1.0, abs(exact))
            worst = max(worst, err)
            for i in comps:
                exact_i = float(np.dot(v, comp_grads[i]))
                fd_i = finite_diff_component(problem, i, x, v, h)
                worst = max(worst, abs(fd_i - exact_i) / max(1.0, abs(exact_i)))
    return {"worst_error": worst, "pass": worst <= tol}


def convergence_order(f, grad, x, v, manifold, h=1e-3):
    """Error ratio of central differences at h and h/2; about 4 for smooth f."""

    def fd(step):
        return (f(manifold.exp(x, step * v)) - f(manifold.exp(x, -step * v))) / (2 * step)

    exact = float(np.dot(v, grad(x)))
    e1, e2 = abs(fd(h) - exact), abs(fd(h / 2) - exact)
    return e1 / e2 if e2 > 0 else math.inf


# --- exact expectations -------------------------------------------------------


@dataclass(frozen=True)
class LsvrgSpec:
    """R-LSVRG estimator at (x, y) with batches of size ``B`` drawn without replacement."""

    x: np.ndarray
    y: np.ndarray
    B: int = 1


@dataclass(frozen=True)
class PageSpec:
    """R-PAGE update from (x, g) to x_new: coin p, large batch B, small batch b."""

    x: np.ndarray
    x_new: np.ndarray
    g: np.ndarray
    p: float
    B: int
    b: int


def _subsets(n, size):
    count = math.comb(n, size)
    if count > MAX_ATOMS:
        raise RefusalError(f"{count} batches exceed the enumeration limit of {MAX_ATOMS}")
    return [np.array(s) for s in itertools.combinations(range(n), size)], 1.0 / count


def _mean_grad(problem, idx, x):
    return np.mean([problem.component_gradient(int(i), x) for i in idx], axis=0)


def enumerate_estimator(problem, spec):
    """All (probability, value) atoms of an estimator's distribution."""
    M = problem.manifold
    n = problem.n
    if isinstance(spec, LsvrgSpec):
        subsets, w = _subsets(n, spec.B)
        full_y = _mean_grad(problem, range(n), spec.y)
        atoms = []
        for s in subsets:
            gx = _mean_grad(problem, s, spec.x)
            gy = _mean_grad(problem, s, spec.y)
            atoms.append((w, gx - M.transport(spec.y, spec.x, gy - full_y)))
        return atoms
    if isinstance(spec, PageSpec):
        big, wB = _subsets(n, spec.B)
        small, wb = _subsets(n, spec.b)
        if len(big) + len(small) > MAX_ATOMS:
            raise RefusalError("instance too large to enumerate")
        atoms = [(spec.p * wB, _mean_grad(problem, s, spec.x_new)) for s in big]
        carried = M.transport(spec.x, spec.x_new, spec.g)
        for s in small:
            val = carried + _mean_grad(problem, s, spec.x_new) - M.transport(
                spec.x, spec.x_new, _mean_grad(problem, s, spec.x)
            )
            atoms.append(((1.0 - spec.p) * wb, val))
        return [(w, v) for w, v in atoms if w > 0]
    raise ConfigError(f"unknown estimator spec {type(spec).__name__}")


def brute_force_estimator_mean(problem, spec):
    atoms = enumerate_estimator(problem, spec)
    return np.sum([w * v for w, v in atoms], axis=0)


def brute_force_second_moment(problem, spec, center):
    atoms = enumerate_estimator(problem, spec)
    return float(sum(w * np.dot(v - center, v - center) for w, v in atoms))


def marina_atoms(worker_problems, x, x_new, g_workers, p, compressor):
    """Atoms of the aggregated R-MARINA estimator at x_new (shared coin, independent selections)."""
    M = worker_problems[0].manifold
    n = len(worker_problems)
    dense = np.mean([w.full_gradient(x_new) for w in worker_problems], axis=0)
    per_worker = []
    for w, gi in zip(worker_problems, g_workers):
        diff = w.full_gradient(x_new) - M.transport(x, x_new, w.full_gradient(x))
        carried = M.transport(x, x_new, M.project_tangent(x, gi))
        per_worker.append([(pr, carried + q) for pr, q in compressor.outcomes(diff)])
    total = math.prod(len(o) for o in per_worker)
    if total > MAX_ATOMS:
        raise RefusalError(f"{total} joint outcomes exceed the enumeration limit")
    atoms = [(p, dense)] if p > 0 else []
    if p < 1:
        for combo in itertools.product(*per_worker):
            w = (1.0 - p) * math.prod(c[0] for c in combo)
            atoms.append((w, M.project_tangent(x_new, sum(c[1] for c in combo) / n)))
    return atoms


# --- Lyapunov potentials ------------------------------------------------------


def lsvrg_coefficient(mu, L, p, zeta):
    return 3.0 * mu**2 / (64.0 * p * L**2 * zeta)


def lyapunov_lsvrg(problem, state, eta, p, zeta):
    """d^2(x, x*) + 3 mu^2/(64 p L^2 zeta) ||Exp_y^{-1}(x*)||^2; ``eta`` is not used by the potential."""
    meta, M = problem.meta, problem.manifold
    if meta.x_star is None:
        raise ConfigError("x* must be known")
    xs = meta.x_star
    return M.dist(state.x, xs) ** 2 + lsvrg_coefficient(meta.mu, meta.L, p, zeta) * (
        M.norm(state.y, M.log(state.y, xs)) ** 2
    )


def lyapunov_page_pl(problem, state, p):
    """f(x) - f* + (2/p) ||g - grad f(x)||^2."""
    if problem.meta.f_star is None:
        raise ConfigError("f* must be known")
    dev = state.g - problem.metric_gradient(state.x)
    return problem.value(state.x) - problem.meta.f_star + (2.0 / p) * float(np.dot(dev, dev))


# --- rate envelopes -----------------------------------------------------------


@dataclass(frozen=True)
class RateEnvelope:
    kind: str  # "linear" or "sublinear"
    value: float  # contraction factor, or the constant C of C / k
    slack: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "sublinear"):
            raise ConfigError(f"unknown envelope kind {self.kind!r}")
        if self.slack < 1:
            raise ConfigError("slack must be at least 1")
        if self.kind == "linear" and not 0 < self.value < 1:
            raise ConfigError("contraction factor must lie in (0, 1)")
        if self.kind == "sublinear" and not self.value > 0:
            raise ConfigError("constant must be positive")

    @classmethod
    def linear(cls, factor, slack=1.05):
        return cls("linear", factor, slack)

    @classmethod
    def sublinear(cls, C, slack=1.2):
        return cls("sublinear", C, slack)


def _series(trace, name):
    if isinstance(trace, dict):
        steps = np.asarray(trace["step"], dtype=float)
        vals = trace.get(name)
        vals = None if vals is None else np.asarray(vals, dtype=float)
    else:
        steps = trace.column("step")
        vals = trace.column(name)
    if vals is None or len(vals) == 0 or np.all(np.isnan(vals)):
        raise StructuralError(f"trace has no {name!r} values")
    return steps, vals


def check_rate(trace, envelope, k_min=10):
    """Compare a trace (a RunTrace or a dict of columns) against an envelope.

    Linear: every recorded lyapunov <= Phi^0 (factor slack)^k.
    Sublinear: running-min grad_norm_sq <= slack C / k for k >= k_min.
    """
    if envelope.kind == "linear":
        steps, vals = _series(trace, "lyapunov")
        phi0 = vals[0]
        bound = phi0 * (envelope.value * envelope.slack) ** steps
        mask = ~np.isnan(vals)
    else:
        steps, vals = _series(trace, "grad_norm_sq")
        vals = np.fmin.accumulate(vals)
        with np.errstate(divide="ignore"):
            bound = envelope.slack * envelope.value / steps
        mask = (steps >= k_min) & ~np.isnan(vals)
    if not mask.any():
        return {"pass": True, "worst_ratio": 0.0}
    v, bd = vals[mask], bound[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bd > 0, v / bd, np.where(v > 0, np.inf, 0.0))
    worst = float(np.max(ratio))
    return {"pass": bool(np.all(v <= bd)), "worst_ratio": worst}


def mean_trace(traces, columns=("lyapunov", "grad_norm_sq", "f_value")):
    """Seed average of traces recorded on the same step grid."""
    steps = traces[0].column("step")
    for t in traces[1:]:
        if not np.array_equal(t.column("step"), steps):
            raise StructuralError("traces are recorded on different step grids")
    out = {"step": steps}
    for c in columns:
        out[c] = np.mean([t.column(c) for t in traces], axis=0)
    return out


def mean_running_min(traces, name="grad_norm_sq"):
    """Seed average of per-seed running minima (the quantity bounded by min-gradient rates)."""
    return np.mean([t.running_min(name) for t in traces], axis=0)


# --- counting -----------------------------------------------------------------


class CountingOracle:
    """Wraps a problem and counts component gradients drawn by the optimizer.

    ``metric_gradient`` and ``value`` pass through uncounted.
    """

    def __init__(self, problem):
        self._p = problem
        self.count = 0
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self._p, name)

    def batch_gradient(self, batch, x):
        self.count += len(batch)
        self.calls += 1
        return self._p.batch_gradient(batch, x)

    def full_gradient(self, x):
        return self.batch_gradient(self._p.all_indices(), x)

    def component_gradient(self, i, x):
        return self.batch_gradient(IndexBatch(np.array([i])), x)

    def minibatch_gradient(self, batch, x):
        return self.batch_gradient(batch, x)

    def metric_gradient(self, x):
        return self._p.metric_gradient(x)


# --- analytic lemmas ----------------------------------------------------------


def stepsize_lemma_holds(a, b, eta):
    """a eta^2 + b eta <= 1, which the stepsize lemma guarantees for eta <= 1/(sqrt(a)+b)."""
    return a * eta * eta + b * eta <= 1.0 + 1e-12


def dot_product_identity_gap(grad, g, eta, M):
    """LHS minus RHS of the identity used in the descent step; should vanish."""
    grad, g = np.asarray(grad, float), np.asarray(g, float)
    lhs = -eta * np.dot(grad, g) + M * eta**2 / 2 * np.dot(g, g)
    rhs = (
        -eta / 2 * np.dot(grad, grad)
        - (1 / (2 * eta) - M / 2) * eta**2 * np.dot(g, g)
        + eta / 2 * np.dot(g - grad, g - grad)
    )
    return float(lhs - rhs)


# --- geometry invariants ------------------------------------------------------


def trig_distance_bound_violation(kappa, a, b, c, angle):
    """max(0, a^2 - (zeta(kappa, c) b^2 + c^2 - 2 b c cos A)); zeta is 1 for kappa >= 0."""
    from .geometry import zeta as zeta_fn

    z = zeta_fn(kappa, c) if kappa < 0 and c > 0 else 1.0
    return max(0.0, a * a - (z * b * b + c * c - 2.0 * b * c * math.cos(angle)))


def hyperbolic_side(kappa, b, c, angle):
    """Side opposite ``angle`` in a triangle of constant curvature kappa < 0 (law of cosines)."""
    s = math.sqrt(-kappa)
    ch = math.cosh(s * b) * math.cosh(s * c) - math.sinh(s * b) * math.sinh(s * c) * math.cos(angle)
    return math.acosh(max(1.0, ch)) / s


def distance_corollary_gap(manifold, x_s, x, g, eta, zeta=1.0):
    """RHS minus LHS of the one-step distance inequality for x_{s+1} = Exp(x_s, -eta g)."""
    x_next = manifold.exp(x_s, -eta * g)
    lhs = -float(np.dot(g, manifold.log(x_s, x)))
    rhs = (manifold.dist(x_s, x) ** 2 - manifold.dist(x_next, x) ** 2) / (2 * eta) + zeta * eta / 2 * float(
        np.dot(g, g)
    )
    return rhs - lhs


def sphere_triangle(manifold, x, y, z):
    """Side opposite x, adjacent sides and the angle at x for a sphere triangle."""
    u, v = manifold.log(x, y), manifold.log(x, z)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    cosA = float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
    return manifold.dist(y, z), nu, nv, math.acos(cosA)


def geometry_suite(trials_roundtrip=10_000, trials_triangle=1_000, seed=0, dims=(2, 3, 5, 10)):
    """Round trips, transport isometry and the trig distance bound on random sphere data."""
    from .geometry import Euclidean

    rng = np.random.default_rng(seed)
    rt_err = iso_err = tri_viol = 0.0
    per = max(1, trials_roundtrip // (2 * len(dims)))
    for d in dims:
        for M in (Sphere(d), Euclidean(d)):
            for _ in range(per):
                x = M.random_point(rng)
                v = M.random_tangent(x, rng, scale=rng.uniform(0.01, 3.0) / math.sqrt(d))
                if isinstance(M, Sphere):
                    nv = np.linalg.norm(v)
                    if nv >= math.pi - 1e-3:
                        v *= (math.pi - 1e-3) / nv
                y = M.exp(x, v)
                rt_err = max(rt_err, float(np.linalg.norm(M.log(x, y) - v)))
                w = M.random_tangent(x, rng)
                u = M.random_tangent(x, rng)
                tw, tu = M.transport(x, y, w), M.transport(x, y, u)
                iso_err = max(iso_err, abs(np.dot(tw, tu) - np.dot(w, u)))
    per_tri = max(1, trials_triangle // len(dims))
    for d in dims:
        S = Sphere(d)
        for _ in range(per_tri):
            x = S.random_point(rng)
            y = S.exp(x, S.random_tangent(x, rng, scale=rng.uniform(0.01, 1.0)))
            z = S.exp(x, S.random_tangent(x, rng, scale=rng.uniform(0.01, 1.0)))
            if min(np.dot(x, y), np.dot(x, z)) <= -0.99:
                continue
            a, b, c, A = sphere_triangle(S, x, y, z)
            tri_viol = max(tri_viol, trig_distance_bound_violation(1.0, a, b, c, A))
    hyp_viol = 0.0
    for _ in range(trials_triangle):
        kappa = -rng.uniform(0.1, 4.0)
        b, c = rng.uniform(0.01, 3.0, size=2)
        A = rng.uniform(0.0, math.pi)
        a = hyperbolic_side(kappa, b, c, A)
        hyp_viol = max(hyp_viol, trig_distance_bound_violation(kappa, a, b, c, A))
    cor_gap = math.inf
    for d in dims:
        S = Sphere(d)
        for _ in range(per_tri):
            x_s = S.random_point(rng)
            x = S.exp(x_s, S.random_tangent(x_s, rng, scale=rng.uniform(0.01, 1.0) / math.sqrt(d)))
            g = S.random_tangent(x_s, rng, scale=1.0 / math.sqrt(d))
            cor_gap = min(cor_gap, distance_corollary_gap(S, x_s, x, g, rng.uniform(0.01, 1.0)))
    return {
        "roundtrip_error": rt_err,
        "hyperbolic_bound_violation": hyp_viol,
        "distance_corollary_min_gap": cor_gap,
        "transport_isometry_error": iso_err,
        "trig_bound_violation": tri_viol,
        "pass": rt_err <= 1e-8 and iso_err <= 1e-10 and max(tri_viol, hyp_viol) <= 1e-9
        and cor_gap >= -1e-9,
    }


__all__ = [
    "finite_diff_directional",
    "gradient_check",
    "LsvrgSpec",
    "PageSpec",
    "enumerate_estimator",
    "brute_force_estimator_mean",
    "marina_atoms",
    "lyapunov_lsvrg",
    "lyapunov_page_pl",
    "RateEnvelope",
    "check_rate",
    "mean_trace",
    "mean_running_min",
    "CountingOracle",
    "stepsize_lemma_holds",
    "dot_product_identity_gap",
    "geometry_suite",
]
