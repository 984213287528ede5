"""Single-machine Riemannian methods: R-GD, R-SGD, R-SVRG, R-LSVRG and R-PAGE.

Each ``*_run`` returns a :class:`~riemvr.trace.RunTrace`. Randomness comes from
two independent streams spawned from the seed, one for component sampling and
one for coin flips, so metric settings never change a trajectory.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigError
from .geometry import geometry_meta
from .trace import Recorder, RunTrace


@dataclass
class OptimizerConfig:
    eta: float
    K: int
    p: float = 1.0
    B: int = 1
    b: int = 1
    seed: int = 0
    inner_loop_m: int | None = None
    trace_stride: int = 1
    diameter: float = 1.0
    kappa_min: float | None = None

    def validate(self, n=None, batches=True):
        if not self.eta > 0:
            raise ConfigError(f"stepsize must be positive, got {self.eta}")
        if not 0 < self.p <= 1:
            raise ConfigError(f"probability p must lie in (0, 1], got {self.p}")
        if self.K < 0:
            raise ConfigError("iteration budget K must be nonnegative")
        if self.b < 1 or (batches and self.b > self.B):
            raise ConfigError(f"need 1 <= b <= B, got b={self.b}, B={self.B}")
        if n is not None and not math.isinf(n) and self.B > n:
            raise ConfigError(f"B={self.B} exceeds the number of components n={n}")
        if self.inner_loop_m is not None and self.inner_loop_m < 1:
            raise ConfigError("inner_loop_m must be at least 1")
        if self.trace_stride < 1:
            raise ConfigError("trace_stride must be at least 1")
        return self


def make_streams(seed):
    """Independent (sampling, coin) generators derived from one seed."""
    s_sample, s_coin = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(s_sample), np.random.default_rng(s_coin)


# --- theorem-derived defaults -------------------------------------------------


def default_stepsize_lsvrg(mu, L, zeta=1.0):
    if mu <= 0 or L <= 0 or zeta <= 0:
        raise ConfigError("mu, L and zeta must be positive")
    return mu / (16.0 * L**2 * zeta)


def default_stepsize_page(L, p, b):
    if L <= 0 or not 0 < p <= 1 or b < 1:
        raise ConfigError("need L > 0, p in (0, 1], b >= 1")
    return 1.0 / (L * (1.0 + math.sqrt((1.0 - p) / (p * b))))


def default_p_page(B, b):
    if not 1 <= b <= B:
        raise ConfigError("need 1 <= b <= B")
    return b / (B + b)


def default_stepsize_page_pl(L, p, b, mu):
    if mu <= 0:
        raise ConfigError("mu must be positive")
    return min(default_stepsize_page(L, p, b), p / (2.0 * mu))


def validate_stepsize(a, b_lin, eta):
    """True iff a eta^2 + b_lin eta <= 1 (guaranteed for eta <= 1/(sqrt(a) + b_lin))."""
    if a < 0 or b_lin <= 0:
        raise ConfigError("need a >= 0 and b_lin > 0")
    return a * eta * eta + b_lin * eta <= 1.0


def page_stepsize_certificate(L, p, b):
    """(a, b_lin) for which the R-PAGE stepsize must satisfy a eta^2 + b_lin eta <= 1."""
    return (1.0 - p) * L**2 / (p * b), L


def lsvrg_stepsize_certificate(mu, L, zeta=1.0):
    # 16 L^2 zeta eta^2 <= eta mu, written as a linear condition
    return 0.0, 16.0 * L**2 * zeta / mu


# --- states -------------------------------------------------------------------


@dataclass
class LsvrgState:
    x: np.ndarray
    y: np.ndarray
    full_grad_at_y: np.ndarray
    step: int = 0
    grad_evals: int = 0


@dataclass
class PageState:
    x_prev: np.ndarray | None
    x: np.ndarray
    g: np.ndarray
    step: int = 0
    grad_evals: int = 0


def init_lsvrg(problem, x0):
    x0 = np.asarray(x0, dtype=float)
    return LsvrgState(x=x0, y=x0, full_grad_at_y=problem.full_gradient(x0), grad_evals=problem.n)


def lsvrg_estimator(problem, x, y, full_grad_at_y, batch):
    """g = grad f_I(x) - Gamma_y^x (grad f_I(y) - grad f(y))."""
    M = problem.manifold
    gx = problem.batch_gradient(batch, x)
    gy = problem.batch_gradient(batch, y)
    return gx - M.transport(y, x, gy - full_grad_at_y)


def rlsvrg_step(problem, state, eta, p, rng, coin_rng=None, B=1):
    """One R-LSVRG iteration. The anchor moves to the pre-step iterate with probability p."""
    coin_rng = rng if coin_rng is None else coin_rng
    M = problem.manifold
    batch = problem.sample_batch(B, rng)
    g = lsvrg_estimator(problem, state.x, state.y, state.full_grad_at_y, batch)
    x_new = M.exp(state.x, -eta * g)
    evals = state.grad_evals + 2 * len(batch)
    if coin_rng.random() < p:
        y, fy = state.x, problem.full_gradient(state.x)
        evals += problem.n
    else:
        y, fy = state.y, state.full_grad_at_y
    return LsvrgState(x=x_new, y=y, full_grad_at_y=fy, step=state.step + 1, grad_evals=evals)


def lyapunov_lsvrg_value(problem, x, y, p, zeta):
    """d^2(x, x*) + 3 mu^2 / (64 p L^2 zeta) * ||Exp_y^{-1}(x*)||^2."""
    meta, M = problem.meta, problem.manifold
    xs = meta.x_star
    coef = 3.0 * meta.mu**2 / (64.0 * p * meta.L**2 * zeta)
    return M.dist(x, xs) ** 2 + coef * M.norm(y, M.log(y, xs)) ** 2


def _finish(trace, recorder, t0, config, extra=None):
    trace.records = recorder.records
    trace.summary.update(
        wall_time=time.perf_counter() - t0,
        total_grad_evals=recorder.records[-1]["grad_evals"] if recorder.records else 0,
        seed=config.seed,
        config=asdict(config),
    )
    if extra:
        trace.summary.update(extra)
    return trace


def _zeta(problem, config):
    return geometry_meta(problem.manifold, config.diameter, config.kappa_min).zeta


def rlsvrg_run(problem, x0, config, zeta=None):
    config.validate(problem.n)
    zeta = _zeta(problem, config) if zeta is None else zeta
    t0 = time.perf_counter()
    rng, coin = make_streams(config.seed)
    lyap = None
    if problem.meta.mu > 0 and problem.meta.x_star is not None:
        lyap = lambda x, s: lyapunov_lsvrg_value(problem, x, s.y, config.p, zeta)  # noqa: E731
    rec = Recorder(problem, config.trace_stride, config.K, lyap)
    state = init_lsvrg(problem, x0)
    rec.record(0, state.x, state.grad_evals, state=state, force=True)
    for k in range(1, config.K + 1):
        state = rlsvrg_step(problem, state, config.eta, config.p, rng, coin, B=config.B)
        rec.record(k, state.x, state.grad_evals, state=state)
    trace = RunTrace("rlsvrg", x_final=state.x)
    return _finish(trace, rec, t0, config, {"zeta": zeta})


def rsvrg_run(problem, x0, config):
    """Double-loop R-SVRG: the anchor is reset to the iterate every ``inner_loop_m`` steps."""
    config.validate(problem.n)
    m = config.inner_loop_m if config.inner_loop_m is not None else problem.n
    if m < 1:
        raise ConfigError("inner_loop_m must be at least 1")
    t0 = time.perf_counter()
    rng, _ = make_streams(config.seed)
    M = problem.manifold
    x = np.asarray(x0, dtype=float)
    rec = Recorder(problem, config.trace_stride, config.K)
    evals = 0
    rec.record(0, x, evals, force=True)
    y = fy = None
    for k in range(config.K):
        if k % m == 0:
            y, fy = x, problem.full_gradient(x)
            evals += problem.n
        batch = problem.sample_batch(config.B, rng)
        g = lsvrg_estimator(problem, x, y, fy, batch)
        x = M.exp(x, -config.eta * g)
        evals += 2 * len(batch)
        rec.record(k + 1, x, evals)
    trace = RunTrace("rsvrg", x_final=x)
    return _finish(trace, rec, t0, config, {"inner_loop_m": m})


def rgd_run(problem, x0, config):
    config.validate(batches=False)
    t0 = time.perf_counter()
    M = problem.manifold
    x = np.asarray(x0, dtype=float)
    rec = Recorder(problem, config.trace_stride, config.K)
    evals = 0
    rec.record(0, x, evals, force=True)
    for k in range(config.K):
        g = problem.full_gradient(x)
        x = M.exp(x, -config.eta * g)
        evals += problem.n
        rec.record(k + 1, x, evals)
    return _finish(RunTrace("rgd", x_final=x), rec, t0, config)


def rsgd_run(problem, x0, config):
    """Minibatch R-SGD with batch size ``config.b``."""
    config.validate(batches=False)
    t0 = time.perf_counter()
    rng, _ = make_streams(config.seed)
    M = problem.manifold
    x = np.asarray(x0, dtype=float)
    rec = Recorder(problem, config.trace_stride, config.K)
    evals = 0
    rec.record(0, x, evals, force=True)
    for k in range(config.K):
        batch = problem.sample_batch(config.b, rng)
        g = problem.batch_gradient(batch, x)
        x = M.exp(x, -config.eta * g)
        evals += len(batch)
        rec.record(k + 1, x, evals)
    return _finish(RunTrace("rsgd", x_final=x), rec, t0, config)


def page_estimator_update(problem, x, x_new, g, batch):
    """Gamma(g) + grad f_I(x_new) - Gamma(grad f_I(x)) with one shared batch."""
    M = problem.manifold
    return M.transport(x, x_new, g) + problem.batch_gradient(batch, x_new) - M.transport(
        x, x_new, problem.batch_gradient(batch, x)
    )


def init_page(problem, x0, B, rng):
    x0 = np.asarray(x0, dtype=float)
    batch = problem.sample_batch(B, rng)
    return PageState(x_prev=None, x=x0, g=problem.batch_gradient(batch, x0), grad_evals=len(batch))


def rpage_step(problem, state, eta, p, B, b, rng, coin_rng=None):
    coin_rng = rng if coin_rng is None else coin_rng
    M = problem.manifold
    x_new = M.exp(state.x, -eta * state.g)
    if coin_rng.random() < p:
        batch = problem.sample_batch(B, rng)
        g_new = problem.batch_gradient(batch, x_new)
        evals = len(batch)
    else:
        batch = problem.sample_batch(b, rng)
        g_new = page_estimator_update(problem, state.x, x_new, state.g, batch)
        evals = 2 * len(batch)
    return PageState(
        x_prev=state.x, x=x_new, g=g_new, step=state.step + 1, grad_evals=state.grad_evals + evals
    )


def lyapunov_page_pl_value(problem, x, g, p):
    """f(x) - f* + (2/p) ||g - grad f(x)||^2."""
    dev = g - problem.metric_gradient(x)
    return problem.value(x) - problem.meta.f_star + (2.0 / p) * float(np.dot(dev, dev))


def rpage_run(problem, x0, config):
    """R-PAGE; use ``B = n`` for the finite-sum setting so that g^0 is exact."""
    config.validate(problem.n)
    t0 = time.perf_counter()
    rng, coin = make_streams(config.seed)
    lyap = None
    if problem.meta.f_star is not None:
        lyap = lambda x, s: lyapunov_page_pl_value(problem, x, s.g, config.p)  # noqa: E731
    rec = Recorder(problem, config.trace_stride, config.K, lyap)
    state = init_page(problem, x0, config.B, rng)
    rec.record(0, state.x, state.grad_evals, state=state, force=True)
    for k in range(1, config.K + 1):
        state = rpage_step(problem, state, config.eta, config.p, config.B, config.b, rng, coin)
        rec.record(k, state.x, state.grad_evals, state=state)
    return _finish(RunTrace("rpage", x_final=state.x), rec, t0, config)


ALGORITHMS = {
    "rgd": rgd_run,
    "rsgd": rsgd_run,
    "rsvrg": rsvrg_run,
    "rlsvrg": rlsvrg_run,
    "rpage": rpage_run,
}


def with_defaults(problem, algorithm, config_kwargs):
    """Fill theorem-derived ``eta``/``p``/``B``/``b`` where the caller left them out."""
    kw = dict(config_kwargs)
    meta = problem.meta
    finite = not math.isinf(meta.n)
    if algorithm == "rlsvrg":
        kw.setdefault("p", 1.0 / meta.n)
        if "eta" not in kw:
            zeta = geometry_meta(problem.manifold, kw.get("diameter", 1.0), kw.get("kappa_min")).zeta
            kw["eta"] = default_stepsize_lsvrg(meta.mu, meta.L, zeta)
    elif algorithm == "rpage":
        if finite:
            kw.setdefault("B", meta.n)
        kw.setdefault("b", max(1, math.isqrt(kw["B"])))
        kw.setdefault("p", default_p_page(kw["B"], kw["b"]))
        if "eta" not in kw:
            kw["eta"] = default_stepsize_page(meta.L, kw["p"], kw["b"])
    elif algorithm == "rsvrg":
        kw.setdefault("inner_loop_m", meta.n)
    if "eta" not in kw:
        kw["eta"] = 1.0 / meta.L
    return OptimizerConfig(**kw)


__all__ = [
    "OptimizerConfig",
    "LsvrgState",
    "PageState",
    "rlsvrg_step",
    "rlsvrg_run",
    "rpage_step",
    "rpage_run",
    "rsvrg_run",
    "rgd_run",
    "rsgd_run",
    "default_stepsize_lsvrg",
    "default_stepsize_page",
    "default_p_page",
    "default_stepsize_page_pl",
    "validate_stepsize",
]
