"""Quick self-checks behind ``riemvr verify``; each suite returns a JSON-ready dict."""
from __future__ import annotations

import time
from fractions import Fraction

import numpy as np

from .. import oracles
from ..compression import RandK
from ..distributed import WorkerAverage, marina_round, init_marina, split_problem
from ..geometry import Euclidean
from ..optimizers import OptimizerConfig, rgd_run, rpage_run, rsgd_run
from ..problems import make_quadratic, make_rayleigh


def suite_geometry():
    return oracles.geometry_suite(trials_roundtrip=2_000, trials_triangle=400)


def suite_gradients():
    rng = np.random.default_rng(7)
    results = {}
    for name, prob in (
        ("quadratic", make_quadratic(6, 5, 0.2, 1.0, seed=1)),
        ("rayleigh", make_rayleigh(rng.standard_normal((8, 5)) / np.sqrt(8))),
    ):
        results[name] = oracles.gradient_check(prob, points=20, directions=2)
    results["pass"] = all(r["pass"] for r in results.values())
    return results


def suite_estimators():
    prob = make_quadratic(5, 3, 0.2, 1.0, seed=3)
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    lsvrg_err = float(
        np.max(np.abs(oracles.brute_force_estimator_mean(prob, oracles.LsvrgSpec(x, y, B=2)) - prob.full_gradient(x)))
    )
    M = prob.manifold
    g = rng.standard_normal(3)
    x_new = M.exp(x, -0.3 * g)
    spec = oracles.PageSpec(x, x_new, g, p=0.3, B=5, b=2)
    expected = 0.3 * prob.full_gradient(x_new) + 0.7 * (g + prob.full_gradient(x_new) - prob.full_gradient(x))
    page_err = float(np.max(np.abs(oracles.brute_force_estimator_mean(prob, spec) - expected)))
    return {
        "lsvrg_unbiasedness_error": lsvrg_err,
        "page_mean_error": page_err,
        "pass": lsvrg_err <= 1e-12 and page_err <= 1e-12,
    }


def suite_compression():
    """RandK mean and conic variance by exact rational enumeration, 1 <= k <= d <= 6."""
    mismatches = 0
    for d in range(1, 7):
        v = np.array([Fraction(j * j - 3, j + 1) for j in range(1, d + 1)], dtype=object)
        nv2 = sum(x * x for x in v)
        for k in range(1, d + 1):
            atoms = RandK(k).outcomes(v)
            mean = [sum(w * q[j] for w, q in atoms) for j in range(d)]
            var = sum(w * sum((q[j] - v[j]) ** 2 for j in range(d)) for w, q in atoms)
            mismatches += sum(m != x for m, x in zip(mean, v))
            mismatches += var != (Fraction(d, k) - 1) * nv2
    return {"mismatches": int(mismatches), "pass": mismatches == 0}


def suite_reductions():
    prob = make_quadratic(12, 4, 0.2, 1.0, seed=5)
    x0 = np.ones(4)
    a = rpage_run(prob, x0, OptimizerConfig(eta=0.5, K=30, p=1.0, B=3, b=3, seed=4))
    b = rsgd_run(prob, x0, OptimizerConfig(eta=0.5, K=30, b=3, seed=4))
    c = rpage_run(prob, x0, OptimizerConfig(eta=0.5, K=30, p=1.0, B=12, b=1, seed=4))
    d = rgd_run(prob, x0, OptimizerConfig(eta=0.5, K=30))
    same_sgd = bool(np.array_equal(a.column("f_value"), b.column("f_value")))
    same_gd = bool(np.array_equal(c.column("f_value"), d.column("f_value")))
    return {"page_equals_sgd": same_sgd, "page_equals_gd": same_gd, "pass": same_sgd and same_gd}


def suite_marina():
    prob = make_quadratic(4, 6, 0.2, 1.0, seed=2)
    workers = split_problem(prob, 4)
    objective, ws, server, coin = init_marina(workers, np.zeros(6), seed=1)
    x = np.zeros(6)
    M = Euclidean(6)
    worst = 0.0
    for _ in range(50):
        marina_round(objective, ws, server, 0.5, 0.3, RandK(6), coin)
        x = M.exp(x, -0.5 * WorkerAverage(workers).full_gradient(x))
        worst = max(worst, float(np.max(np.abs(server.x - x))))
    return {"identity_vs_gd_error": worst, "pass": worst <= 1e-12}


SUITES = {
    "geometry": suite_geometry,
    "gradients": suite_gradients,
    "estimators": suite_estimators,
    "compression": suite_compression,
    "reductions": suite_reductions,
    "marina": suite_marina,
}


def run_suites(names=None):
    names = list(SUITES) if names in (None, "all") else [names] if isinstance(names, str) else names
    report = {}
    for name in names:
        t0 = time.perf_counter()
        res = SUITES[name]()
        res["pass"] = bool(res["pass"])
        res["seconds"] = time.perf_counter() - t0
        report[name] = res
    report_pass = all(bool(r["pass"]) for r in report.values())
    return {"suites": report, "pass": report_pass}
