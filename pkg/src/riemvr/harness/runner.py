"""Experiment orchestration, trace files and seed-aggregated summaries."""
from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__
from ..distributed import rmarina_run, rmarina_run_pl, split_problem
from ..exceptions import ConfigError, StructuralError
from ..optimizers import ALGORITHMS, with_defaults
from ..problems import load_samples_csv, make_online, make_quadratic, make_rayleigh
from ..trace import COLUMNS, RunTrace
from .config import ExperimentConfig, validate


def gaussian_samples(n, d, seed=0, top=1.0, tail=(0.3, 0.01)):
    """Rows z_i ~ N(0, diag(top, tail...)) / sqrt(n), so sum z_i z_i^T has O(1) spectrum."""
    rng = np.random.default_rng(seed)
    spectrum = np.concatenate([[top], np.linspace(tail[0], tail[1], d - 1)])
    return rng.standard_normal((n, d)) * np.sqrt(spectrum) / math.sqrt(n)


def build_problem(spec):
    kind = spec["type"]
    seed = spec.get("seed", 0)
    if kind == "quadratic":
        return make_quadratic(
            spec["n"], spec["d"], spec.get("mu", 0.1), spec.get("L", 1.0), seed=seed,
            heterogeneity=spec.get("heterogeneity", 0.9),
        )
    if kind == "rayleigh":
        if "csv" in spec:
            Z = load_samples_csv(spec["csv"])
        else:
            Z = gaussian_samples(
                spec["n"], spec["d"], seed, spec.get("top", 1.0), tuple(spec.get("tail", (0.3, 0.01)))
            )
        return make_rayleigh(Z)
    if kind == "online":
        d = spec["d"]
        cov = np.diag(spec.get("cov_diag", np.linspace(1.0, 0.1, d)))
        return make_online({"kind": "gaussian", "cov": cov}, seed=seed, scale=spec.get("scale", 1.0))
    raise ConfigError(f"unknown problem type {kind!r}")


def initial_point(problem, spec):
    """Deterministic start drawn from the problem's own seed, shared by every algorithm and run seed."""
    rng = np.random.default_rng(spec.get("x0_seed", spec.get("seed", 0) + 1))
    return problem.manifold.random_point(rng)


def run_algorithm(problem, x0, algo, seed, stride):
    """Run one configured algorithm with one seed."""
    algo = dict(algo)
    name = algo.pop("name")
    algo.pop("label", None)
    if name in ("rmarina", "rmarina-pl"):
        workers = split_problem(problem, algo.pop("workers", 4), algo.pop("partition", "shard-equal"))
        kw = dict(
            p=algo.pop("p", "auto"),
            compressor=algo.pop("compressor", "identity"),
            K=algo.pop("K"),
            seed=seed,
            trace_stride=stride,
            mu=algo.pop("mu", None),
        )
        eta = algo.pop("eta", None)
        if name == "rmarina-pl":
            algo.pop("lyapunov", None)
            return rmarina_run_pl(workers, x0, eta=eta, **kw)
        if eta is None:
            from ..distributed import WorkerAverage, _resolve, default_stepsize_marina

            glob = WorkerAverage(workers)
            comp, p = _resolve(kw["compressor"], kw["p"], glob.d)
            kw.update(compressor=comp, p=p)
            eta = default_stepsize_marina(glob.meta.L, p, comp.omega(glob.d), len(workers))
        return rmarina_run(workers, x0, eta, lyapunov=algo.pop("lyapunov", None), **kw)
    algo.update(seed=seed, trace_stride=stride)
    config = with_defaults(problem, name, algo)
    return ALGORITHMS[name](problem, x0, config)


# --- trace files --------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_trace(trace, path):
    """CSV with the fixed header; missing metrics are empty fields."""
    path = Path(path)
    steps = [r["step"] for r in trace.records]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise StructuralError("trace steps must be strictly increasing")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in trace.records:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
    return path


def read_trace(path, algorithm=None):
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise StructuralError(f"{path} does not carry the trace header")
    records = []
    for row in rows[1:]:
        rec = {}
        for c, v in zip(COLUMNS, row):
            if v == "":
                rec[c] = None
            elif c in ("step", "grad_evals", "comm_coords"):
                rec[c] = int(v)
            else:
                rec[c] = float(v)
        records.append(rec)
    sidecar = path.with_suffix(".json")
    summary = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return RunTrace(algorithm or summary.get("algorithm", path.stem), records, summary)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _problem_id(spec):
    return json.dumps(spec, sort_keys=True)


def _run_job(args):
    problem_spec, algo, seed, stride, out = args
    problem = build_problem(problem_spec)
    x0 = initial_point(problem, problem_spec)
    label = algo.get("label", algo["name"])
    trace = run_algorithm(problem, x0, algo, seed, stride)
    base = Path(out) / f"{label}_seed{seed}"
    csv_path = write_trace(trace, base.with_suffix(".csv"))
    meta = {
        "algorithm": label,
        "seed": seed,
        "library_version": __version__,
        "runtime_seconds": trace.summary.get("wall_time"),
        "problem": problem_spec,
        "algorithm_config": algo,
        "f_star": problem.meta.f_star,
        "summary": {k: v for k, v in trace.summary.items() if k != "wall_time"},
    }
    base.with_suffix(".json").write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return str(csv_path)


def run_experiment(config):
    """One CSV trace (plus JSON sidecar) per (algorithm, seed); returns the CSV paths."""
    if isinstance(config, dict):
        config = validate(config)
    if not isinstance(config, ExperimentConfig):
        raise ConfigError("expected an ExperimentConfig")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(config.problem, a, s, config.stride, str(out)) for a in config.algorithms for s in config.seeds]
    if config.pool > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.pool) as ex:
            return list(ex.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


# --- summaries ----------------------------------------------------------------


def _step_lookup(grid, xs, ys):
    """Value of the step function (xs, ys) at each grid point; NaN before the first x."""
    idx = np.searchsorted(xs, grid, side="right") - 1
    out = np.full(len(grid), np.nan)
    ok = idx >= 0
    out[ok] = ys[idx[ok]]
    return out


def summarize(traces):
    """Per-algorithm series aligned by gradient evaluations.

    Returns ``{algorithm: {"grad_evals", "min_grad_norm_sq_{mean,min,max}",
    "f_value_{mean,min,max}", "seeds"}}``. Traces must come from one problem.
    """
    if not traces:
        raise StructuralError("nothing to summarize")
    problems = {_problem_id(t.summary.get("problem")) for t in traces}
    if len(problems) > 1:
        raise StructuralError("traces come from different problems")
    groups = {}
    for t in traces:
        groups.setdefault(t.algorithm, []).append(t)
    table = {}
    for name, ts in groups.items():
        grid = np.unique(np.concatenate([t.column("grad_evals") for t in ts]))
        gmins, fvals = [], []
        for t in ts:
            ev = t.column("grad_evals")
            gmins.append(_step_lookup(grid, ev, t.running_min("grad_norm_sq")))
            fvals.append(_step_lookup(grid, ev, t.column("f_value")))
        row = {"grad_evals": grid, "seeds": len(ts)}
        for key, arr in (("min_grad_norm_sq", np.array(gmins)), ("f_value", np.array(fvals))):
            # all-NaN columns (no seed recorded yet at that budget) stay NaN
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                row[f"{key}_mean"] = np.nanmean(arr, axis=0)
                row[f"{key}_min"] = np.nanmin(arr, axis=0)
                row[f"{key}_max"] = np.nanmax(arr, axis=0)
        table[name] = row
    return table


def write_summary(table, path):
    path = Path(path)
    cols = ["algorithm", "grad_evals", "seeds"] + [
        f"{k}_{s}" for k in ("min_grad_norm_sq", "f_value") for s in ("mean", "min", "max")
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for name in sorted(table):
            row = table[name]
            for i, ev in enumerate(row["grad_evals"]):
                w.writerow([name, _fmt(int(ev)), row["seeds"]] + [_fmt(row[c][i]) for c in cols[3:]])
    return path


def evals_to_threshold(trace, threshold):
    """First gradient-evaluation count at which ||grad f|| <= threshold (inf if never)."""
    g = np.sqrt(trace.column("grad_norm_sq"))
    hit = np.nonzero(g <= threshold)[0]
    return float(trace.column("grad_evals")[hit[0]]) if len(hit) else math.inf


# --- presets ------------------------------------------------------------------

EIGV_THRESHOLDS = (1e-2, 1e-4, 1e-6)


def eigv_compare_config(seeds=tuple(range(20)), out="runs/eigv-compare", stride=1, K=8000):
    """Leading eigenvector, d=50, n=500: R-LSVRG (p=1/n) against R-SVRG (inner length n), equal eta."""
    n, d = 500, 50
    problem = {"type": "rayleigh", "n": n, "d": d, "seed": 2024}
    P = build_problem(problem)
    eta = 0.5 / P.meta.L_components
    return {
        "problem": problem,
        "algorithms": [
            {"name": "rlsvrg", "eta": eta, "K": K, "p": 1.0 / n},
            {"name": "rsvrg", "eta": eta, "K": K, "inner_loop_m": n},
        ],
        "run": {"seeds": list(seeds), "stride": stride, "out": out},
    }


PRESETS = {"eigv-compare": eigv_compare_config}


def compare_thresholds(traces_a, traces_b, thresholds=EIGV_THRESHOLDS):
    """Per seed: does A reach every threshold with no more gradient evaluations than B?"""
    by_seed_b = {t.summary.get("seed"): t for t in traces_b}
    rows = []
    for ta in traces_a:
        seed = ta.summary.get("seed")
        tb = by_seed_b[seed]
        ea = [evals_to_threshold(ta, th) for th in thresholds]
        eb = [evals_to_threshold(tb, th) for th in thresholds]
        rows.append(
            {"seed": seed, "a": ea, "b": eb, "a_wins": all(x <= y and math.isfinite(x) for x, y in zip(ea, eb))}
        )
    return rows


def run_preset(name, out=None, seeds=None, stride=None):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kw = {}
    if out is not None:
        kw["out"] = out
    if seeds is not None:
        kw["seeds"] = seeds
    if stride is not None:
        kw["stride"] = stride
    cfg = validate(PRESETS[name](**kw))
    t0 = time.perf_counter()
    paths = run_experiment(cfg)
    traces = [read_trace(p) for p in paths]
    table = summarize(traces)
    write_summary(table, Path(cfg.out) / "summary.csv")
    report = {"preset": name, "traces": paths, "runtime_seconds": time.perf_counter() - t0}
    if name == "eigv-compare":
        a = [t for t in traces if t.algorithm == "rlsvrg"]
        b = [t for t in traces if t.algorithm == "rsvrg"]
        rows = compare_thresholds(a, b)
        report["thresholds"] = list(EIGV_THRESHOLDS)
        report["per_seed"] = rows
        report["rlsvrg_wins"] = sum(r["a_wins"] for r in rows)
        report["seeds"] = len(rows)
    (Path(cfg.out) / "report.json").write_text(json.dumps(_jsonable(report), indent=2) + "\n")
    return report
