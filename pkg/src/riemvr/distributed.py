"""R-MARINA over simulated workers with compressed gradient differences.

Workers run in-process, one synchronous round at a time. Every round one
server-side coin decides for all workers whether they send a dense local
gradient or a compressed, transported gradient difference. Aggregation uses
compensated summation so the result does not depend on worker order.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .compression import Identity, message_cost, parse_compressor
from .exceptions import ConfigError, StructuralError
from .problems import FiniteSumProblem, ProblemMeta, QuadraticProblem
from .trace import Recorder, RunTrace


def exact_mean(vectors):
    """Coordinatewise mean with ``math.fsum``; independent of summation order."""
    vectors = np.asarray(vectors, dtype=float)
    n = vectors.shape[0]
    return np.array([math.fsum(col) for col in vectors.T]) / n


class WorkerAverage(FiniteSumProblem):
    """Global objective f = (1/n) sum_i f_i where f_i is a worker's whole local objective.

    Component ``i`` is worker ``i``, so single-machine methods run on this
    problem see exactly the distributed objective.
    """

    kind = "worker-average"

    def __init__(self, worker_problems, mu=None):
        if not worker_problems:
            raise ConfigError("need at least one worker")
        M = worker_problems[0].manifold
        for w in worker_problems[1:]:
            if w.manifold != M:
                raise ConfigError(f"workers live on different manifolds: {M} vs {w.manifold}")
        self.workers = list(worker_problems)
        self.manifold = M
        n = len(self.workers)
        L = max(w.meta.L for w in self.workers)
        x_star = None
        self._quad = None
        if all(isinstance(w, QuadraticProblem) for w in self.workers):
            H = sum(w.H_mean for w in self.workers) / n
            c = sum(w._c for w in self.workers) / n
            self._quad = (H, c, sum(w._const for w in self.workers) / n)
            eig = np.linalg.eigvalsh(H)
            if mu is None:
                mu = float(max(eig[0], 0.0))
            if eig[0] > 0:
                x_star = np.linalg.solve(H, c)
        self.meta = ProblemMeta(n=n, d=M.dim, L=L, mu=0.0 if mu is None else mu)
        if x_star is not None:
            self.meta.x_star = x_star
            self.meta.f_star = self.value(x_star)

    def batch_gradient(self, batch, x):
        self._check_batch(batch)
        return exact_mean([self.workers[i].full_gradient(x) for i in batch.indices])

    def metric_gradient(self, x):
        # closed form for reporting; the algorithms still query each worker
        if self._quad is None:
            return self.full_gradient(x)
        H, c, _ = self._quad
        return H @ x - c

    def value(self, x):
        if self._quad is not None:
            H, c, const = self._quad
            return float(0.5 * (x @ H @ x) - x @ c + 0.5 * const)
        return math.fsum(w.value(x) for w in self.workers) / len(self.workers)

    def component_value(self, i, x):
        return self.workers[i].value(x)

    def subset(self, indices):
        return WorkerAverage([self.workers[i] for i in indices])


def split_problem(problem, workers, strategy="shard-equal", rng=None):
    """Shard a finite-sum problem's components among workers."""
    from .problems import partition_indices

    return [problem.subset(idx) for idx in partition_indices(problem.n, workers, strategy, rng)]


# --- theorem-derived defaults -------------------------------------------------


def default_stepsize_marina(L, p, omega, n):
    if L <= 0 or not 0 < p <= 1 or omega < 0 or n < 1:
        raise ConfigError("need L > 0, p in (0, 1], omega >= 0, n >= 1")
    return 1.0 / (L * (1.0 + math.sqrt((1.0 - p) * omega / (p * n))))


def default_stepsize_marina_pl(L, p, omega, n, mu):
    if mu <= 0:
        raise ConfigError("mu must be positive")
    if L <= 0 or not 0 < p <= 1 or omega < 0 or n < 1:
        raise ConfigError("need L > 0, p in (0, 1], omega >= 0, n >= 1")
    return min(1.0 / (L * (1.0 + math.sqrt(2.0 * (1.0 - p) * omega / (p * n)))), p / (2.0 * mu))


def default_p_marina(rho_Q, d):
    if not 0 < rho_Q <= d:
        raise ConfigError(f"need 0 < rho_Q <= d, got rho_Q={rho_Q}, d={d}")
    return rho_Q / d


def expected_comm_per_round(p, rho_Q, d, n=1):
    """Expected coordinates sent per worker per round (``n`` is accepted for symmetry)."""
    if not 0 <= p <= 1:
        raise ConfigError("p must lie in [0, 1]")
    return p * d + (1.0 - p) * rho_Q


# --- state --------------------------------------------------------------------


@dataclass
class WorkerState:
    worker_id: int
    local_problem: FiniteSumProblem
    g_i: np.ndarray
    rng_stream: np.random.Generator
    comm: int = 0


@dataclass
class ServerState:
    x: np.ndarray
    g: np.ndarray
    comm_ledger: np.ndarray
    step: int = 0
    grad_evals: int = 0
    round_costs: list = field(default_factory=list)


def _streams(seed, n):
    root = np.random.SeedSequence(seed)
    coin_seq, *worker_seqs = root.spawn(n + 1)
    return np.random.default_rng(coin_seq), [np.random.default_rng(s) for s in worker_seqs]


def init_marina(worker_problems, x0, seed=0):
    """Exact g^0; each worker pays one dense message."""
    objective = WorkerAverage(worker_problems)
    x0 = np.asarray(x0, dtype=float)
    coin, rngs = _streams(seed, len(worker_problems))
    d = objective.manifold.dim
    workers = []
    evals = 0
    for i, (w, r) in enumerate(zip(worker_problems, rngs)):
        workers.append(WorkerState(i, w, w.full_gradient(x0), r, comm=d))
        evals += w.n
    g = exact_mean([w.g_i for w in workers])
    server = ServerState(
        x=x0, g=g, comm_ledger=np.full(len(workers), d, dtype=np.int64), grad_evals=evals
    )
    return objective, workers, server, coin


def marina_round(objective, workers, server, eta, p, compressor, coin):
    """One synchronous round; mutates worker and server state in place."""
    M = objective.manifold
    x = server.x
    direction = M.project_tangent(x, server.g)
    x_new = M.exp(x, -eta * direction)
    dense = coin.random() < p
    costs = np.empty(len(workers), dtype=np.int64)
    evals = 0
    for w in workers:
        lp = w.local_problem
        if dense:
            w.g_i = lp.full_gradient(x_new)
            cost = M.dim
            evals += lp.n
        else:
            diff = lp.full_gradient(x_new) - M.transport(x, x_new, lp.full_gradient(x))
            msg = compressor.encode(diff, w.rng_stream)
            carried = M.transport(x, x_new, M.project_tangent(x, w.g_i))
            w.g_i = carried + msg.dense()
            cost = message_cost(msg)
            evals += 2 * lp.n
        w.comm += cost
        costs[w.worker_id] = cost
    server.x = x_new
    server.g = exact_mean([w.g_i for w in workers])
    server.comm_ledger += costs
    server.round_costs.append(costs)
    server.step += 1
    server.grad_evals += evals
    return dense


def lyapunov_marina_pl_value(objective, x, g, eta, p):
    """f(x) - f* + (eta/p) ||g - grad f(x)||^2."""
    dev = objective.manifold.project_tangent(x, g) - objective.metric_gradient(x)
    return objective.value(x) - objective.meta.f_star + (eta / p) * float(np.dot(dev, dev))


def lyapunov_marina_value(objective, x, g, eta, p):
    """Non-convex potential f(x) - f* + (eta/(2p)) ||g - grad f(x)||^2."""
    return lyapunov_marina_pl_value(objective, x, g, eta / 2.0, p)


def _resolve(compressor, p, d):
    if isinstance(compressor, str):
        compressor = parse_compressor(compressor, d)
    if p == "auto":
        p = default_p_marina(compressor.rho(d), d)
    p = float(p)
    if not 0 < p <= 1:
        raise ConfigError(f"probability p must lie in (0, 1], got {p}")
    return compressor, p


def rmarina_run(
    worker_problems,
    x0,
    eta,
    p="auto",
    compressor=None,
    K=100,
    seed=0,
    trace_stride=1,
    lyapunov=None,
    mu=None,
):
    """R-MARINA for ``K`` rounds.

    ``lyapunov`` is ``None``, ``"pl"`` or ``"nonconvex"``; both potentials need
    f* (known for quadratic workers).
    """
    compressor = Identity() if compressor is None else compressor
    objective, workers, server, coin = init_marina(worker_problems, x0, seed)
    d = objective.manifold.dim
    compressor, p = _resolve(compressor, p, d)
    if not eta > 0:
        raise ConfigError("stepsize must be positive")
    if K < 0:
        raise ConfigError("K must be nonnegative")
    if mu is not None:
        objective.meta.mu = mu
    t0 = time.perf_counter()
    lyap = None
    if lyapunov is not None:
        if objective.meta.f_star is None:
            raise ConfigError("tracking a Lyapunov potential needs f* to be known")
        fn = {"pl": lyapunov_marina_pl_value, "nonconvex": lyapunov_marina_value}.get(lyapunov)
        if fn is None:
            raise ConfigError(f"unknown Lyapunov kind {lyapunov!r}")
        lyap = lambda x, s: fn(objective, x, s.g, eta, p)  # noqa: E731
    rec = Recorder(objective, trace_stride, K, lyap)
    total = lambda: int(server.comm_ledger.sum())  # noqa: E731
    rec.record(0, server.x, server.grad_evals, total(), state=server, force=True)
    dense_rounds = 0
    for k in range(1, K + 1):
        dense_rounds += marina_round(objective, workers, server, eta, p, compressor, coin)
        rec.record(k, server.x, server.grad_evals, total(), state=server)
    round_costs = np.array(server.round_costs, dtype=float).reshape(-1, len(workers))
    trace = RunTrace("rmarina", records=rec.records, x_final=server.x)
    trace.summary.update(
        wall_time=time.perf_counter() - t0,
        total_grad_evals=server.grad_evals,
        seed=seed,
        eta=eta,
        p=p,
        compressor=repr(compressor),
        omega=compressor.omega(d),
        rho_Q=compressor.rho(d),
        workers=len(workers),
        dense_rounds=dense_rounds,
        comm_per_worker=server.comm_ledger.tolist(),
        mean_round_cost_per_worker=float(round_costs.mean()) if K else None,
        f_star=objective.meta.f_star,
    )
    trace.summary["_server"] = server
    trace.summary["_workers"] = workers
    return trace


def rmarina_run_pl(worker_problems, x0, eta=None, p="auto", compressor=None, K=100, seed=0,
                   trace_stride=1, mu=None):
    """R-MARINA with the PL stepsize and potential; f* must be known."""
    compressor = Identity() if compressor is None else compressor
    objective = WorkerAverage(worker_problems, mu=mu)
    if objective.meta.f_star is None:
        raise ConfigError("the PL variant needs f* to be known")
    d = objective.manifold.dim
    compressor, p = _resolve(compressor, p, d)
    if eta is None:
        m = objective.meta.mu if mu is None else mu
        if not m > 0:
            raise ConfigError("the PL stepsize needs mu > 0")
        eta = default_stepsize_marina_pl(
            objective.meta.L, p, compressor.omega(d), len(worker_problems), m
        )
    trace = rmarina_run(worker_problems, x0, eta, p, compressor, K, seed, trace_stride, "pl", mu)
    trace.algorithm = "rmarina-pl"
    return trace


def check_aggregation(server, workers, tol=1e-14):
    """Server g equals the mean of the worker estimators."""
    mean = exact_mean([w.g_i for w in workers])
    err = float(np.max(np.abs(server.g - mean)))
    if err > tol:
        raise StructuralError(f"server aggregate off by {err}")
    return err


__all__ = [
    "WorkerAverage",
    "WorkerState",
    "ServerState",
    "split_problem",
    "rmarina_run",
    "rmarina_run_pl",
    "marina_round",
    "init_marina",
    "default_stepsize_marina",
    "default_stepsize_marina_pl",
    "default_p_marina",
    "expected_comm_per_round",
    "lyapunov_marina_pl_value",
    "lyapunov_marina_value",
    "exact_mean",
]
