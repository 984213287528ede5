"""Per-iteration run records shared by all optimizers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

COLUMNS = ("step", "grad_evals", "comm_coords", "f_value", "grad_norm_sq", "dist_to_opt", "lyapunov")


@dataclass
class RunTrace:
    algorithm: str
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    x_final: np.ndarray | None = None

    def column(self, name):
        """Column as a float array; missing values become NaN."""
        if name not in COLUMNS:
            raise KeyError(name)
        return np.array([np.nan if r[name] is None else r[name] for r in self.records], dtype=float)

    @property
    def steps(self):
        return self.column("step").astype(int)

    def running_min(self, name="grad_norm_sq"):
        return np.fmin.accumulate(self.column(name))

    def __len__(self):
        return len(self.records)


class Recorder:
    """Evaluates metrics out of band; never touches the gradient budget."""

    def __init__(self, problem, stride=1, K=0, lyapunov=None):
        if stride < 1:
            raise ValueError("trace stride must be at least 1")
        self.problem = problem
        self.stride = stride
        self.K = K
        self.lyapunov = lyapunov
        self.records = []

    def due(self, step):
        return step % self.stride == 0 or step == self.K

    def record(self, step, x, grad_evals, comm_coords=None, state=None, force=False):
        if not (force or self.due(step)):
            return
        problem = self.problem
        g = problem.metric_gradient(x)
        lyap = None if self.lyapunov is None else self.lyapunov(x, state)
        self.records.append(
            {
                "step": step,
                "grad_evals": grad_evals,
                "comm_coords": comm_coords,
                "f_value": problem.value(x),
                "grad_norm_sq": float(np.dot(g, g)),
                "dist_to_opt": problem.dist_to_opt(x),
                "lyapunov": lyap,
            }
        )


def delta0(trace, f_star=None):
    """f(x^0) - f*, falling back to the best observed value (flagged) when f* is unknown."""
    f = trace.column("f_value")
    if f_star is not None:
        return float(f[0] - f_star), False
    return float(f[0] - np.nanmin(f)), True


def finite_or_none(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v
