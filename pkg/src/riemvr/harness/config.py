"""TOML experiment configuration with strict key checking.

Layout::

    [problem]
    type = "quadratic"        # quadratic | rayleigh | online
    n = 50
    d = 20

    [[algorithms]]
    name = "rlsvrg"
    K = 1000

    [run]
    seeds = [0, 1, 2]
    stride = 10
    out = "runs"
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..exceptions import ConfigError

PROBLEM_KEYS = {
    "quadratic": {"type", "n", "d", "mu", "L", "seed", "heterogeneity", "x0_seed"},
    "rayleigh": {"type", "n", "d", "seed", "csv", "top", "tail", "x0_seed"},
    "online": {"type", "d", "seed", "scale", "cov_diag", "x0_seed"},
}
SINGLE_KEYS = {
    "name", "label", "eta", "K", "p", "B", "b", "inner_loop_m", "diameter", "kappa_min",
}
MARINA_KEYS = {
    "name", "label", "eta", "K", "p", "workers", "partition", "compressor", "lyapunov", "mu",
}
RUN_KEYS = {"seeds", "stride", "out", "pool"}
TOP_KEYS = {"problem", "algorithms", "run"}
SINGLE_ALGORITHMS = {"rgd", "rsgd", "rsvrg", "rlsvrg", "rpage"}
MARINA_ALGORITHMS = {"rmarina", "rmarina-pl"}


def _reject_unknown(section, data, allowed):
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"unknown key {extra[0]!r} in [{section}]")


@dataclass
class ExperimentConfig:
    problem: dict
    algorithms: list
    seeds: list = field(default_factory=lambda: [0])
    stride: int = 1
    out: str = "runs"
    pool: int = 1
    source: str | None = None

    def as_dict(self):
        return {
            "problem": copy.deepcopy(self.problem),
            "algorithms": copy.deepcopy(self.algorithms),
            "run": {"seeds": list(self.seeds), "stride": self.stride, "out": self.out, "pool": self.pool},
        }


def validate(data, source=None):
    """Check a parsed config dictionary and return an :class:`ExperimentConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a table")
    _reject_unknown("top level", data, TOP_KEYS)
    problem = data.get("problem")
    if not isinstance(problem, dict) or "type" not in problem:
        raise ConfigError("missing [problem] table with a 'type' key")
    ptype = problem["type"]
    if ptype not in PROBLEM_KEYS:
        raise ConfigError(f"unknown problem type {ptype!r}")
    _reject_unknown("problem", problem, PROBLEM_KEYS[ptype])
    if ptype == "rayleigh" and "csv" not in problem and not {"n", "d"} <= set(problem):
        raise ConfigError("rayleigh problem needs 'csv' or both 'n' and 'd'")
    if ptype == "quadratic":
        for key in ("n", "d"):
            if key not in problem:
                raise ConfigError(f"quadratic problem needs {key!r}")

    algos = data.get("algorithms")
    if not isinstance(algos, list) or not algos:
        raise ConfigError("need at least one [[algorithms]] entry")
    labels = set()
    for a in algos:
        if not isinstance(a, dict) or "name" not in a:
            raise ConfigError("each [[algorithms]] entry needs a 'name'")
        name = a["name"]
        if name in SINGLE_ALGORITHMS:
            _reject_unknown(f"algorithms.{name}", a, SINGLE_KEYS)
        elif name in MARINA_ALGORITHMS:
            _reject_unknown(f"algorithms.{name}", a, MARINA_KEYS)
            if ptype != "quadratic":
                raise ConfigError("distributed runs are configured for quadratic problems only")
        else:
            raise ConfigError(f"unknown algorithm {name!r}")
        if "K" not in a:
            raise ConfigError(f"algorithm {name!r} needs an iteration budget 'K'")
        label = a.get("label", name)
        if label in labels:
            raise ConfigError(f"duplicate algorithm label {label!r}; set 'label' to tell them apart")
        labels.add(label)

    run = data.get("run", {})
    _reject_unknown("run", run, RUN_KEYS)
    seeds = run.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("'seeds' must be a nonempty list of integers")
    stride = run.get("stride", 1)
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError("'stride' must be a positive integer")
    out = run.get("out", os.environ.get("RIEMVR_OUT", "runs"))
    pool = run.get("pool", int(os.environ.get("RIEMVR_THREADS", "1")))
    if not isinstance(pool, int) or pool < 1:
        raise ConfigError("'pool' must be a positive integer")
    return ExperimentConfig(problem, algos, seeds, stride, str(out), pool, source)


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} not found")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    problem = data.get("problem")
    # relative CSV paths resolve against the config file
    if isinstance(problem, dict) and "csv" in problem:
        csv = Path(problem["csv"])
        if not csv.is_absolute():
            problem["csv"] = str(path.parent / csv)
    return validate(data, str(path))
