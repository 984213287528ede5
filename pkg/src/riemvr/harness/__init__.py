"""Experiment configuration, orchestration and the command line."""
from .cli import cli_main
from .config import ExperimentConfig, load_config, validate
from .runner import (
    PRESETS,
    build_problem,
    compare_thresholds,
    evals_to_threshold,
    read_trace,
    run_experiment,
    run_preset,
    summarize,
    write_summary,
    write_trace,
)
from .verify import SUITES, run_suites

__all__ = [
    "cli_main",
    "ExperimentConfig",
    "load_config",
    "validate",
    "PRESETS",
    "build_problem",
    "compare_thresholds",
    "evals_to_threshold",
    "read_trace",
    "run_experiment",
    "run_preset",
    "summarize",
    "write_summary",
    "write_trace",
    "SUITES",
    "run_suites",
]
