"""Command line: ``riemvr run|verify|bench``.

Exit codes: 0 success, 1 a verification failed, 2 bad configuration or usage.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..exceptions import ConfigError
from .config import load_config
from .runner import PRESETS, run_experiment, run_preset
from .verify import SUITES, run_suites


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
    common.add_argument("--out", help="output directory")
    common.add_argument("--stride", type=int, help="record metrics every this many steps")

    ap = argparse.ArgumentParser(prog="riemvr", description="Riemannian variance-reduced optimization runs")
    sub = ap.add_subparsers(dest="command", metavar="{run,verify,bench}")
    run = sub.add_parser("run", parents=[common], help="run an experiment config (TOML)")
    run.add_argument("config")
    ver = sub.add_parser("verify", parents=[common], help="run self-check suites, print a JSON report")
    ver.add_argument("--suite", default="all", choices=["all", *SUITES])
    bench = sub.add_parser("bench", parents=[common], help="run a built-in preset")
    bench.add_argument("preset", choices=sorted(PRESETS))
    return ap


def cli_main(argv=None):
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.seeds = [args.seed]
            if args.out is not None:
                cfg.out = args.out
            if args.stride is not None:
                if args.stride < 1:
                    raise ConfigError("--stride must be positive")
                cfg.stride = args.stride
            for p in run_experiment(cfg):
                print(p)
            return 0
        if args.command == "verify":
            report = run_suites(args.suite)
            text = json.dumps(report, indent=2, default=float)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "verify.json").write_text(text + "\n")
            print(text)
            return 0 if report["pass"] else 1
        if args.command == "bench":
            seeds = None if args.seed is None else [args.seed]
            report = run_preset(args.preset, out=args.out, seeds=seeds, stride=args.stride)
            print(json.dumps({k: v for k, v in report.items() if k != "traces"}, indent=2, default=str))
            return 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"riemvr: error: {exc}", file=sys.stderr)
        return 2
    return 2


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
