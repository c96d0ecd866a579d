"""Command line entry point: ``tweezer-transport <command> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments
from .config import ConfigError, load
from .evolution import SCHEMES, NormDriftError
from .grid import EigensolverError
from .sta import STAConstructionError

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("simulate", "sweep-time", "heatmap", "optimize", "validate", "export-pulse")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tweezer-transport",
                                     description="Atom transport between optical tweezers.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="TOML run configuration")
    parser.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    parser.add_argument("--jobs", type=int, default=None,
                        help=f"worker processes (default ${experiments.JOBS_ENV} or 1)")
    parser.add_argument("--seed", type=int, help="basis seed for the optimizer")
    parser.add_argument("--pulse", help="pulse family, e.g. sta, min_jerk, hybrid_0.4")
    parser.add_argument("--scheme", choices=SCHEMES, help="splitting scheme")
    return parser


def _overrides(args) -> dict:
    ov: dict = {}
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.scheme is not None:
        ov["evolution"] = {"scheme": args.scheme}
    if args.pulse is not None:
        ov["pulse"] = {"family": args.pulse}
        ov["sweep"] = {"families": [args.pulse]}
        ov["optimizer"] = {"families": [args.pulse]}
    return ov


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else cfg.output_dir
    jobs = args.jobs if args.jobs is not None else experiments.default_jobs()
    if jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "simulate":
            result = experiments.simulate(cfg, out)
        elif args.command == "sweep-time":
            if len(cfg.sweep_times) < 2:
                raise ConfigError("sweep-time needs at least 2 T values")
            result = experiments.sweep_time(cfg, out, jobs)
        elif args.command == "heatmap":
            if len(cfg.sweep_times) < 2 or len(cfg.sweep_amplitudes) < 2:
                raise ConfigError("heatmap needs at least 2 values on both axes")
            result = experiments.heatmap(cfg, out, jobs)
        elif args.command == "optimize":
            result = experiments.optimize(cfg, out, jobs)
        elif args.command == "validate":
            result = experiments.validate(cfg, out)
        else:
            result = {"pulse_csv": str(experiments.export_pulse(cfg, out))}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NormDriftError, EigensolverError, STAConstructionError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    if args.command == "validate" and not result["passed"]:
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
