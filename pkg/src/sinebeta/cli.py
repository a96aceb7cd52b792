"""Command line entry point.

Runs a configured experiment (--config/--out) or the acceptance
validation suite (--validate).  Exit codes: 0 success, 1 validation
failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import experiments, validation
from ._version import __version__
from .experiments import ConfigError, ExperimentConfig


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sinebeta",
        description="Monte Carlo laboratory for the Sine_beta point process")
    p.add_argument("--config", type=Path,
                   help="experiment config JSON file")
    p.add_argument("--out", type=Path,
                   help="output directory (default: ./sinebeta_out)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: SINEBETA_WORKERS or 1); "
                        "never affects numeric results")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's base_seed")
    p.add_argument("--validate", action="store_true",
                   help="run the acceptance criteria and report per-criterion "
                        "status")
    p.add_argument("--criteria", default=None,
                   help="comma-separated criterion numbers to restrict "
                        "--validate, e.g. 1,5,7")
    p.add_argument("--version", action="version", version=__version__)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    workers = args.workers
    if workers is None:
        try:
            workers = int(os.environ.get("SINEBETA_WORKERS", "1"))
        except ValueError:
            workers = 1

    if args.validate:
        only = None
        if args.criteria:
            try:
                only = [int(tok) for tok in args.criteria.split(",") if tok]
            except ValueError:
                print(f"bad --criteria value: {args.criteria!r}",
                      file=sys.stderr)
                return 2
        results = validation.run_all(only)
        print(validation.format_report(results))
        return 0 if all(r.passed for r in results) else 1

    if args.config is None:
        print("either --config or --validate is required", file=sys.stderr)
        return 2
    try:
        cfg = ExperimentConfig.from_json(args.config.read_text())
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, base_seed=args.seed)
        out = args.out if args.out is not None else Path("sinebeta_out")
        result = experiments.run(cfg, out, n_workers=max(1, workers))
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result.summary, indent=2, default=float))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
