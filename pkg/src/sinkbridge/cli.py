"""Command-line entry point: `sinkbridge <experiment> --config <file>`."""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_THRESHOLD = 3


def build_parser() -> argparse.ArgumentParser:
    from .experiments import EXPERIMENTS

    parser = argparse.ArgumentParser(
        prog="sinkbridge",
        description="Schrödinger-bridge estimation experiments via the Sinkhorn bridge.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="experiment to run")
    parser.add_argument("--config", type=str, default=None,
                        help="JSON config file mirroring ExperimentConfig")
    parser.add_argument("--seed", type=int, default=None, help="override the seed")
    parser.add_argument("--out", type=str, default=None, help="override the output directory")
    parser.add_argument("--dry-run", action="store_true",
                        help="print the resolved grid and exit")
    return parser


def _load_config(args):
    from .experiments import ExperimentConfig

    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise ValueError(f"config file not found: {path}")
        cfg = ExperimentConfig.from_json(path.read_text())
        if cfg.experiment != args.experiment:
            raise ValueError(
                f"config is for {cfg.experiment!r}, but {args.experiment!r} was requested"
            )
    else:
        cfg = ExperimentConfig.for_experiment(args.experiment)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        cfg = _load_config(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dry_run:
        print(cfg.grid_description())
        return EXIT_OK

    from .experiments import run_experiment
    from .reports import emit_outputs

    import numpy as np

    start = time.monotonic()
    try:
        result = run_experiment(cfg)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    wall = time.monotonic() - start

    try:
        written = emit_outputs(result, cfg.out_dir, extra_meta={"wall_time_s": wall})
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    for path in written:
        print(f"wrote {path}")
    print(result.message)
    if not result.passed:
        print("acceptance threshold missed", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
