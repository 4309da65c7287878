"""Command line: ``run``, ``verify`` and ``inspect``."""
from __future__ import annotations

import argparse
import sys

from . import harness, verify
from .dynamics import CASES


def _config(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.ExperimentConfig.load(args.config)
    else:
        cfg = harness.PRESETS[args.preset](seed=0)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "case", None) is not None:
        cfg.schedules = [f"case:{args.case}"]
    if getattr(args, "iters", None) is not None:
        cfg.K = args.iters
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    return cfg


def _add_source(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(harness.PRESETS))
    src.add_argument("--config", metavar="FILE", help="JSON experiment config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neardgd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment and write trajectory CSVs")
    _add_source(p)
    p.add_argument("--case", type=int, choices=sorted(CASES), help="run a single schedule case")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--iters", type=int, metavar="K", help="override the iteration count")

    p = sub.add_parser("verify", help="numerical battery over the supporting inequalities")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("inspect", help="print the constants of a config")
    _add_source(p)
    p.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            rows = verify.run_battery(args.seed)
            print(verify.format_battery(rows))
            return 0 if all(r.passed for r in rows) else 1
        cfg = _config(args)
        if args.command == "inspect":
            print(harness.inspect(cfg))
            return 0
        result = harness.run_experiment(cfg)
        print(harness.format_summary(result))
        print(f"wrote {cfg.out}/")
        return result.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
