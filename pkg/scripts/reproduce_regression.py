"""Least-squares experiment over the five schedule cases and three cost pairs.

    python3 scripts/reproduce_regression.py --out results/regression --iters 10000
"""
import argparse
import sys

from neardgd import harness

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--iters", type=int, default=10_000)
parser.add_argument("--out", default="results/regression")
args = parser.parse_args()

cfg = harness.preset_regression(seed=args.seed)
cfg.K = args.iters
print(harness.inspect(cfg))
result = harness.run_experiment(cfg, args.out)
print(harness.format_summary(result))
sys.exit(result.exit_code)
