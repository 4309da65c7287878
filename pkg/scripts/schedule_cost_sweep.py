"""Total cost needed to push the regression optimality gap below a target, per schedule.

Reads the CSVs written by ``reproduce_regression.py`` and prints, for each
(case, cost pair), the first cumulative cost at which ``A_k`` (or the regret
with ``--column regret``) drops below ``--target`` times its initial value.
"""
import argparse
import csv
from pathlib import Path

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("results", nargs="?", default="results/regression")
parser.add_argument("--column", default="A_k", choices=["A_k", "B_k", "regret", "ergodic_gap"])
parser.add_argument("--target", type=float, default=0.999)
args = parser.parse_args()

rows = []
for path in sorted(Path(args.results).glob("case*_cg*_cc*.csv")):
    with open(path) as fh:
        data = list(csv.DictReader(fh))
    first = float(data[0][args.column])
    hit = next((r for r in data if float(r[args.column]) <= args.target * first), None)
    rows.append((path.stem, f"{float(hit['cum_cost']):.4g}" if hit else "not reached",
                 hit["k"] if hit else "-", f"{float(data[-1][args.column]):.4e}"))

if not rows:
    raise SystemExit(f"no trajectory CSVs in {args.results}")
width = max(len(r[0]) for r in rows)
print(f"{'run':<{width}}  cost_to_target  k  final_{args.column}")
for name, c, k, final in rows:
    print(f"{name:<{width}}  {c:>14}  {k}  {final}")
