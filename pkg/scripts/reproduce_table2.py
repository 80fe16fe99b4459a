"""Run the published designs four ways and compare with the reference table.

Usage: python scripts/reproduce_table2.py [--replicates R] [--seed S] [--out DIR]
"""

import argparse
import csv
import sys
from pathlib import Path

from mamsopt.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]
TOL = {"fwer": 0.005, "power": 0.007, "ess_null": 2.0, "ess_alt": 2.0}


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def key(row):
    return row["scenario"], row["rule"], row["approach"], float(row["sigma2_true"])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="out/table2")
    args = ap.parse_args()
    code = cli_main(["evaluate", "--config", str(ROOT / "configs" / "evaluate_table2.ini"),
                     "--out", args.out, "--replicates", str(args.replicates),
                     "--seed", str(args.seed)])
    if code:
        return code
    ours = {key(r): r for r in read(Path(args.out) / "comparison.csv")}
    ref = {key(r): r for r in read(ROOT / "tests" / "data" / "table2.csv")}
    print(f"{'scenario':>8} {'rule':>12} {'app':>3} {'s2':>5}  "
          + "  ".join(f"{m:>17}" for m in TOL))
    misses = 0
    for k in sorted(ref):
        cells = []
        for m, tol in TOL.items():
            got, want = float(ours[k][m]), float(ref[k][m])
            flag = " " if abs(got - want) <= tol + 1e-12 else "*"
            misses += flag == "*"
            cells.append(f"{got:8.4f}/{want:7.4f}{flag}")
        print(f"{k[0]:>8} {k[1]:>12} {k[2]:>3} {k[3]:5g}  " + "  ".join(cells))
    print(f"\n{misses} values outside tolerance (marked *)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
