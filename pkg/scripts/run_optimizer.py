"""Optimize one of the bundled scenario/rule settings and compare with the
published balanced-optimal design on the same bank.

Usage: python scripts/run_optimizer.py 2 simultaneous [--out DIR]
"""

import argparse
import csv
import sys
from pathlib import Path

from mamsopt.bank import BankConfig, build_bank
from mamsopt.cli import main as cli_main
from mamsopt.comparators import SCENARIOS, load_table1
from mamsopt.engine import Design, StoppingRule
from mamsopt.optimize import ObjectiveSpec, TrialSettings, evaluate_design

ROOT = Path(__file__).resolve().parents[1]


def read_design(path, rule):
    values = dict(line.split(" = ") for line in Path(path).read_text().splitlines()
                  if " = " in line and not line.startswith("#"))
    return Design(int(values["n"]), tuple(map(float, values["e"].split(","))),
                  tuple(map(float, values["f"].split(","))), rule)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=sorted(SCENARIOS))
    ap.add_argument("rule", choices=[r.value for r in StoppingRule])
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = ROOT / "configs" / f"scenario{args.scenario}_{args.rule}.ini"
    out = Path(args.out or f"out/scenario{args.scenario}_{args.rule}")
    code = cli_main(["optimize", "--config", str(cfg), "--out", str(out)])
    if code == 1:
        return code
    rule = StoppingRule(args.rule)
    ours = read_design(out / "design.ini", rule)
    with open(out / "oc_summary.csv") as fh:
        summary = next(csv.DictReader(l for l in fh if not l.startswith("#")))
    scen = SCENARIOS[args.scenario]
    settings = TrialSettings(3, 2, 0.05, 0.1, scen.delta1, scen.delta0)
    spec = ObjectiveSpec(1 / 3, 1 / 3, 1 / 3, 0.05, 0.1, float(summary["penalty"]),
                         settings.delta)
    published = load_table1()[(args.scenario, rule, "optimal")]
    n_max = max(ours.n, published.n)
    bank = build_bank(BankConfig(100_000, 3, 2, n_max, seed=7))
    for label, d in (("optimized", ours), ("published", published)):
        score, null, alt, feasible = evaluate_design(d, settings, spec, bank)
        print(f"{label:>10}: n={d.n} e={d.e} f={d.f}\n{'':>12}score {score:.3f} "
              f"fwer {null.fwer:.4f} power {alt.power:.4f} feasible {feasible}")
    return code


if __name__ == "__main__":
    sys.exit(main())
