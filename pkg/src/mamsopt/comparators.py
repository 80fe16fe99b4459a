"""Competing ways of running a design when the variance is unknown.

A1  known-variance boundaries, z statistics with the assumed sigma
A2  known-variance boundaries, t statistics
A3  known-variance boundaries mapped to t quantiles, t statistics
A4  boundaries optimized for t statistics
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Sequence

from .bank import ResponseBank
from .engine import Design, StatisticMode, StoppingRule, TStat, ZStat
from .errors import ConfigurationError
from .oc import estimate_oc_pair
from .stats import std_normal_cdf, t_isf

APPROACH_TAGS = ("A1", "A2", "A3", "A4")
CSV_COLUMNS = ("scenario", "rule", "approach", "sigma2_true", "fwer", "power",
               "ess_null", "ess_alt", "mc_se_fwer", "R")


@dataclass(frozen=True)
class Scenario:
    name: str
    delta1: float
    delta0: float

    def delta(self, K: int) -> tuple:
        return (self.delta1,) + (self.delta0,) * (K - 1)


SCENARIOS = {
    "1": Scenario("1", 0.545, 0.178),
    "2": Scenario("2", 1.0, 0.0),
}


def load_table1() -> dict:
    """Published designs keyed by ``(scenario, rule, kind)``, kind in {triangular, optimal}.

    The final-stage boundaries are printed to three decimals and in one row
    differ in the last digit; the tie is restored at the efficacy value. Since
    rejection is checked before acceptance this runs the printed design exactly.
    """
    text = resources.files("mamsopt").joinpath("data/table1.csv").read_text()
    designs = {}
    for row in csv.DictReader(io.StringIO(text)):
        e = (float(row["e1"]), float(row["e2"]))
        f = (float(row["f1"]), e[1])
        rule = StoppingRule(row["rule"])
        designs[(row["scenario"], rule, row["kind"])] = Design(int(row["n"]), e, f, rule)
    return designs


def planned_totals(n: int, K: int, J: int) -> list[int]:
    """Total recruitment through each stage if no arm is dropped."""
    return [(K + 1) * n * j for j in range(1, J + 1)]


def quantile_substitute(e, f, totals, K: int) -> tuple[tuple, tuple]:
    """Map normal boundaries to t boundaries with the same upper-tail probability.

    At stage j the t distribution has ``totals[j] - (K+1)`` degrees of freedom.
    """
    if not (len(e) == len(f) == len(totals)):
        raise ConfigurationError("e, f and totals must have one entry per stage")
    e_out, f_out = [], []
    for ej, fj, tot in zip(e, f, totals):
        nu = tot - (K + 1)
        if nu < 1:
            raise ConfigurationError(f"quantile substitution needs nu >= 1, got {nu}")
        e_out.append(_substitute(ej, nu))
        f_out.append(_substitute(fj, nu))
    return tuple(e_out), tuple(f_out)


def _substitute(b: float, nu: int) -> float:
    if not math.isfinite(b):
        return b
    # upper tail 1 - Phi(b) == Phi(-b), computed without cancellation
    return t_isf(float(std_normal_cdf(-b)), nu)


@dataclass(frozen=True)
class Approach:
    tag: str
    base_design: Design
    mode: StatisticMode
    quantile_substitution: bool = False

    def __post_init__(self):
        if self.tag not in APPROACH_TAGS:
            raise ConfigurationError(f"unknown approach {self.tag!r}")
        if (self.tag == "A3") != self.quantile_substitution:
            raise ConfigurationError("quantile substitution is used by A3 and only A3")
        if (self.tag == "A1") != isinstance(self.mode, ZStat):
            raise ConfigurationError("z statistics are used by A1 and only A1")

    def design(self, K: int) -> Design:
        d = self.base_design
        if not self.quantile_substitution:
            return d
        e, f = quantile_substitute(d.e, d.f, planned_totals(d.n, K, d.J), K)
        return Design(d.n, e, f, d.rule)


def make_approach(tag: str, design: Design, assumed_sigma: float = 1.0) -> Approach:
    if tag == "A1":
        return Approach(tag, design, ZStat(assumed_sigma))
    return Approach(tag, design, TStat(), quantile_substitution=tag == "A3")


def table1_approaches(scenario: str, rule, assumed_sigma: float = 1.0,
                      tags: Sequence[str] = APPROACH_TAGS) -> list[Approach]:
    """A1-A3 on the triangular design and A4 on the balanced-optimal design."""
    table = load_table1()
    rule = StoppingRule(rule)
    out = []
    for tag in tags:
        kind = "optimal" if tag == "A4" else "triangular"
        out.append(make_approach(tag, table[(str(scenario), rule, kind)], assumed_sigma))
    return out


@dataclass(frozen=True)
class ComparisonGrid:
    sigma2_true: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    scenarios: tuple = ("1", "2")
    rules: tuple = (StoppingRule.SIMULTANEOUS, StoppingRule.SEPARATE)

    def __post_init__(self):
        if not (self.sigma2_true and self.scenarios and self.rules):
            raise ConfigurationError("comparison grid lists must be non-empty")
        if any(not s > 0 for s in self.sigma2_true):
            raise ConfigurationError("true variances must be positive")


@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    rule: StoppingRule
    approach: str
    sigma2_true: float
    fwer: float
    power: float
    ess_null: float
    ess_alt: float
    mc_se_fwer: float
    R: int


def evaluate_approaches(grid: ComparisonGrid, bank: ResponseBank,
                        approaches_for: Callable[[str, StoppingRule], Sequence[Approach]],
                        scenarios: dict | None = None) -> list[ComparisonRow]:
    """Operating characteristics for every (scenario, rule, approach, true variance).

    Data always follow the true variance; A1's statistics keep the assumed sigma.
    """
    scenarios = scenarios or SCENARIOS
    K = bank.config.K
    rows = []
    for scen_name in grid.scenarios:
        scen = scenarios[str(scen_name)]
        for rule in grid.rules:
            rule = StoppingRule(rule)
            for approach in approaches_for(scen.name, rule):
                design = approach.design(K)
                for s2 in grid.sigma2_true:
                    null, alt = estimate_oc_pair(design, approach.mode, scen.delta(K),
                                                 math.sqrt(s2), bank)
                    rows.append(ComparisonRow(
                        scenario=scen.name, rule=rule, approach=approach.tag,
                        sigma2_true=float(s2), fwer=null.fwer, power=alt.power,
                        ess_null=null.ess, ess_alt=alt.ess, mc_se_fwer=null.mc_se_fwer,
                        R=null.replicates,
                    ))
    return rows


def write_comparison_csv(rows: Sequence[ComparisonRow], fh, header: str = "") -> None:
    if header:
        fh.write(header)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([
            r.scenario, r.rule.value, r.approach, f"{r.sigma2_true:g}",
            f"{r.fwer:.4f}", f"{r.power:.4f}", f"{r.ess_null:.1f}", f"{r.ess_alt:.1f}",
            f"{r.mc_se_fwer:.4f}", r.R,
        ])
