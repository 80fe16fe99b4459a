"""Command-line front end.

Subcommands ``optimize``, ``evaluate``, ``scan`` and ``single-stage`` read a
sectioned config file and write CSV/INI outputs whose header comment block
holds the fully resolved configuration. Exit codes: 0 success, 1 invalid
input or resource problem, 2 optimization finished without a feasible design.
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INFEASIBLE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mamsopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("optimize", "search for the design minimizing the weighted sample-size objective"),
        ("evaluate", "operating characteristics of competing approaches over true variances"),
        ("scan", "error rate over a grid of effect vectors"),
        ("single-stage", "smallest single-stage design meeting the targets"),
    ):
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="config file")
        p.add_argument("--seed", type=int, default=None, help="overrides the bank (and CE) seed")
        p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
        p.add_argument("--out", default=None, help="output directory (default: [output] dir or .)")
        p.add_argument("--replicates", type=int, default=None, help="overrides bank replicates")
    return parser


def _configure_threads(threads: int | None) -> None:
    # must run before numba is imported for the cap to raise the pool size
    if threads is not None:
        os.environ["NUMBA_NUM_THREADS"] = str(threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    if args.replicates is not None and args.replicates < 1:
        print("error: --replicates must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_INVALID
    _configure_threads(args.threads)

    from .config import Overrides, Reader
    from .errors import ConfigurationError, ResourceError

    if args.threads is not None:
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    overrides = Overrides(seed=args.seed, replicates=args.replicates, threads=args.threads,
                          out=args.out)
    command = {
        "optimize": cmd_optimize,
        "evaluate": cmd_evaluate,
        "scan": cmd_scan,
        "single-stage": cmd_single_stage,
    }[args.command]
    try:
        reader = Reader.from_path(args.config)
        return command(reader, overrides)
    except (ConfigurationError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


# ---------------------------------------------------------------------------
# shared plumbing


def _out_dir(reader, overrides) -> Path:
    out = overrides.out or reader.get("output", "dir", str, default=".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _bank(config, cache):
    from .bank import load_or_build

    return load_or_build(config, cache)


def _single_stage(settings, mode, bank_seed: int, replicates: int, budget: float):
    from .bank import BankConfig, build_bank
    from .optimize import normal_sample_size, single_stage_reference

    n_guess = normal_sample_size(settings.alpha, settings.beta, settings.delta1, settings.sigma2)
    cfg = BankConfig(replicates=replicates, K=settings.K, J=1,
                     n_max=max(4, int(math.ceil(2.0 * n_guess)) + 2), seed=bank_seed,
                     memory_budget_mb=budget)
    return single_stage_reference(settings, mode, build_bank(cfg))


def _write(path: Path, header: str, body: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header)
        fh.write(body)


def _csv(rows) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands


def cmd_single_stage(reader, overrides) -> int:
    from .config import read_bank, read_statistic, read_trial
    from .optimize import normal_sample_size

    settings = read_trial(reader)
    mode = read_statistic(reader, "single_stage", settings.sigma)
    guess = normal_sample_size(settings.alpha, settings.beta, settings.delta1, settings.sigma2)
    bank_cfg, cache = read_bank(reader, settings.K, 1, max(4, int(math.ceil(2 * guess)) + 2),
                                overrides)
    bank = _bank(bank_cfg, cache)
    from .optimize import single_stage_reference

    res = single_stage_reference(settings, mode, bank)
    out = _out_dir(reader, overrides)
    rows = [("K", "n_per_arm", "e1", "fwer", "power", "total", "R"),
            (settings.K, res.n, f"{res.e1:.6f}", f"{res.fwer:.4f}", f"{res.power:.4f}",
             res.total, bank_cfg.replicates)]
    _write(out / "single_stage.csv", reader.header("single-stage"), _csv(rows))
    print(f"n per arm = {res.n}, e1 = {res.e1:.4f}, fwer = {res.fwer:.4f}, "
          f"power = {res.power:.4f}, total = {res.total}")
    return EXIT_OK


def cmd_optimize(reader, overrides) -> int:
    from .config import read_bank, read_ce, read_objective, read_statistic, read_trial, rule_value
    from .engine import Design
    from .optimize import ObjectiveSpec, ce_optimize, write_trace_csv

    settings = read_trial(reader)
    rule = reader.get("design", "rule", rule_value, required=True)
    mode = read_statistic(reader, "design", settings.sigma)
    weights, penalty = read_objective(reader)
    build_ce, n_range, warm = read_ce(reader, overrides)

    # the single-stage reference gives the penalty and, if asked, the n range
    single = None
    if penalty == "auto" or n_range is None:
        budget = reader.get("bank", "memory_budget_mb", float, default="2048")
        seed = overrides.seed if overrides.seed is not None else reader.get(
            "bank", "seed", int, default="20170601")
        reps = overrides.replicates or reader.get("bank", "replicates", int, default="100000")
        single = _single_stage(settings, mode, seed, reps, budget)
        reader.set_resolved("single_stage", "n_per_arm", single.n)
        reader.set_resolved("single_stage", "e1", round(single.e1, 6))
    if penalty == "auto":
        penalty = float(single.total)
        reader.set_resolved("objective", "penalty", penalty)
    if n_range is None:
        n_range = (max(2, int(math.floor(0.4 * single.n))), int(math.ceil(0.7 * single.n)))
    ce = build_ce(n_range)
    bank_cfg, cache = read_bank(reader, settings.K, settings.J, ce.n_range[1], overrides)
    warm_design = None
    if warm is not None:
        try:
            warm_design = Design(warm[0], tuple(warm[1]), tuple(warm[2]), rule)
        except Exception as exc:
            raise reader.error("ce", "warm_e", str(exc)) from None
    spec = ObjectiveSpec(*weights, alpha=settings.alpha, beta=settings.beta,
                         penalty=penalty, delta=settings.delta)
    out = _out_dir(reader, overrides)
    bank = _bank(bank_cfg, cache)

    result = ce_optimize(settings, rule, spec, ce, bank, mode=mode, warm_start=warm_design)
    header = reader.header("optimize")
    d = result.best
    design_text = (
        "[design]\n"
        f"rule = {d.rule.value}\n"
        f"n = {d.n}\n"
        f"e = {', '.join(f'{x:.6f}' for x in d.e)}\n"
        f"f = {', '.join(f'{x:.6f}' for x in d.f)}\n"
    )
    _write(out / "design.ini", header, design_text)
    rows = [("n", "score", "feasible", "fwer", "power", "ess_null", "ess_alt",
             "max_sample_size", "penalty", "evaluations", "converged", "R"),
            (d.n, f"{result.score:.3f}", int(result.feasible), f"{result.oc_null.fwer:.4f}",
             f"{result.oc_alt.power:.4f}", f"{result.oc_null.ess:.1f}",
             f"{result.oc_alt.ess:.1f}", d.max_sample_size(settings.K), f"{penalty:g}",
             result.evaluations, int(result.converged), bank_cfg.replicates)]
    _write(out / "oc_summary.csv", header, _csv(rows))
    write_trace_csv(result, out / "trace.csv", settings.J, header=header)
    status = "feasible" if result.feasible else "INFEASIBLE"
    print(f"{status}: n = {d.n}, e = {list(d.e)}, f = {list(d.f)}, score = {result.score:.3f}")
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def _evaluate_plan(reader, settings):
    """(grid, approaches_for, scenarios, max n) for the [evaluate] section."""
    from .comparators import (
        APPROACH_TAGS, ComparisonGrid, SCENARIOS, Scenario, load_table1, make_approach,
        table1_approaches,
    )
    from .config import number_list, read_design, rule_value, word_list

    s = "evaluate"
    source = reader.get(s, "designs", str, default="table1",
                        check=lambda v: None if v in ("table1", "config")
                        else "expected 'table1' or 'config'")
    tags = reader.get(s, "approaches", word_list, default=", ".join(APPROACH_TAGS),
                      check=lambda v: None if v and set(v) <= set(APPROACH_TAGS)
                      else f"approaches must be among {', '.join(APPROACH_TAGS)}")
    sig = reader.get(s, "sigma2_true", number_list, default="0.25, 0.5, 1.0, 2.0, 4.0",
                     check=lambda v: None if v and min(v) > 0 else "values must be positive")
    assumed = settings.sigma
    if source == "table1":
        if (settings.K, settings.J) != (3, 2):
            raise reader.error("trial", "K", "the bundled published designs have K=3, J=2")
        scen = reader.get(s, "scenarios", word_list, default="1, 2",
                          check=lambda v: None if v and set(v) <= set(SCENARIOS)
                          else f"scenarios must be among {', '.join(SCENARIOS)}")
        rules = reader.get(s, "rules", lambda t: [rule_value(x) for x in word_list(t)],
                           default="simultaneous, separate")
        grid = ComparisonGrid(tuple(sig), tuple(scen), tuple(rules))
        n_max = max(d.n for d in load_table1().values())

        def approaches_for(name, rule):
            return table1_approaches(name, rule, assumed, tags)

        return grid, approaches_for, SCENARIOS, n_max
    design = read_design(reader)
    label = reader.get("trial", "name", str, default="custom")
    scenarios = {label: Scenario(label, settings.delta1, settings.delta0)}
    grid = ComparisonGrid(tuple(sig), (label,), (design.rule,))

    def approaches_for(name, rule):
        return [make_approach(t, design, assumed) for t in tags]

    return grid, approaches_for, scenarios, design.n


def cmd_evaluate(reader, overrides) -> int:
    from .comparators import evaluate_approaches, write_comparison_csv
    from .config import read_bank, read_trial

    settings = read_trial(reader, need_deltas=reader.get(
        "evaluate", "designs", str, default="table1") == "config")
    grid, approaches_for, scenarios, n_needed = _evaluate_plan(reader, settings)
    bank_cfg, cache = read_bank(reader, settings.K, settings.J, n_needed, overrides)
    out = _out_dir(reader, overrides)
    # validate every design before the (possibly long) bank build
    for name in grid.scenarios:
        for rule in grid.rules:
            for approach in approaches_for(name, rule):
                approach.design(settings.K)
    bank = _bank(bank_cfg, cache)
    rows = evaluate_approaches(grid, bank, approaches_for, scenarios)
    with open(out / "comparison.csv", "w", newline="") as fh:
        write_comparison_csv(rows, fh, header=reader.header("evaluate"))
    print(f"wrote {len(rows)} rows to {out / 'comparison.csv'}")
    return EXIT_OK


def _scan_points(reader, K: int):
    from .config import number_list

    s = "scan"
    has_levels = reader.parser.has_option(s, "levels")
    has_points = reader.parser.has_option(s, "points")
    if has_levels == has_points:
        raise reader.error(s, None, "give exactly one of 'levels' or 'points'")
    if has_levels:
        levels = reader.get(s, "levels", number_list, check=lambda v: None if v else "empty")
        return [tuple(p) for p in itertools.product(levels, repeat=K)]

    def parse_points(text):
        pts = [tuple(number_list(chunk)) for chunk in text.split(";") if chunk.strip()]
        if not pts:
            raise ValueError("no points given")
        if any(len(p) != K for p in pts):
            raise ValueError(f"every point needs K={K} entries")
        return pts

    return reader.get(s, "points", parse_points)


def cmd_scan(reader, overrides) -> int:
    from .config import number, positive, read_bank, read_design, read_statistic, read_trial
    from .oc import fwer_scan

    settings = read_trial(reader, need_deltas=False)
    design = read_design(reader)
    mode = read_statistic(reader, "scan", settings.sigma)
    sigma2_true = reader.get("scan", "sigma2_true", number, default="1.0", check=positive)
    points = _scan_points(reader, settings.K)
    bank_cfg, cache = read_bank(reader, settings.K, settings.J, design.n, overrides)
    out = _out_dir(reader, overrides)
    from .engine import validate_design

    try:
        validate_design(design, settings.K, settings.J, mode)
    except Exception as exc:
        raise reader.error("design", "n", str(exc)) from None
    bank = _bank(bank_cfg, cache)
    result = fwer_scan(design, mode, points, math.sqrt(sigma2_true), bank)
    theta_cols = [f"theta_{k}" for k in range(1, settings.K + 1)]
    rows = [["row"] + theta_cols + ["error_rate", "mc_se"]]
    for i, (theta, rate, se) in enumerate(result.rows, start=1):
        rows.append([i] + [f"{t:g}" for t in theta] + [f"{rate:.4f}", f"{se:.4f}"])
    best = max(result.rows, key=lambda row: row[1])
    rows.append(["MAX"] + [f"{t:g}" for t in best[0]] + [f"{best[1]:.4f}", f"{best[2]:.4f}"])
    _write(out / "scan.csv", reader.header("scan"), _csv(rows))
    print(f"max error rate {best[1]:.4f} at theta = {list(best[0])} over {len(points)} points")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
