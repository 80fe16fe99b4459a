"""Weighted sample-size objective and cross-entropy search over designs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .bank import ResponseBank
from .engine import Design, StatisticMode, StoppingRule, TStat
from .errors import ConfigurationError, ResourceError
from .oc import OCEstimate, estimate_oc_pair
from .stats import normal_quantile


@dataclass(frozen=True)
class TrialSettings:
    """Fixed problem instance: K arms against control, up to J stages."""

    K: int
    J: int
    alpha: float
    beta: float
    delta1: float
    delta0: float
    sigma2: float = 1.0

    def __post_init__(self):
        if self.K < 1 or self.J < 1:
            raise ConfigurationError("K and J must be >= 1")
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ConfigurationError("alpha and beta must lie in (0, 1)")
        if not self.sigma2 > 0:
            raise ConfigurationError("sigma2 must be positive")
        if not self.delta1 > 0:
            raise ConfigurationError("delta1 must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def delta(self) -> tuple:
        """Least favourable configuration (delta1, delta0, ..., delta0)."""
        return (self.delta1,) + (self.delta0,) * (self.K - 1)


@dataclass(frozen=True)
class ObjectiveSpec:
    w1: float
    w2: float
    w3: float
    alpha: float
    beta: float
    penalty: float
    delta: tuple

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3) < 0:
            raise ConfigurationError("objective weights must be non-negative")
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ConfigurationError("alpha and beta must lie in (0, 1)")
        if not self.penalty > 0:
            raise ConfigurationError("penalty must be positive")


def objective(design: Design, oc_null: OCEstimate, oc_alt: OCEstimate,
              spec: ObjectiveSpec, J: int, K: int) -> float:
    """w1*ESS(0) + w2*ESS(delta) + w3*n*J*(K+1) plus the relative-excess penalty."""
    score = spec.w1 * oc_null.ess + spec.w2 * oc_alt.ess + spec.w3 * design.n * J * (K + 1)
    fwer = oc_null.fwer
    beta_hat = 1.0 - oc_alt.power
    excess = 0.0
    if fwer > spec.alpha:
        excess += (fwer - spec.alpha) / spec.alpha
    if beta_hat > spec.beta:
        excess += (beta_hat - spec.beta) / spec.beta
    return score + spec.penalty * excess


def is_feasible(oc_null: OCEstimate, oc_alt: OCEstimate, alpha: float, beta: float) -> bool:
    return oc_null.fwer <= alpha and 1.0 - oc_alt.power <= beta


def violation(oc_null: OCEstimate, oc_alt: OCEstimate, alpha: float, beta: float) -> float:
    """Relative excess of the FWER and type-II rates over their targets (0 if feasible)."""
    return (max(oc_null.fwer - alpha, 0.0) / alpha
            + max(1.0 - oc_alt.power - beta, 0.0) / beta)


# ---------------------------------------------------------------------------
# single-stage reference


@dataclass(frozen=True)
class SingleStageResult:
    n: int  # per arm
    e1: float
    fwer: float
    power: float
    K: int

    @property
    def total(self) -> int:
        return self.n * (self.K + 1)


def _stage1_statistics(means, ss, shift, n, mode: StatisticMode, scale: float) -> np.ndarray:
    arms = means.shape[1]
    m = means[:, :, 0] + shift
    diff = m[:, 1:] - m[:, :1]
    if isinstance(mode, TStat):
        s = np.sqrt(ss[:, :, 0].sum(axis=1) / (arms * n - arms))[:, None]
    else:
        s = mode.sigma / scale
    se = s * math.sqrt(2.0 / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        T = diff / se
    return np.where(se > 0, T, np.sign(diff) * np.inf)


def _critical_value(max_stat: np.ndarray, alpha: float) -> float:
    """Smallest threshold with at most floor(alpha*R) exceedances (t >= e)."""
    R = max_stat.size
    allowed = int(math.floor(alpha * R + 1e-9))
    if allowed >= R:
        return -math.inf
    v = np.sort(max_stat)
    cut = v[R - allowed - 1]  # must not be rejected
    if allowed == 0:
        return float(np.nextafter(cut, np.inf))
    above = v[R - allowed]
    if above > cut:
        return float(0.5 * (cut + above))
    return float(np.nextafter(cut, np.inf))


def normal_sample_size(alpha: float, beta: float, delta: float, sigma2: float = 1.0) -> float:
    """Per-arm size of a one-sided two-sample z-test (no multiplicity)."""
    z = normal_quantile(1 - alpha) + normal_quantile(1 - beta)
    return 2.0 * sigma2 * z * z / (delta * delta)


def single_stage_reference(settings: TrialSettings, mode: StatisticMode,
                           bank: ResponseBank) -> SingleStageResult:
    """Smallest single-stage design meeting the FWER and power targets on ``bank``.

    For each n (upward from a normal-theory lower bound) the critical value is
    the smallest threshold keeping the simulated global-null FWER at or below
    alpha; the first n whose simulated power reaches 1 - beta is returned.
    """
    cfg = bank.config
    if cfg.K != settings.K:
        raise ConfigurationError(f"bank has K={cfg.K}, settings have K={settings.K}")
    sigma = settings.sigma
    lower = normal_sample_size(settings.alpha, settings.beta, settings.delta1, settings.sigma2)
    n_min = 2 if isinstance(mode, TStat) else 1
    n = max(n_min, int(math.floor(0.9 * lower)))
    shift_alt = np.concatenate(([0.0], np.asarray(settings.delta) / sigma))
    zero = np.zeros(settings.K + 1)
    while True:
        if n > cfg.n_max:
            raise ResourceError(
                f"single-stage search reached n={n} > bank n_max={cfg.n_max} without "
                f"power {1 - settings.beta}; rebuild the bank with a larger n_max"
            )
        means, ss = bank.summaries(n)
        null_max = _stage1_statistics(means, ss, zero, n, mode, sigma).max(axis=1)
        e1 = _critical_value(null_max, settings.alpha)
        alt = _stage1_statistics(means, ss, shift_alt, n, mode, sigma)
        power = float(np.count_nonzero(alt[:, 0] >= e1)) / cfg.replicates
        if power >= 1 - settings.beta:
            fwer = float(np.count_nonzero(null_max >= e1)) / cfg.replicates
            return SingleStageResult(n=n, e1=e1, fwer=fwer, power=power, K=settings.K)
        n += 1


# ---------------------------------------------------------------------------
# cross-entropy search


@dataclass(frozen=True)
class CEConfig:
    """Cross-entropy settings. Boundary coordinates are ordered
    ``(f_1..f_{J-1}, e_1..e_{J-1}, c)`` with ``e_J = f_J = c``.
    """

    population: int = 1000
    elite_frac: float = 0.1
    smoothing: float = 0.7
    max_iters: int = 100
    tol_sd: float = 0.01
    n_range: tuple = (2, 100)
    f_box: tuple = (-1.0, 3.0)
    e_box: tuple = (0.0, 5.0)
    c_box: tuple = (0.0, 4.0)
    init_sd: float = 0.5
    n_smoothing: float | None = None
    refine_neighbours: int = 1
    refine_sd: float = 0.1
    seed: int = 1
    max_resample: int = 10_000

    def __post_init__(self):
        if self.population < 1:
            raise ConfigurationError("population must be >= 1")
        if not 0 < self.elite_frac < 1:
            raise ConfigurationError("elite_frac must lie in (0, 1)")
        if self.population * self.elite_frac < 2:
            raise ConfigurationError("population * elite_frac must be >= 2")
        if not 0 < self.smoothing <= 1:
            raise ConfigurationError("smoothing must lie in (0, 1]")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.tol_sd > 0:
            raise ConfigurationError("tol_sd must be positive")
        lo, hi = self.n_range
        if not (1 <= lo <= hi):
            raise ConfigurationError(f"n_range must satisfy 1 <= lo <= hi, got {self.n_range}")
        for name in ("f_box", "e_box", "c_box"):
            a, b = getattr(self, name)
            if not a < b:
                raise ConfigurationError(f"{name} must satisfy lo < hi, got {(a, b)}")
        if self.n_smoothing is not None and not 0 < self.n_smoothing <= 1:
            raise ConfigurationError("n_smoothing must lie in (0, 1]")
        if self.refine_neighbours < 0:
            raise ConfigurationError("refine_neighbours must be >= 0")
        if not self.refine_sd > 0:
            raise ConfigurationError("refine_sd must be positive")
        if not self.init_sd > 0:
            raise ConfigurationError("init_sd must be positive")

    @property
    def n_elite(self) -> int:
        return int(math.ceil(self.population * self.elite_frac))


@dataclass
class OptimResult:
    best: Design
    score: float
    oc_null: OCEstimate
    oc_alt: OCEstimate
    feasible: bool
    trace: list = field(default_factory=list)
    evaluations: int = 0
    converged: bool = False


def _coordinate_names(J: int) -> list[str]:
    return [f"f{j}" for j in range(1, J)] + [f"e{j}" for j in range(1, J)] + ["c"]


def _vector_to_design(n: int, x: np.ndarray, J: int, rule: StoppingRule) -> Design:
    f = tuple(x[: J - 1]) + (x[-1],)
    e = tuple(x[J - 1: 2 * (J - 1)]) + (x[-1],)
    return Design(n=int(n), e=e, f=f, rule=rule)


def _design_to_vector(design: Design) -> np.ndarray:
    J = design.J
    return np.array(list(design.f[: J - 1]) + list(design.e[: J - 1]) + [design.e[-1]])


class _Evaluator:
    def __init__(self, settings, spec, bank, mode):
        self.settings, self.spec, self.bank, self.mode = settings, spec, bank, mode
        self.count = 0

    def __call__(self, design: Design):
        self.count += 1
        null, alt = estimate_oc_pair(design, self.mode, self.spec.delta, self.settings.sigma, self.bank)
        score = objective(design, null, alt, self.spec, self.settings.J, self.settings.K)
        return score, null, alt


def evaluate_design(design: Design, settings: TrialSettings, spec: ObjectiveSpec,
                    bank: ResponseBank, mode: StatisticMode | None = None):
    """Score one design on a bank: ``(score, oc_null, oc_alt, feasible)``."""
    score, null, alt = _Evaluator(settings, spec, bank, mode or TStat())(design)
    return score, null, alt, is_feasible(null, alt, spec.alpha, spec.beta)


def _sample_boundaries(rng, mu, sd, lo, hi, size, J, max_resample):
    out = np.empty((size, mu.size))
    todo = np.arange(size)
    tries = 0
    a = (lo - mu) / sd
    b = (hi - mu) / sd
    while todo.size:
        u = rng.random((todo.size, mu.size))
        x = sps.truncnorm.ppf(u, a, b, loc=mu, scale=sd)
        out[todo] = x
        ok = np.all(x[:, : J - 1] < x[:, J - 1: 2 * (J - 1)], axis=1)
        todo = todo[~ok]
        tries += 1
        if tries > max_resample:
            raise ConfigurationError(
                "search box admits no design with f_j < e_j at interim stages; widen e_box/f_box"
            )
    return out


class _Search:
    """Proposal refits plus best-so-far bookkeeping shared by all phases."""

    def __init__(self, settings, rule, spec, ce, bank, mode, progress):
        self.settings, self.rule, self.spec, self.ce = settings, rule, spec, ce
        self.J = settings.J
        self.names = _coordinate_names(self.J)
        J = self.J
        self.lo = np.array([ce.f_box[0]] * (J - 1) + [ce.e_box[0]] * (J - 1) + [ce.c_box[0]])
        self.hi = np.array([ce.f_box[1]] * (J - 1) + [ce.e_box[1]] * (J - 1) + [ce.c_box[1]])
        self.rng = np.random.default_rng(ce.seed)
        self.evaluate = _Evaluator(settings, spec, bank, mode)
        self.progress = progress
        self.best_any = None
        self.best_feasible = None
        self.trace = []

    @property
    def incumbent(self):
        return self.best_feasible or self.best_any

    def _offer(self, score, design, null, alt):
        entry = (score, design, null, alt)
        if self.best_any is None or score < self.best_any[0]:
            self.best_any = entry
        if is_feasible(null, alt, self.spec.alpha, self.spec.beta) and (
                self.best_feasible is None or score < self.best_feasible[0]):
            self.best_feasible = entry

    def run(self, phase, n_values, probs, mu, sd, feasible_first=False) -> bool:
        ce = self.ce
        s = ce.smoothing
        sn = s if ce.n_smoothing is None else ce.n_smoothing
        for _ in range(ce.max_iters):
            n_draw = self.rng.choice(n_values, size=ce.population, p=probs)
            x_draw = _sample_boundaries(self.rng, mu, sd, self.lo, self.hi, ce.population,
                                        self.J, ce.max_resample)
            scores = np.empty(ce.population)
            excess = np.zeros(ce.population)
            for i in range(ce.population):
                design = _vector_to_design(n_draw[i], x_draw[i], self.J, self.rule)
                score, null, alt = self.evaluate(design)
                scores[i] = score
                excess[i] = violation(null, alt, self.spec.alpha, self.spec.beta)
                self._offer(score, design, null, alt)

            if feasible_first:
                # feasible by score, then infeasible by how far outside they are
                infeasible = excess > 0
                key = np.where(infeasible, excess, scores)
                elite = np.lexsort((key, infeasible))[: ce.n_elite]
            else:
                elite = np.argsort(scores, kind="stable")[: ce.n_elite]
            freq = np.array([np.count_nonzero(n_draw[elite] == v) for v in n_values]) / elite.size
            probs = sn * freq + (1 - sn) * probs
            probs = probs / probs.sum()
            mu = s * x_draw[elite].mean(axis=0) + (1 - s) * mu
            sd = np.maximum(s * x_draw[elite].std(axis=0) + (1 - s) * sd, 1e-9)
            mean_n = float(probs @ n_values)
            sd_n = float(math.sqrt(max(probs @ (n_values - mean_n) ** 2, 0.0)))

            row = {"iteration": len(self.trace) + 1, "phase": phase,
                   "best_score": self.best_any[0], "mean_n": mean_n, "sd_n": sd_n}
            for name, m, v in zip(self.names, mu, sd):
                row[f"{name}_mean"] = float(m)
                row[f"{name}_sd"] = float(v)
            row["elite_threshold"] = float(scores[elite[-1]])
            row["best_feasible_score"] = self.best_feasible[0] if self.best_feasible else math.nan
            self.trace.append(row)
            if self.progress is not None:
                self.progress(row)
            if sd.max() < ce.tol_sd and sd_n < ce.tol_sd:
                return True
        return False


def ce_optimize(settings: TrialSettings, rule: StoppingRule, spec: ObjectiveSpec,
                ce: CEConfig, bank: ResponseBank, *, mode: StatisticMode | None = None,
                warm_start: Design | None = None, progress=None) -> OptimResult:
    """Cross-entropy minimisation of :func:`objective` over (n, e, f).

    ``n`` is drawn from a categorical distribution on ``ce.n_range`` and the
    boundary coordinates from independent truncated normals; both are refit to
    the elite fraction every iteration. All candidates share ``bank``, so the
    objective is a deterministic function of the design.

    A single product proposal tends to settle on boundaries that suit one n,
    so after the joint search the boundaries are searched again with n fixed
    at the incumbent's n and its ``ce.refine_neighbours`` neighbours. These
    refinement runs rank feasible candidates by score ahead of infeasible ones
    ranked by constraint violation: the penalized optimum often sits just
    outside the constraints, and the feasible optimum is what is wanted.

    The returned design is the lowest-scoring feasible candidate seen, or the
    lowest-scoring candidate overall if none was feasible.
    """
    mode = mode or TStat()
    rule = StoppingRule(rule)
    J, K = settings.J, settings.K
    cfg = bank.config
    if (cfg.K, cfg.J) != (K, J):
        raise ConfigurationError(f"bank built for K={cfg.K}, J={cfg.J}; settings need K={K}, J={J}")
    n_lo, n_hi = ce.n_range
    if isinstance(mode, TStat) and (K + 1) * n_lo < K + 2:
        raise ConfigurationError("n_range lower bound too small for t statistics (need n >= 2)")
    if n_hi > cfg.n_max:
        raise ResourceError(f"n_range upper bound {n_hi} exceeds bank n_max={cfg.n_max}")

    search = _Search(settings, rule, spec, ce, bank, mode, progress)
    if warm_start is not None:
        mu = np.clip(_design_to_vector(warm_start), search.lo, search.hi)
    else:
        mu = np.clip(np.array([0.0] * (J - 1) + [2.0] * (J - 1) + [2.0]), search.lo, search.hi)
    n_values = np.arange(n_lo, n_hi + 1)
    probs = np.full(n_values.size, 1.0 / n_values.size)
    converged = search.run("joint", n_values, probs, mu, np.full(mu.size, ce.init_sd))

    if ce.refine_neighbours > 0:
        centre = search.incumbent[1].n
        for n in range(centre - ce.refine_neighbours, centre + ce.refine_neighbours + 1):
            if not n_lo <= n <= n_hi:
                continue
            start = _design_to_vector(search.incumbent[1])
            search.run(f"n={n}", np.array([n]), np.ones(1), start,
                       np.full(start.size, ce.refine_sd), feasible_first=True)

    score, design, null, alt = search.incumbent
    return OptimResult(
        best=design, score=score, oc_null=null, oc_alt=alt,
        feasible=search.best_feasible is not None, trace=search.trace,
        evaluations=search.evaluate.count, converged=converged,
    )


def trace_columns(J: int) -> list[str]:
    cols = ["iteration", "best_score", "mean_n", "sd_n"]
    for name in _coordinate_names(J):
        cols += [f"{name}_mean", f"{name}_sd"]
    return cols + ["elite_threshold", "best_feasible_score", "phase"]


def write_trace_csv(result: OptimResult, path, J: int, header: str = "") -> None:
    cols = trace_columns(J)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in result.trace:
            writer.writerow([
                row[c] if c in ("iteration", "phase") else f"{row[c]:.6f}" for c in cols
            ])
