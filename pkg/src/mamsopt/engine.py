"""Multi-arm multi-stage trial execution.

Two routes compute the same thing:

* :func:`run_trial` runs one trial from explicit responses, step by step.
  It is slow and meant as the readable reference.
* :func:`simulate_summaries` runs every replicate of a bank at once from
  per-stage means and centred sums of squares (sufficient statistics for
  equal-sized normal groups). This is what the estimators use.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from typing import Union

import numba
import numpy as np

from .errors import ConfigurationError

if "NUMBA_THREADING_LAYER" not in os.environ:
    # skip the TBB probe, which warns on older system TBB builds
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

REJECT = 1
ACCEPT = -1
CONTINUE = 0


class StoppingRule(str, enum.Enum):
    SIMULTANEOUS = "simultaneous"
    SEPARATE = "separate"


@dataclass(frozen=True)
class TStat:
    """Pooled-variance t statistics (variance estimated from the data)."""

    label = "t"


@dataclass(frozen=True)
class ZStat:
    """z statistics computed with an assumed standard deviation."""

    sigma: float = 1.0
    label = "z"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError("assumed sigma must be positive")


StatisticMode = Union[TStat, ZStat]


@dataclass(frozen=True)
class Design:
    """Group size, boundaries and stopping rule.

    ``e`` and ``f`` are efficacy and futility boundaries for stages 1..J. The
    last stage must have ``e[-1] == f[-1]`` so every arm is decided by then.
    """

    n: int
    e: tuple
    f: tuple
    rule: StoppingRule = StoppingRule.SIMULTANEOUS

    def __post_init__(self):
        object.__setattr__(self, "e", tuple(float(x) for x in self.e))
        object.__setattr__(self, "f", tuple(float(x) for x in self.f))
        object.__setattr__(self, "rule", StoppingRule(self.rule))
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"group size n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if len(self.e) != len(self.f) or not self.e:
            raise ConfigurationError("e and f must be non-empty and of equal length")
        if any(math.isnan(x) for x in self.e + self.f):
            raise ConfigurationError("boundaries must not be NaN")
        for j in range(self.J - 1):
            if not self.f[j] < self.e[j]:
                raise ConfigurationError(
                    f"stage {j + 1}: futility boundary {self.f[j]} must be below efficacy {self.e[j]}"
                )
        if self.e[-1] != self.f[-1]:
            raise ConfigurationError(
                f"final-stage boundaries must coincide, got e={self.e[-1]} f={self.f[-1]}"
            )

    @property
    def J(self) -> int:
        return len(self.e)

    def max_sample_size(self, K: int) -> int:
        return self.n * self.J * (K + 1)


def validate_design(design: Design, K: int, J: int, mode: StatisticMode) -> None:
    """Check a design against a trial geometry before any simulation."""
    if design.J != J:
        raise ConfigurationError(f"design has {design.J} stages, trial has J={J}")
    if isinstance(mode, TStat) and (K + 1) * design.n < K + 2:
        raise ConfigurationError(
            f"t statistics need (K+1)*n >= K+2 for one residual degree of freedom; n={design.n}"
        )


@numba.njit(cache=True)
def decide(t, e, f):
    """Stage decision for one statistic: reject if t >= e, accept if t < f.

    The continuation region is therefore ``f <= t < e``.
    """
    if t >= e:
        return REJECT
    if t < f:
        return ACCEPT
    return CONTINUE


@numba.njit(cache=True, error_model="numpy")
def _ratio(diff, se):
    # zero pooled variance: resolve by the sign of the mean difference
    if se > 0.0:
        return diff / se
    if diff > 0.0:
        return np.inf
    if diff < 0.0:
        return -np.inf
    return 0.0


@dataclass(frozen=True)
class StageStatistics:
    T: np.ndarray  # length K, NaN for arms not recruited at this stage
    sigma2: float
    nu: int
    N: np.ndarray  # cumulative recruited count per arm, control first


def compute_statistics(responses, recruited, mode: StatisticMode) -> StageStatistics:
    """Test statistics at the latest stage in ``responses``.

    Parameters
    ----------
    responses : array, shape (K+1, j, n)
        Data through stage j. Blocks of unrecruited (arm, stage) pairs are ignored.
    recruited : bool array, shape (K+1, j)
        Whether each arm recruited in each stage.
    mode : TStat or ZStat
    """
    responses = np.asarray(responses, dtype=float)
    recruited = np.asarray(recruited, dtype=bool)
    arms, _, n = responses.shape
    if not recruited[0].all():
        raise ConfigurationError("control must be recruited at every stage")
    N = n * recruited.sum(axis=1)
    if (N == 0).any():
        raise ConfigurationError("every arm needs at least one recruited stage")
    means = np.empty(arms)
    resid = 0.0
    for a in range(arms):
        x = responses[a][recruited[a]]
        means[a] = x.mean()
        resid += float(((x - means[a]) ** 2).sum())
    nu = int(N.sum()) - arms
    if isinstance(mode, TStat) and nu < 1:
        raise ConfigurationError("pooled variance needs at least one degree of freedom")
    sigma2 = resid / nu if nu >= 1 else float("nan")
    s = math.sqrt(sigma2) if isinstance(mode, TStat) else mode.sigma
    T = np.full(arms - 1, np.nan)
    for k in range(1, arms):
        if recruited[k, -1]:
            se = s * math.sqrt(1.0 / N[0] + 1.0 / N[k])
            T[k - 1] = _ratio(means[k] - means[0], se)
    return StageStatistics(T=T, sigma2=sigma2, nu=nu, N=N)


@dataclass(frozen=True)
class TrialResult:
    omega: tuple  # stage (1-based) at which each hypothesis was resolved
    psi: tuple  # 1 if the hypothesis was rejected

    @property
    def stages_used(self) -> int:
        return max(self.omega)


def run_trial(design: Design, responses, mode: StatisticMode) -> TrialResult:
    """Run one trial from explicit responses of shape ``(K+1, J, n)``."""
    responses = np.asarray(responses, dtype=float)
    arms, J, n = responses.shape
    if J != design.J or n != design.n:
        raise ConfigurationError(
            f"responses shaped {responses.shape} do not match design (J={design.J}, n={design.n})"
        )
    K = arms - 1
    omega = [0] * K
    psi = [0] * K
    recruited = np.zeros((arms, J), dtype=bool)
    for j in range(J):
        recruited[0, j] = True
        for k in range(K):
            recruited[k + 1, j] = omega[k] == 0
        stats = compute_statistics(responses[:, : j + 1], recruited[:, : j + 1], mode)
        for k in range(K):
            if omega[k] != 0:
                continue
            outcome = decide(stats.T[k], design.e[j], design.f[j])
            if outcome == REJECT:
                psi[k] = 1
                omega[k] = j + 1
            elif outcome == ACCEPT:
                omega[k] = j + 1
        undecided = [k for k in range(K) if omega[k] == 0]
        if design.rule is StoppingRule.SIMULTANEOUS:
            if any(psi) or not undecided:
                for k in undecided:
                    omega[k] = j + 1
                break
        elif not undecided:
            break
    return TrialResult(omega=tuple(omega), psi=tuple(psi))


def total_sample_size(result: TrialResult, n: int) -> int:
    """Patients recruited: control runs to the last active stage, arm k for omega_k stages."""
    return n * (max(result.omega) + sum(result.omega))


_CHUNK = 2048


@numba.njit(cache=True, error_model="numpy")
def _simulate_range(means, ss, shift, n, e, f, simultaneous, tstat, z_sigma, omega, psi,
                    r0, r1, stages, cm, se_factor):
    arms = means.shape[1]
    J = means.shape[2]
    K = arms - 1
    for r in range(r0, r1):
        # stages[a] = stages arm a has recruited so far
        for a in range(arms):
            stages[a] = 0
        active = K
        for j in range(J):
            resid = 0.0
            total = 0
            for a in range(arms):
                if a == 0 or omega[r, a - 1] == 0:
                    stages[a] = j + 1
                L = stages[a]
                acc = 0.0
                for l in range(L):
                    acc += means[r, a, l]
                m = acc / L
                cm[a] = m + shift[a]
                for l in range(L):
                    d = means[r, a, l] - m
                    resid += ss[r, a, l] + n * d * d
                total += n * L
            if tstat:
                s = math.sqrt(resid / (total - arms))
            else:
                s = z_sigma
            any_reject = False
            for k in range(K):
                if omega[r, k] != 0:
                    continue
                t = _ratio(cm[k + 1] - cm[0], s * se_factor[j + 1, j + 1])
                outcome = decide(t, e[j], f[j])
                if outcome == REJECT:
                    psi[r, k] = 1
                    omega[r, k] = j + 1
                    any_reject = True
                    active -= 1
                elif outcome == ACCEPT:
                    omega[r, k] = j + 1
                    active -= 1
            if simultaneous and any_reject:
                for k in range(K):
                    if omega[r, k] == 0:
                        omega[r, k] = j + 1
                break
            if active == 0:
                break


@numba.njit(parallel=True, cache=True, error_model="numpy")
def _simulate(means, ss, shift, n, e, f, simultaneous, tstat, z_sigma, omega, psi):
    R = means.shape[0]
    arms = means.shape[1]
    chunks = (R + _CHUNK - 1) // _CHUNK
    J = means.shape[2]
    se_factor = np.zeros((J + 1, J + 1))
    for a in range(1, J + 1):
        for b in range(1, J + 1):
            se_factor[a, b] = math.sqrt(1.0 / (n * a) + 1.0 / (n * b))
    # each replicate is independent; chunking only amortizes scratch allocation
    for c in numba.prange(chunks):
        stages = np.zeros(arms, np.int64)
        cm = np.empty(arms)
        _simulate_range(means, ss, shift, n, e, f, simultaneous, tstat, z_sigma, omega, psi,
                        c * _CHUNK, min(R, (c + 1) * _CHUNK), stages, cm, se_factor)


@numba.njit(cache=True)
def tally(omega, psi, true_null):
    """Integer counts: replicates with a true-null rejection, rejections per arm,
    and the summed per-replicate stage count ``max(omega) + sum(omega)``.
    """
    R, K = omega.shape
    errors = 0
    per_arm = np.zeros(K, np.int64)
    stage_total = 0
    for r in range(R):
        hit = False
        top = 0
        for k in range(K):
            w = omega[r, k]
            stage_total += w
            if w > top:
                top = w
            if psi[r, k] == 1:
                per_arm[k] += 1
                if true_null[k]:
                    hit = True
        stage_total += top
        if hit:
            errors += 1
    return errors, per_arm, stage_total


def simulate_summaries(design: Design, mode: StatisticMode, means, ss, shift, scale: float = 1.0):
    """Run every replicate from per-stage summaries.

    Parameters
    ----------
    means, ss : arrays (R, K+1, J)
        Stage means and centred sums of squares of standardized data.
    shift : array (K+1,)
        Location added to each arm's stage means (control first).
    scale : float
        Noise SD the summaries stand for. Only matters for z statistics, whose
        assumed sigma is divided by it.

    Returns
    -------
    omega, psi : int8 arrays (R, K)
    """
    R, arms, J = means.shape
    if design.J != J:
        raise ConfigurationError(f"design has {design.J} stages, summaries have {J}")
    omega = np.zeros((R, arms - 1), dtype=np.int8)
    psi = np.zeros((R, arms - 1), dtype=np.int8)
    tstat = isinstance(mode, TStat)
    z_sigma = 1.0 if tstat else mode.sigma / scale
    _simulate(
        means, ss, np.asarray(shift, dtype=float), design.n,
        np.asarray(design.e), np.asarray(design.f),
        design.rule is StoppingRule.SIMULTANEOUS, tstat, z_sigma, omega, psi,
    )
    return omega, psi
