"""Monte Carlo operating characteristics on a common response bank."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bank import ResponseBank
from .engine import Design, StatisticMode, simulate_summaries, tally, validate_design
from .errors import ConfigurationError


@dataclass(frozen=True)
class OCEstimate:
    """Operating characteristics at one effect vector.

    ``fwer`` counts replicates rejecting at least one arm whose true effect is
    <= 0; ``power`` is the rejection rate of the first hypothesis.
    """

    theta: tuple
    fwer: float
    power: float
    ess: float
    per_arm_rejection: tuple
    replicates: int

    @property
    def mc_se_fwer(self) -> float:
        return math.sqrt(self.fwer * (1.0 - self.fwer) / self.replicates)

    @property
    def mc_se_power(self) -> float:
        return math.sqrt(self.power * (1.0 - self.power) / self.replicates)


@dataclass(frozen=True)
class EvalTask:
    design: Design
    mode: StatisticMode
    theta: tuple
    sigma_true: float
    bank: ResponseBank


def _check_theta(theta, K: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (K,):
        raise ConfigurationError(f"effect vector must have K={K} entries, got {theta.tolist()}")
    if not np.all(np.isfinite(theta)):
        raise ConfigurationError("effect vector entries must be finite")
    return theta


def simulate(design: Design, mode: StatisticMode, theta, sigma_true: float, bank: ResponseBank):
    """Per-replicate ``(omega, psi)`` arrays for a design on a bank.

    Data are handled on the standardized scale: responses ``theta + sigma_true*Z``
    divided by ``sigma_true``. t statistics are unchanged by that division and
    z statistics absorb it into the assumed sigma, so results equal running
    each realized dataset through :func:`engine.run_trial`.
    """
    cfg = bank.config
    validate_design(design, cfg.K, cfg.J, mode)
    theta = _check_theta(theta, cfg.K)
    if not sigma_true > 0:
        raise ConfigurationError("sigma_true must be positive")
    means, ss = bank.summaries(design.n)
    shift = np.concatenate(([0.0], theta / sigma_true))
    return simulate_summaries(design, mode, means, ss, shift, scale=sigma_true)


def summarize(design: Design, theta, omega: np.ndarray, psi: np.ndarray) -> OCEstimate:
    theta = np.asarray(theta, dtype=float)
    R = omega.shape[0]
    errors, per_arm, stage_total = tally(omega, psi, theta <= 0)
    # exact integer total, so the mean is independent of evaluation order
    total = int(stage_total) * design.n
    return OCEstimate(
        theta=tuple(float(x) for x in theta),
        fwer=errors / R,
        power=int(per_arm[0]) / R,
        ess=total / R,
        per_arm_rejection=tuple(int(c) / R for c in per_arm),
        replicates=R,
    )


def estimate_oc(task: EvalTask) -> OCEstimate:
    omega, psi = simulate(task.design, task.mode, task.theta, task.sigma_true, task.bank)
    return summarize(task.design, task.theta, omega, psi)


def estimate_oc_pair(design: Design, mode: StatisticMode, delta, sigma_true: float,
                     bank: ResponseBank) -> tuple[OCEstimate, OCEstimate]:
    """Estimates at theta = 0 and theta = delta on the same replicates."""
    zero = (0.0,) * bank.config.K
    null = estimate_oc(EvalTask(design, mode, zero, sigma_true, bank))
    alt = estimate_oc(EvalTask(design, mode, tuple(delta), sigma_true, bank))
    return null, alt


@dataclass(frozen=True)
class ScanResult:
    rows: list  # (theta, error rate, mc standard error)

    @property
    def max_rate(self) -> float:
        return max(rate for _, rate, _ in self.rows)

    @property
    def argmax(self) -> tuple:
        return max(self.rows, key=lambda row: row[1])[0]


def fwer_scan(design: Design, mode: StatisticMode, thetas, sigma_true: float,
              bank: ResponseBank) -> ScanResult:
    """Error rate (rejecting any arm with theta_k <= 0) at each effect vector."""
    rows = []
    for theta in thetas:
        est = estimate_oc(EvalTask(design, mode, tuple(theta), sigma_true, bank))
        rows.append((est.theta, est.fwer, est.mc_se_fwer))
    if not rows:
        raise ConfigurationError("theta grid is empty")
    return ScanResult(rows=rows)
