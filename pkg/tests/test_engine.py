import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from mamsopt.bank import realize
from mamsopt.engine import (
    Design, StoppingRule, TStat, ZStat, compute_statistics, run_trial, total_sample_size,
    validate_design,
)
from mamsopt.errors import ConfigurationError
from mamsopt.oc import simulate

SIM, SEP = StoppingRule.SIMULTANEOUS, StoppingRule.SEPARATE
S1_OPT = Design(41, (2.742, 2.084), (0.606, 2.084), SIM)

# responses on a 1/16 grid: any nonzero spread is far above rounding error, so
# shifts and rescalings cannot wipe it out in floating point
grid_values = st.integers(-80, 80).map(lambda i: i / 16)
responses_k3 = hnp.arrays(np.float64, (4, 2, 3), elements=grid_values)


def stage1_data(stats, n=2):
    """Responses whose stage-1 z statistics (sigma = 1) equal ``stats``."""
    K = len(stats)
    x = np.zeros((K + 1, 2, n))
    spread = np.linspace(-0.5, 0.5, n)
    x[0, 0] = spread
    for k, t in enumerate(stats, start=1):
        x[k, 0] = t * math.sqrt(2.0 / n) + spread
    x[:, 1] = 0.0
    return x


def in_xi_sim(omega, psi) -> bool:
    rejected = [w for w, p in zip(omega, psi) if p]
    if not rejected:
        return True
    return max(omega) <= min(rejected)


def test_pooled_t_hand_example():
    x = np.array([[[0.0, 1.0]], [[2.0, 3.0]]])
    s = compute_statistics(x, np.ones((2, 1), bool), TStat())
    assert s.nu == 2
    assert s.sigma2 == pytest.approx(0.5)
    assert s.T[0] == pytest.approx(2.8284, abs=1e-4)


@given(x=responses_k3, c=st.floats(-100, 100))
def test_location_invariance(x, c):
    rec = np.ones((4, 2), bool)
    rec[2, 1] = False
    for mode in (TStat(), ZStat(1.3)):
        a = compute_statistics(x, rec, mode)
        b = compute_statistics(x + c, rec, mode)
        np.testing.assert_allclose(a.T, b.T, rtol=1e-6, atol=1e-6)
    a = compute_statistics(x, rec, TStat())
    b = compute_statistics(x + c, rec, TStat())
    assert b.sigma2 == pytest.approx(a.sigma2, rel=1e-6, abs=1e-6)


@given(x=responses_k3, c=st.floats(0.01, 100))
def test_scale_invariance_and_equivariance(x, c):
    rec = np.ones((4, 2), bool)
    a = compute_statistics(x, rec, TStat())
    b = compute_statistics(c * x, rec, TStat())
    np.testing.assert_allclose(a.T, b.T, rtol=1e-9, atol=1e-9)
    assert b.sigma2 == pytest.approx(c * c * a.sigma2, rel=1e-9, abs=1e-12)
    za = compute_statistics(x, rec, ZStat(0.7))
    zb = compute_statistics(c * x, rec, ZStat(0.7 * c))
    np.testing.assert_allclose(za.T, zb.T, rtol=1e-9, atol=1e-9)


@given(x=responses_k3, c=st.floats(-50, 50), scale=st.floats(0.05, 20))
def test_run_trial_location_scale(x, c, scale):
    d = Design(3, (1.2, 0.4), (-0.3, 0.4), SIM)
    base = run_trial(d, x, TStat())
    assert run_trial(d, scale * x + c, TStat()) == base
    zb = run_trial(d, x, ZStat(1.0))
    assert run_trial(d, scale * x + c, ZStat(scale)) == zb


def test_simultaneous_sweep_example():
    x = stage1_data((3.0, 0.1, 1.0))
    d = Design(2, S1_OPT.e, S1_OPT.f, SIM)
    res = run_trial(d, x, ZStat(1.0))
    assert res.psi == (1, 0, 0)
    assert res.omega == (1, 1, 1)
    sep = run_trial(Design(2, S1_OPT.e, S1_OPT.f, SEP), x, ZStat(1.0))
    assert sep.psi[:2] == (1, 0)
    assert sep.omega[:2] == (1, 1)
    assert sep.omega[2] == 2


def test_vacuous_stage1_boundaries():
    x = stage1_data((5.0, -5.0, 0.0))
    d = Design(2, (math.inf, 0.0), (-math.inf, 0.0), SEP)
    assert run_trial(d, x, ZStat(1.0)).omega == (2, 2, 2)


def test_separate_outcomes_reachable():
    # arm 1 futile at stage 1, arm 2 rejected at stage 2, arm 3 accepted at stage 2
    x = stage1_data((-2.0, 1.5, 1.5))
    x[2, 1] += 10.0
    x[3, 1] -= 10.0
    res = run_trial(Design(2, (2.5, 1.0), (0.0, 1.0), SEP), x, ZStat(1.0))
    assert res.omega == (1, 2, 2)
    assert res.psi == (0, 1, 0)


def test_degenerate_variance():
    x = np.zeros((3, 1, 2))
    x[1] = 1.0
    s = compute_statistics(x, np.ones((3, 1), bool), TStat())
    assert s.sigma2 == 0.0
    assert s.T[0] == math.inf
    assert s.T[1] == 0.0
    x[2] = -1.0
    assert compute_statistics(x, np.ones((3, 1), bool), TStat()).T[1] == -math.inf


def test_dropped_arm_data_stay_in_pooled_variance():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 2, 4))
    rec = np.array([[True, True], [True, False], [True, True]])
    s = compute_statistics(x, rec, TStat())
    kept = [x[0].ravel(), x[1, 0], x[2].ravel()]
    resid = sum(((v - v.mean()) ** 2).sum() for v in kept)
    assert s.nu == 8 + 4 + 8 - 3
    assert s.sigma2 == pytest.approx(resid / s.nu)
    assert math.isnan(s.T[0])
    assert list(s.N) == [8, 4, 8]


@pytest.mark.parametrize("omega,n,expected", [
    ((1, 1), 5, 15), ((1, 2, 2), 4, 28), ((2, 2, 2), 3, 24),
])
def test_total_sample_size(omega, n, expected):
    from mamsopt.engine import TrialResult
    assert total_sample_size(TrialResult(omega, (0,) * len(omega)), n) == expected


def test_design_validation():
    with pytest.raises(ConfigurationError):
        Design(5, (1.0, 2.0), (1.5, 2.0))
    with pytest.raises(ConfigurationError):
        Design(5, (2.5, 2.0), (0.5, 2.1))
    with pytest.raises(ConfigurationError):
        Design(0, (2.0,), (2.0,))
    with pytest.raises(ConfigurationError):
        Design(5, (2.5, float("nan")), (0.5, float("nan")))
    with pytest.raises(ConfigurationError):
        validate_design(Design(1, (2.0,), (2.0,)), K=3, J=1, mode=TStat())
    validate_design(Design(1, (2.0,), (2.0,)), K=3, J=1, mode=ZStat())
    with pytest.raises(ConfigurationError):
        validate_design(S1_OPT, K=3, J=3, mode=TStat())
    with pytest.raises(ConfigurationError):
        ZStat(0.0)


def classical_t(control, treated):
    """Textbook pooled two-sample t statistic, coded from scratch."""
    n0, n1 = len(control), len(treated)
    m0 = sum(control) / n0
    m1 = sum(treated) / n1
    ss = sum((v - m0) ** 2 for v in control) + sum((v - m1) ** 2 for v in treated)
    sp = math.sqrt(ss / (n0 + n1 - 2))
    return (m1 - m0) / (sp * math.sqrt(1 / n0 + 1 / n1))


def test_k1_matches_textbook_t_test():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        e1 = float(rng.normal(1.5, 1.0))
        x = rng.normal(size=(2, 1, n)) + np.array([0.0, rng.normal(0.5, 1.0)])[:, None, None]
        res = run_trial(Design(n, (e1,), (e1,)), x, TStat())
        reject = classical_t(list(x[0, 0]), list(x[1, 0])) >= e1
        mismatches += int(bool(res.psi[0]) != reject)
    assert mismatches == 0


@given(data=st.data())
def test_stage1_monotone_in_e1(data):
    x = data.draw(responses_k3)
    e1 = data.draw(st.floats(-1, 3))
    bump = data.draw(st.floats(0, 2))
    lo = run_trial(Design(3, (e1, 0.5), (-2.0, 0.5), SEP), x, TStat())
    hi = run_trial(Design(3, (e1 + bump, 0.5), (-2.0, 0.5), SEP), x, TStat())
    for k in range(3):
        if not (lo.psi[k] and lo.omega[k] == 1):
            assert not (hi.psi[k] and hi.omega[k] == 1)


@given(x=responses_k3, e1=st.floats(-1, 3), gap=st.floats(0.1, 3), c=st.floats(-1, 3))
def test_simultaneous_outcomes_in_xi_sim(x, e1, gap, c):
    res = run_trial(Design(3, (e1, c), (e1 - gap, c), SIM), x, TStat())
    assert in_xi_sim(res.omega, res.psi)


CASES = [
    (Design(6, (2.0, 1.6), (0.2, 1.6), SIM), TStat(), (0.0, 0.0, 0.0), 1.0),
    (Design(6, (2.0, 1.6), (0.2, 1.6), SEP), TStat(), (0.8, 0.3, -0.2), 2.0),
    (Design(5, (1.8, 1.5), (-0.1, 1.5), SIM), ZStat(1.0), (0.6, 0.0, 0.6), 0.5),
    (Design(5, (1.8, 1.5), (-0.1, 1.5), SEP), ZStat(1.0), (0.0, 0.0, 0.0), 3.0),
    (Design(8, (1.2, 1.0), (0.9, 1.0), SEP), TStat(), (1.0, 1.0, 0.0), 0.7),
]


@pytest.mark.parametrize("design,mode,theta,sigma", CASES)
def test_kernel_matches_reference(tiny_bank, design, mode, theta, sigma):
    omega, psi = simulate(design, mode, theta, sigma, tiny_bank)
    for r in range(tiny_bank.config.replicates):
        x = realize(tiny_bank, r, design.n, theta, sigma)
        ref = run_trial(design, x, mode)
        assert tuple(omega[r]) == ref.omega, r
        assert tuple(psi[r]) == ref.psi, r
    if design.rule is SIM:
        assert all(in_xi_sim(w, p) for w, p in zip(omega, psi))
