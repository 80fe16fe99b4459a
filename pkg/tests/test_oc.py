import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mamsopt.bank import BankConfig, build_bank
from mamsopt.engine import Design, StoppingRule, TStat, ZStat
from mamsopt.errors import ConfigurationError, ResourceError
from mamsopt.oc import EvalTask, estimate_oc, estimate_oc_pair, fwer_scan, simulate
from mamsopt.stats import t_quantile

SIM, SEP = StoppingRule.SIMULTANEOUS, StoppingRule.SEPARATE
D = Design(10, (2.1, 1.9), (0.3, 1.9), SIM)

thetas = st.tuples(*[st.floats(-1, 1.5)] * 3)


def test_infinite_efficacy_never_rejects(small_bank):
    d = Design(10, (math.inf, math.inf), (0.0, math.inf), SEP)
    null, alt = estimate_oc_pair(d, TStat(), (2.0, 2.0, 2.0), 1.0, small_bank)
    assert null.fwer == 0.0 and alt.power == 0.0
    assert alt.per_arm_rejection == (0.0, 0.0, 0.0)


@given(theta=thetas, sigma=st.floats(0.3, 3), rule=st.sampled_from([SIM, SEP]))
def test_ess_bounds_and_fwer_dominance(small_bank, theta, sigma, rule):
    d = Design(D.n, D.e, D.f, rule)
    est = estimate_oc(EvalTask(d, TStat(), theta, sigma, small_bank))
    assert d.n * 4 <= est.ess <= d.n * 2 * 4
    nulls = [r for r, t in zip(est.per_arm_rejection, theta) if t <= 0]
    if nulls:
        assert est.fwer >= max(nulls)
    else:
        assert est.fwer == 0.0
    assert 0 <= est.power <= 1


@given(theta=thetas)
def test_separate_never_stops_earlier(small_bank, theta):
    sim = estimate_oc(EvalTask(Design(D.n, D.e, D.f, SIM), TStat(), theta, 1.0, small_bank))
    sep = estimate_oc(EvalTask(Design(D.n, D.e, D.f, SEP), TStat(), theta, 1.0, small_bank))
    assert sep.ess >= sim.ess


def test_separate_dominates_per_replicate(small_bank):
    theta = (0.5, 0.2, 0.0)
    w_sim, _ = simulate(Design(D.n, D.e, D.f, SIM), TStat(), theta, 1.0, small_bank)
    w_sep, _ = simulate(Design(D.n, D.e, D.f, SEP), TStat(), theta, 1.0, small_bank)
    tot = lambda w: w.max(axis=1) + w.sum(axis=1)
    assert np.all(tot(w_sep.astype(int)) >= tot(w_sim.astype(int)))


def test_t_test_size_calibration():
    # K=1, J=1 at the exact t critical value: size is alpha
    n, alpha, R = 10, 0.05, 100_000
    bank = build_bank(BankConfig(replicates=R, K=1, J=1, n_max=n, seed=31))
    e1 = t_quantile(1 - alpha, 2 * n - 2)
    est = estimate_oc(EvalTask(Design(n, (e1,), (e1,)), TStat(), (0.0,), 1.0, bank))
    assert abs(est.fwer - alpha) <= 3 * math.sqrt(alpha * (1 - alpha) / R)


def test_z_test_size_under_misspecified_variance():
    n, R = 10, 50_000
    bank = build_bank(BankConfig(replicates=R, K=1, J=1, n_max=n, seed=32))
    d = Design(n, (1.6448536269514722,), (1.6448536269514722,))
    ok = estimate_oc(EvalTask(d, ZStat(1.0), (0.0,), 1.0, bank)).fwer
    assert ok == pytest.approx(0.05, abs=0.005)
    # data twice as noisy as assumed: size becomes 1 - Phi(1.645 / 2)
    bad = estimate_oc(EvalTask(d, ZStat(1.0), (0.0,), 2.0, bank)).fwer
    assert bad == pytest.approx(0.2055, abs=0.008)


def test_pair_uses_common_replicates(small_bank):
    null, alt = estimate_oc_pair(D, TStat(), (0.0, 0.0, 0.0), 1.0, small_bank)
    assert null == alt
    single = estimate_oc(EvalTask(D, TStat(), (0.0, 0.0, 0.0), 1.0, small_bank))
    assert single == null


@pytest.mark.parametrize("s2", [0.25, 0.5, 2.0, 4.0])
def test_t_outcomes_identical_across_true_variance(small_bank, s2):
    base = simulate(D, TStat(), (0.0, 0.0, 0.0), 1.0, small_bank)
    other = simulate(D, TStat(), (0.0, 0.0, 0.0), math.sqrt(s2), small_bank)
    np.testing.assert_array_equal(base[0], other[0])
    np.testing.assert_array_equal(base[1], other[1])


def test_scan_bookkeeping(small_bank):
    big = 50.0
    res = fwer_scan(D, TStat(), [(0, 0, 0), (big, 0, 0), (big, big, big)], 1.0, small_bank)
    (t0, r0, _), (t1, r1, _), (t2, r2, _) = res.rows
    assert r0 == estimate_oc(EvalTask(D, TStat(), (0, 0, 0), 1.0, small_bank)).fwer
    assert r2 == 0.0
    # only arms 2 and 3 can produce an error when arm 1 is clearly effective
    omega, psi = simulate(D, TStat(), (big, 0, 0), 1.0, small_bank)
    assert r1 == np.mean(psi[:, 1:].any(axis=1))
    assert res.max_rate == max(r0, r1, r2)
    assert res.argmax in (t0, t1)


def test_scan_rejects_empty_grid(small_bank):
    with pytest.raises(ConfigurationError):
        fwer_scan(D, TStat(), [], 1.0, small_bank)


def test_bad_tasks(small_bank):
    with pytest.raises(ConfigurationError):
        estimate_oc(EvalTask(D, TStat(), (0.0, 0.0), 1.0, small_bank))
    with pytest.raises(ConfigurationError):
        estimate_oc(EvalTask(D, TStat(), (0.0, 0.0, float("inf")), 1.0, small_bank))
    with pytest.raises(ConfigurationError):
        estimate_oc(EvalTask(D, TStat(), (0.0, 0.0, 0.0), 0.0, small_bank))
    with pytest.raises(ResourceError):
        estimate_oc(EvalTask(Design(21, D.e, D.f), TStat(), (0.0,) * 3, 1.0, small_bank))


def test_mc_standard_errors(small_bank):
    est = estimate_oc(EvalTask(D, TStat(), (0.0,) * 3, 1.0, small_bank))
    assert est.mc_se_fwer == pytest.approx(math.sqrt(est.fwer * (1 - est.fwer) / 4000))
