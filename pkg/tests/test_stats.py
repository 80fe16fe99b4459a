import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from mamsopt.stats import (
    RngStream, draw_std_normal, normal_quantile, std_normal_cdf, t_cdf, t_isf, t_quantile,
    uniforms_at,
)

mpmath.mp.dps = 40


def mp_t_cdf(x, nu):
    # independent oracle: regularized incomplete beta in arbitrary precision
    x, nu = mpmath.mpf(x), mpmath.mpf(nu)
    tail = mpmath.betainc(nu / 2, mpmath.mpf(1) / 2, 0, nu / (nu + x * x), regularized=True) / 2
    return float(1 - tail) if x >= 0 else float(tail)


def test_normal_cdf_anchor():
    assert std_normal_cdf(2.33) == pytest.approx(0.990097, abs=1e-6)
    assert std_normal_cdf(0.0) == 0.5


@given(st.floats(-8, 8))
def test_normal_cdf_matches_mpmath(x):
    assert std_normal_cdf(x) == pytest.approx(float(mpmath.ncdf(x)), rel=1e-12, abs=1e-300)


def test_t_quantile_anchors():
    assert t_quantile(0.975, 2) == pytest.approx(4.302653, abs=1e-6)
    assert t_quantile(0.95, 18) == pytest.approx(1.734064, abs=1e-6)
    assert t_quantile(0.5, 7) == 0.0


@pytest.mark.parametrize("nu", [1, 2, 5, 30, 176])
@pytest.mark.parametrize("x", [-6.0, -2.33, -0.4, 0.0, 0.7, 2.084, 4.5])
def test_t_cdf_matches_oracle(x, nu):
    assert t_cdf(x, nu) == pytest.approx(mp_t_cdf(x, nu), rel=1e-11, abs=1e-15)


@pytest.mark.parametrize("nu", [1, 2, 5, 30, 176])
@given(p=st.floats(1e-9, 1 - 1e-9))
def test_quantile_round_trip(nu, p):
    x = t_quantile(p, nu)
    assert t_cdf(x, nu) == pytest.approx(p, rel=1e-9, abs=1e-14)


@given(nu=st.integers(1, 500), p=st.floats(0.01, 0.98))
def test_quantile_monotone_in_p(nu, p):
    assert t_quantile(p, nu) < t_quantile(p + 0.01, nu)


@pytest.mark.parametrize("p", [0.9, 0.95, 0.99])
def test_t_heavier_than_normal(p):
    # upper quantiles decrease in nu toward the normal quantile
    qs = [t_quantile(p, nu) for nu in (1, 2, 5, 30, 1000)]
    assert all(a > b for a, b in zip(qs, qs[1:]))
    assert qs[-1] > normal_quantile(p)
    assert t_quantile(p, 1e6) == pytest.approx(normal_quantile(p), abs=1e-4)


def test_isf_is_upper_tail():
    assert t_isf(0.05, 10) == pytest.approx(t_quantile(0.95, 10))
    assert 1 - t_cdf(t_isf(1e-8, 176), 176) == pytest.approx(1e-8, rel=1e-6)


@pytest.mark.parametrize("p,df", [(0.0, 3), (1.0, 3), (0.5, 0.5), (float("nan"), 3)])
def test_quantile_rejects_bad_input(p, df):
    with pytest.raises(ValueError):
        t_quantile(p, df)


def test_stream_is_position_addressable():
    a = draw_std_normal(RngStream(7), 1000)
    s = RngStream(7, 0)
    pieces = [draw_std_normal(s, k) for k in (3, 1, 250, 746)]
    np.testing.assert_array_equal(np.concatenate(pieces), a)
    assert s.position == 1000
    np.testing.assert_array_equal(draw_std_normal(RngStream(7, 437), 10), a[437:447])


def test_streams_differ_by_seed_and_substream():
    a = draw_std_normal(RngStream(1), 64)
    b = draw_std_normal(RngStream(2), 64)
    assert not np.array_equal(a, b)
    sub = RngStream.substream(1, 3, 16)
    np.testing.assert_array_equal(draw_std_normal(sub, 16), a[48:64])


def test_uniforms_open_interval():
    u = uniforms_at(123, 5, 100_000)
    assert u.min() > 0 and u.max() < 1


def test_deviate_moments():
    z = draw_std_normal(RngStream(20170601), 400_000)
    se = 1 / math.sqrt(z.size)
    assert abs(z.mean()) < 4 * se
    assert abs(z.var() - 1) < 4 * math.sqrt(2) * se
    assert abs(np.mean(z**3)) < 4 * math.sqrt(15) * se
    # tail mass against the normal CDF
    assert np.mean(z > 1.96) == pytest.approx(0.025, abs=0.001)


def test_negative_count_rejected():
    with pytest.raises(ValueError):
        draw_std_normal(RngStream(0), -1)
