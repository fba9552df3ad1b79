import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periodic_horizon import (
    DiscountConfig,
    PeriodSignal,
    Signal,
    TailPolicy,
    make_grid,
    period_lp_norm,
    periodic_extend,
    restrict_to_period,
    sobolev_norm,
    weighted_inner,
    weighted_lp_norm,
)
from periodic_horizon.signal import finite_diff_derivative, period_weights, tail_power_sum, trend_signal


def test_discount_rejects_degenerate_and_invalid():
    with pytest.raises(ValueError, match="degenerate"):
        DiscountConfig(1e-9, 1.0)
    for r, T in [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (math.nan, 1.0), (1.0, math.inf)]:
        with pytest.raises(ValueError):
            DiscountConfig(r, T)


def test_grid_validation_and_times():
    d = DiscountConfig(0.5, 2.0)
    with pytest.raises(ValueError):
        make_grid(d, 1, 3)
    with pytest.raises(ValueError):
        make_grid(d, 4, 0)
    g = make_grid(d, 4, 3)
    t = g.times()
    assert t.shape == (12,)
    np.testing.assert_array_equal(t[4:] - t[:-4], np.full(8, 2.0))


def test_signal_validation():
    g = make_grid(DiscountConfig(0.5, 1.0), 4, 2)
    with pytest.raises(ValueError):
        Signal(g, np.zeros(7))
    with pytest.raises(ValueError):
        Signal(g, np.r_[np.zeros(7), np.nan])
    with pytest.raises(ValueError, match="ZERO tail"):
        Signal(g, np.zeros(8), TailPolicy.ZERO, slope=[1.0])
    s = Signal(g, np.arange(8.0))
    assert s.dim == 1 and s.periods().shape == (2, 4, 1)
    with pytest.raises(ValueError):
        s.values[0] = 1.0


def test_signal_arithmetic_checks_tails():
    g = make_grid(DiscountConfig(0.5, 1.0), 4, 2)
    a = Signal(g, np.ones(8), TailPolicy.PERIODIC, [1.0])
    b = Signal(g, np.ones(8), TailPolicy.PERIODIC, [0.5])
    np.testing.assert_array_equal((a - b).slope, [0.5])
    np.testing.assert_array_equal((2 * a).values, 2 * np.ones((8, 1)))
    with pytest.raises(ValueError, match="tail"):
        a + Signal(g, np.ones(8))


@pytest.mark.parametrize("K", [0, 1, 3, 7])
@pytest.mark.parametrize("p", [0, 1, 2])
@pytest.mark.parametrize("q", [0.05, 0.6, 0.97])
def test_tail_power_sum_matches_brute_force(q, K, p):
    k = np.arange(K, K + 5000, dtype=float)
    brute = math.fsum(k**p * q**k)
    assert tail_power_sum(q, K, p) == pytest.approx(brute, rel=1e-12)


def test_period_weights_sum_exactly(discount):
    q = discount.q
    for m in (2, 7, 64, 4096):
        w = period_weights(discount, m)
        assert w.sum() == pytest.approx((1 - q) / discount.r, rel=1e-14)
        assert np.all(w > 0)
    assert period_weights(discount, 8, weighted=False).sum() == pytest.approx(discount.T)


def test_period_weights_taylor_branch_is_continuous():
    # h = r*dt straddles the 1e-3 switch
    d1 = DiscountConfig(1.0, 0.99e-3 * 4)
    d2 = DiscountConfig(1.0, 1.01e-3 * 4)
    for d in (d1, d2):
        w = period_weights(d, 4)
        assert w.sum() == pytest.approx(-math.expm1(-d.r * d.T) / d.r, rel=1e-13)


def test_constant_norm_closed_form():
    d = DiscountConfig(0.4, 1.5)
    g = make_grid(d, 16, 3)
    c = Signal(g, np.full((48, 2), [3.0, 4.0]), TailPolicy.PERIODIC)
    for alpha in (1.0, 2.0, 3.0):
        assert weighted_lp_norm(c, alpha) == pytest.approx(5.0 * (1 / d.r) ** (1 / alpha), rel=1e-13)


def test_zero_tail_truncates_the_integral():
    d = DiscountConfig(0.4, 1.5)
    g = make_grid(d, 16, 3)
    one = Signal(g, np.ones(48))
    assert weighted_lp_norm(one, 1.0) == pytest.approx((1 - d.q**3) / d.r, rel=1e-13)
    assert weighted_lp_norm(one, 1.0, tail="periodic") == pytest.approx(1 / d.r, rel=1e-13)


def test_sine_norm_matches_analytic_integral():
    r, T = 0.3, 2.0
    d = DiscountConfig(r, T)
    w = 2 * math.pi / T
    exact = 1 / (2 * r) - r / (2 * (r * r + 4 * w * w))
    for m in (64, 128):
        x = Signal.from_function(make_grid(d, m, 1), lambda t: np.sin(w * t), TailPolicy.PERIODIC)
        err = abs(weighted_lp_norm(x, 2.0) ** 2 - exact) / exact
        assert err < 10 * (T / m) ** 2


def test_linear_trend_norm_with_slope_tail():
    # int_0^inf e^{-rt} t^2 dt = 2/r^3.  The period-folded quadrature is
    # first order for non-periodic data: the boundary node of each period
    # carries the half-hat of the next period start.
    d = DiscountConfig(0.7, 1.0)
    exact = 2 / d.r**3
    errs = []
    for m in (32, 64, 128):
        x = trend_signal(make_grid(d, m, 2), [1.0], TailPolicy.PERIODIC)
        errs.append(abs(weighted_lp_norm(x, 2.0) ** 2 - exact) / exact)
        assert errs[-1] < d.T / m
    assert 1.9 < errs[0] / errs[1] < 2.1 and 1.9 < errs[1] / errs[2] < 2.1
    # the numeric tail branch (alpha != 2) agrees with the closed form
    x = trend_signal(make_grid(d, 16, 2), [1.0], TailPolicy.PERIODIC)
    assert weighted_lp_norm(x, 2.0 + 1e-9) == pytest.approx(weighted_lp_norm(x, 2.0), rel=1e-7)


def test_weighted_inner_is_polarised_norm(rng):
    d = DiscountConfig(0.5, 1.0)
    g = make_grid(d, 8, 3)
    a = Signal(g, rng.normal(size=(24, 2)), TailPolicy.PERIODIC, rng.normal(size=2))
    b = Signal(g, rng.normal(size=(24, 2)), TailPolicy.PERIODIC, rng.normal(size=2))
    lhs = weighted_inner(a, b)
    rhs = 0.25 * (weighted_lp_norm(a + b, 2) ** 2 - weighted_lp_norm(a - b, 2) ** 2)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_periodic_extend_and_restrict_round_trip(rng):
    d = DiscountConfig(0.5, 1.0)
    p = PeriodSignal(d, rng.normal(size=(8, 2)))
    x = periodic_extend(p, 5)
    assert x.tail is TailPolicy.PERIODIC
    np.testing.assert_array_equal(x.values[8:], x.values[:-8])
    np.testing.assert_array_equal(restrict_to_period(x).values, p.values)
    with pytest.raises(ValueError):
        periodic_extend(p, 0)


@settings(max_examples=40, deadline=None)
@given(
    r=st.floats(0.05, 3.0),
    T=st.floats(0.2, 5.0),
    m=st.integers(2, 40),
    alpha=st.sampled_from([1.0, 1.5, 2.0, 3.0]),
    seed=st.integers(0, 2**31),
)
def test_extension_identity_property(r, T, m, alpha, seed):
    d = DiscountConfig(r, T)
    p = PeriodSignal(d, np.random.default_rng(seed).normal(size=(m, 2)))
    lhs = weighted_lp_norm(periodic_extend(p, 2), alpha)
    rhs = (1 - d.q) ** (-1 / alpha) * period_lp_norm(p, alpha)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_finite_difference_derivative_is_second_order():
    d = DiscountConfig(0.5, 1.0)
    errs = []
    for m in (32, 64):
        x = Signal.from_function(make_grid(d, m, 2), lambda t: np.sin(3 * t))
        dx = finite_diff_derivative(x)
        errs.append(np.max(np.abs(dx.values[:, 0] - 3 * np.cos(3 * x.grid.times()))))
    assert errs[0] / errs[1] > 3.5


def test_sobolev_norm_of_constant_is_plain_norm():
    d = DiscountConfig(0.5, 1.0)
    c = Signal(make_grid(d, 16, 2), np.full(32, 2.0), TailPolicy.PERIODIC)
    assert sobolev_norm(c, 2.0) == pytest.approx(weighted_lp_norm(c, 2.0), rel=1e-14)
