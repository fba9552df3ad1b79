import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periodic_horizon import (
    DegenerateProblemError,
    DiscountConfig,
    PeriodSignal,
    Signal,
    TailPolicy,
    decompose,
    decompose_oracle,
    make_grid,
    orthogonality_residual,
    periodic_extend,
    project_periodic,
    weighted_inner,
)
from periodic_horizon.projection import decomposition_energy
from periodic_horizon.signal import trend_signal


def _signal(rng, d, m, K, n, tail, slope=True):
    tail = TailPolicy(tail)
    s = rng.normal(size=n) if slope and tail is TailPolicy.PERIODIC else None
    return Signal(make_grid(d, m, K), rng.normal(size=(m * K, n)), tail, s)


def test_projection_is_idempotent_to_the_bit(rng, discount):
    x = _signal(rng, discount, 32, 4, 2, "periodic", slope=False)
    once = project_periodic(x).lifted
    twice = project_periodic(once).lifted
    np.testing.assert_array_equal(once.values, twice.values)


def test_projection_residual_is_orthogonal_and_pythagorean(rng, discount):
    x = _signal(rng, discount, 32, 4, 2, "periodic", slope=False)
    px = project_periodic(x).lifted
    res = x - px
    assert orthogonality_residual(res) < 1e-12 * np.abs(x.values).max()
    p = periodic_extend(PeriodSignal(discount, rng.normal(size=(32, 2))), 4)
    assert abs(weighted_inner(res, p)) < 1e-12 * np.sqrt(weighted_inner(p, p) * weighted_inner(x, x))
    lhs = weighted_inner(x, x)
    rhs = weighted_inner(px, px) + weighted_inner(res, res)
    assert abs(lhs - rhs) / lhs < 1e-13


def test_projection_of_periodic_signal_is_itself(rng):
    d = DiscountConfig(0.3, 2.0)
    p = PeriodSignal(d, rng.normal(size=(10, 1)))
    res = project_periodic(periodic_extend(p, 3))
    np.testing.assert_array_equal(res.period.values, p.values)


@settings(max_examples=50, deadline=None)
@given(
    r=st.floats(0.05, 2.0),
    T=st.floats(0.3, 3.0),
    m=st.sampled_from([4, 8, 16]),
    n=st.sampled_from([1, 2, 3]),
    K=st.integers(2, 6),
    tail=st.sampled_from(["zero", "periodic"]),
    seed=st.integers(0, 2**31),
)
def test_closed_form_matches_normal_equations(r, T, m, n, K, tail, seed):
    x = _signal(np.random.default_rng(seed), DiscountConfig(r, T), m, K, n, tail)
    a, b = decompose(x), decompose_oracle(x)
    scale = max(1.0, np.abs(x.values).max())
    assert np.abs(a.p_hat.values - b.p_hat.values).max() < 1e-6 * scale
    assert np.abs(a.a_hat - b.a_hat).max() < 1e-6 * scale


def test_identity_signal_is_pure_trend(discount):
    x = trend_signal(make_grid(discount, 16, 3), [1.0, -2.0], TailPolicy.PERIODIC)
    dec = decompose(x)
    np.testing.assert_allclose(dec.a_hat, [1.0, -2.0], atol=1e-8)
    np.testing.assert_allclose(dec.p_hat.values, 0.0, atol=1e-8)
    assert dec.residual_energy < 1e-20


def test_constant_signal_has_no_trend(discount):
    x = Signal(make_grid(discount, 8, 4), np.full(32, -3.25), TailPolicy.PERIODIC)
    dec = decompose(x)
    assert abs(dec.a_hat[0]) < 1e-8
    np.testing.assert_allclose(dec.p_hat.values, -3.25, rtol=1e-12)


def test_sine_plus_trend_on_finite_data():
    d = DiscountConfig(0.5, 1.0)
    x = Signal.from_function(make_grid(d, 8, 4), lambda t: np.sin(2 * np.pi * t) + 0.5 * t)
    dec = decompose(x)
    assert dec.a_hat[0] == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(dec.p_hat.values[:, 0], np.sin(2 * np.pi * np.arange(8) / 8), atol=1e-12)
    assert abs(decompose_oracle(x).a_hat[0] - 0.5) < 1e-6


def test_decomposition_minimises_the_energy(rng):
    d = DiscountConfig(0.4, 1.0)
    x = _signal(rng, d, 8, 3, 2, "periodic")
    dec = decompose(x)
    base = decomposition_energy(x, dec.p_hat, dec.a_hat)
    for _ in range(10):
        dp = PeriodSignal(d, dec.p_hat.values + 1e-3 * rng.normal(size=(8, 2)))
        da = dec.a_hat + 1e-3 * rng.normal(size=2)
        assert decomposition_energy(x, dp, dec.a_hat) > base
        assert decomposition_energy(x, dec.p_hat, da) > base


def test_seasonal_and_trend_parts_rebuild_the_fit(rng):
    d = DiscountConfig(0.4, 1.0)
    x = _signal(rng, d, 8, 3, 1, "zero")
    dec = decompose(x)
    fit = dec.seasonal(3, "zero") + dec.trend(x.grid, "zero")
    res = x - fit
    assert weighted_inner(res, res) == pytest.approx(dec.residual_energy, rel=1e-12)


def test_oracle_reports_degenerate_systems(rng):
    x = _signal(rng, DiscountConfig(0.4, 1.0), 8, 3, 1, "zero")
    with pytest.raises(DegenerateProblemError, match="cond"):
        decompose_oracle(x, cond_max=1.0)
    big = Signal(make_grid(DiscountConfig(0.4, 1.0), 5000, 1), np.zeros((5000, 2)))
    with pytest.raises(ValueError, match="too many"):
        decompose_oracle(big)
