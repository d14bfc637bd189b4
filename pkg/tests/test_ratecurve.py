import numpy as np
import pytest

from dotpulse import RateCurve


def test_constant_curve():
    c = RateCurve.constant_hz(1e4, span=(-0.5, 0.5))
    eps = np.linspace(-2, 2, 41)  # includes extrapolation region
    assert np.allclose(c(eps), 1e-5, rtol=1e-14)
    assert np.allclose(c.rate_hz(eps), 1e4, rtol=1e-14)


def test_positivity_everywhere():
    c = RateCurve([-0.5, -0.1, 0.0, 0.2, 0.5], [-25.0, -3.0, -30.0, 4.0, -10.0])
    eps = np.linspace(-1.0, 1.0, 2001)  # span plus moderate extrapolation
    assert np.all(c(eps) > 0)


def test_interpolates_knots_exactly():
    knots = np.array([-0.4, -0.1, 0.0, 0.15, 0.4])
    logv = np.array([-12.0, -10.5, -11.0, -9.0, -8.0])
    c = RateCurve(knots, logv)
    assert np.allclose(c.log_rate(knots), logv, atol=1e-13)


def test_boundary_slope_extrapolation():
    # log-linear curve extrapolates exactly log-linearly
    knots = np.linspace(-0.3, 0.3, 7)
    logv = 2.5 * knots - 11.0
    c = RateCurve(knots, logv)
    assert c.log_rate(0.9) == pytest.approx(2.5 * 0.9 - 11.0, rel=1e-12)
    assert c.log_rate(-1.2) == pytest.approx(-2.5 * 1.2 - 11.0, rel=1e-12)


def test_even_from_half_is_even():
    abs_knots = np.linspace(0.0, 0.6, 7)
    logv = np.log(1e-5) + np.linspace(0, 3, 7) ** 2
    c = RateCurve.even_from_half(abs_knots, logv)
    eps = np.linspace(-0.8, 0.8, 101)
    assert np.allclose(c(eps), c(-eps), rtol=1e-13)
    assert c.knots.size == 13


def test_rate_at_gap_matches_detuning_domain():
    c = RateCurve([-0.5, 0.0, 0.5], [-9.0, -12.0, -9.0])
    delta = 1e-3
    eps = 0.2
    gap = np.hypot(eps, delta)
    assert c.rate_at_gap(gap, delta) == pytest.approx(c(eps), rel=1e-12)
    # gaps below delta clamp to the anticrossing
    assert c.rate_at_gap(0.5 * delta, delta) == pytest.approx(c(0.0), rel=1e-12)


def test_with_log_values_keeps_knots():
    c = RateCurve([-0.1, 0.0, 0.1], [-10.0, -11.0, -10.0])
    c2 = c.with_log_values([-9.0, -9.0, -9.0])
    assert np.array_equal(c2.knots, c.knots)
    assert c2(0.05) == pytest.approx(np.exp(-9.0), rel=1e-12)


def test_validation():
    with pytest.raises(ValueError):
        RateCurve([0.0], [1.0])
    with pytest.raises(ValueError):
        RateCurve([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        RateCurve([0.0, 1.0], [1.0, np.inf])
    with pytest.raises(ValueError):
        RateCurve.constant(-5.0)
    with pytest.raises(ValueError):
        RateCurve.even_from_half([0.1, 0.2], [1.0, 1.0])  # must start at 0
