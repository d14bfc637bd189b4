import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dotpulse import (
    QubitParams,
    backaction_rate,
    diabaticity_threshold,
    energy_gap,
    equilibrium_ground_population,
    equilibrium_occupancy_R,
    ground_overlap,
    is_diabatic,
    mixing_angle,
)
from dotpulse.constants import CONST

DELTA = 1e-3

finite_eps = st.floats(-50.0, 50.0, allow_nan=False)


def eigvec_ground(eps, delta):
    """Explicit ground eigenvector of -(eps sz + delta sx)/2, test-side oracle."""
    h = -0.5 * np.array([[eps, delta], [delta, -eps]])
    w, v = np.linalg.eigh(h)
    return v[:, 0]


class TestEnergyGap:
    def test_zero_detuning_gives_delta(self):
        assert energy_gap(0.0, DELTA) == DELTA

    def test_direct_value(self):
        assert energy_gap(0.21, DELTA) == pytest.approx(
            math.sqrt(0.21**2 + DELTA**2), rel=1e-15
        )
        assert energy_gap(0.21, DELTA) == pytest.approx(0.21000238093888363, rel=1e-12)

    def test_even(self):
        assert energy_gap(-0.3, DELTA) == energy_gap(0.3, DELTA)

    @given(finite_eps)
    def test_gap_at_least_delta(self, eps):
        gap = energy_gap(eps, DELTA)
        assert gap >= DELTA
        # equality only at the anticrossing (up to fp underflow of eps^2)
        if abs(eps) > 1e-9:
            assert gap > DELTA
        if eps == 0.0:
            assert gap == DELTA


class TestMixingAngle:
    def test_anticrossing_midpoint(self):
        assert mixing_angle(0.0, DELTA) == pytest.approx(math.pi / 4, abs=1e-15)

    def test_large_positive_detuning(self):
        # 0.5*atan2(1e-3, 10) evaluated directly
        assert mixing_angle(10.0, DELTA) == pytest.approx(4.9999999833333334e-05, rel=1e-12)

    def test_large_negative_detuning_complement(self):
        assert mixing_angle(-10.0, DELTA) == pytest.approx(
            math.pi / 2 - mixing_angle(10.0, DELTA), abs=1e-15
        )

    @given(finite_eps)
    def test_reflection_identity(self, eps):
        assert mixing_angle(-eps, DELTA) + mixing_angle(eps, DELTA) == pytest.approx(
            math.pi / 2, abs=1e-12
        )

    def test_range_and_limits(self):
        eps = np.linspace(-40, 40, 401)
        theta = mixing_angle(eps, DELTA)
        assert np.all((theta >= 0) & (theta <= math.pi / 2))
        assert np.all(np.diff(theta) < 0)  # decreasing in eps


class TestGroundOverlap:
    def test_identical_bases(self):
        assert ground_overlap(0.1, 0.1, DELTA) == 1.0

    def test_orthogonal_asymptotes(self):
        assert ground_overlap(10.0, -10.0, DELTA) < 1e-6

    def test_against_explicit_eigenvectors(self):
        for e0, e1 in [(0.0, 0.21), (0.05, -0.02), (-1.0, 3.0)]:
            inner = float(eigvec_ground(e1, DELTA) @ eigvec_ground(e0, DELTA))
            assert ground_overlap(e0, e1, DELTA) == pytest.approx(
                inner**2, abs=1e-12
            )

    @given(finite_eps, finite_eps)
    def test_symmetric_and_bounded(self, a, b):
        mu = ground_overlap(a, b, DELTA)
        assert 0.0 <= mu <= 1.0
        assert mu == pytest.approx(ground_overlap(b, a, DELTA), abs=1e-15)


class TestEquilibrium:
    def test_right_occupancy_at_zero(self):
        assert equilibrium_occupancy_R(0.0, DELTA, 0.3) == 0.5
        assert equilibrium_occupancy_R(0.0, 0.5, 77.0) == 0.5

    def test_right_occupancy_direct(self):
        # kB*0.3 K = 0.025852 meV, tanh(4.0617...) ~ 0.99940
        assert equilibrium_occupancy_R(0.21, DELTA, 0.3) == pytest.approx(
            3.021393968e-4, rel=1e-9
        )

    @given(finite_eps)
    def test_antisymmetry_about_half(self, eps):
        total = equilibrium_occupancy_R(eps, DELTA, 0.3) + equilibrium_occupancy_R(
            -eps, DELTA, 0.3
        )
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_ground_population_frozen_limit(self):
        assert equilibrium_ground_population(1.0, DELTA, 0.05) == pytest.approx(
            1.0, abs=1e-9
        )

    def test_ground_population_direct(self):
        assert equilibrium_ground_population(0.0, DELTA, 0.3) == pytest.approx(
            1.0 / (1.0 + math.exp(-DELTA / (CONST.kB * 0.3))), rel=1e-14
        )
        assert equilibrium_ground_population(0.0, DELTA, 0.3) == pytest.approx(
            0.50967, abs=1e-5
        )

    def test_infinite_temperature_limit(self):
        assert equilibrium_ground_population(0.1, DELTA, 1e6) == pytest.approx(
            0.5, abs=1e-6
        )

    @given(finite_eps)
    def test_detailed_balance_identity(self, eps):
        beta_gap = energy_gap(eps, DELTA) / (CONST.kB * 0.3)
        p_excited = math.exp(-beta_gap) / (1.0 + math.exp(-beta_gap))
        assert equilibrium_ground_population(eps, DELTA, 0.3) == pytest.approx(
            1.0 - p_excited, abs=1e-12
        )


class TestDiabaticity:
    def test_paper_value(self):
        tau = diabaticity_threshold(0.21, DELTA)
        assert tau == pytest.approx(2 * CONST.hbar * 0.21 / (math.pi * DELTA**2), rel=1e-15)
        assert 80.0 < tau < 96.0
        # the experimental 16 ns ramp is diabatic
        assert is_diabatic(16.0, 0.21, DELTA)

    def test_linear_in_amplitude(self):
        assert diabaticity_threshold(0.42, DELTA) == pytest.approx(
            2 * diabaticity_threshold(0.21, DELTA), rel=1e-14
        )

    def test_inverse_square_in_delta(self):
        assert diabaticity_threshold(0.21, 2 * DELTA) == pytest.approx(
            diabaticity_threshold(0.21, DELTA) / 4, rel=1e-14
        )

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            diabaticity_threshold(0.21, 0.0)
        with pytest.raises(ValueError):
            diabaticity_threshold(-0.1, DELTA)


class TestBackaction:
    def test_equal_currents(self):
        assert backaction_rate(2e-9, 2e-9) == 0.0

    def test_paper_order_of_magnitude(self):
        rate = backaction_rate(2e-9, 2e-9 - 0.25e-12)
        assert 1.0 < rate < 100.0  # "order of Hz"
        assert rate == pytest.approx(7.7611649, rel=1e-6)

    def test_quadruple_current_identity(self):
        i = 3.7e-9
        assert backaction_rate(4 * i, i) == pytest.approx(
            i / (2 * math.pi * CONST.e_charge), rel=1e-12
        )

    def test_symmetric(self):
        assert backaction_rate(1e-9, 3e-9) == backaction_rate(3e-9, 1e-9)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            backaction_rate(-1e-9, 1e-9)


class TestQubitParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            QubitParams(delta=0.0, temperature=0.3)
        with pytest.raises(ValueError):
            QubitParams(delta=1e-3, temperature=0.0)

    def test_beta(self):
        q = QubitParams(delta=1e-3, temperature=0.3)
        assert q.beta == pytest.approx(1.0 / (CONST.kB * 0.3), rel=1e-15)
