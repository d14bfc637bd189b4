import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import eigh_tridiagonal

from dotpulse import (
    DetuningOutOfRange,
    DotGeometry,
    delta_v_elements,
    orthogonalization_g,
    single_dot_energy,
    tunnel_coupling,
)
from dotpulse.constants import CONST, M_PAR, M_PERP


class TestLengthScales:
    def test_paper_dot_radius(self, fit_geometry):
        a, b, l0 = fit_geometry.length_scales()
        # "dot diameter 2a ~ 30 nm" at E0 = 1.7 meV
        assert 2 * a == pytest.approx(30.72, abs=0.01)
        assert b == pytest.approx(3.0, rel=1e-12)
        assert l0 == pytest.approx(a, rel=1e-13)  # B = 0

    def test_zero_field_l0_equals_a(self):
        g = DotGeometry.from_thickness(e0=2.5, thickness_nm=2.5, half_separation=40.0)
        assert g.magnetic_length == pytest.approx(g.dot_radius, rel=1e-14)

    def test_experimental_field_shift(self):
        g = DotGeometry.from_thickness(
            e0=1.7, thickness_nm=3.0, half_separation=45.0, b_field=0.1
        )
        # Larmor energy ~ 60 ueV, negligible against E0
        assert g.larmor_energy == pytest.approx(0.0609, abs=2e-3)
        assert abs(g.magnetic_length / g.dot_radius - 1.0) < 1e-3

    def test_l0_never_exceeds_a(self):
        for b_field in (0.0, 0.05, 0.2, 1.0, 5.0):
            g = DotGeometry.from_thickness(
                e0=1.7, thickness_nm=3.0, half_separation=45.0, b_field=b_field
            )
            assert g.magnetic_length <= g.dot_radius + 1e-15

    def test_thin_dot_regime_enforced(self):
        with pytest.raises(ValueError, match="thin-dot"):
            DotGeometry.from_thickness(e0=1.7, thickness_nm=8.0, half_separation=45.0)


class TestOverlap:
    def test_l_zero_limit(self):
        # s -> 1 as the dots merge; use a tiny but legal separation
        g = DotGeometry.from_thickness(e0=1.7, thickness_nm=3.0, half_separation=1e-9)
        assert g.overlap_s == pytest.approx(1.0, abs=1e-12)

    def test_three_radii_value(self):
        g0 = DotGeometry.from_thickness(e0=1.7, thickness_nm=3.0, half_separation=45.0)
        g = DotGeometry.from_thickness(
            e0=1.7, thickness_nm=3.0, half_separation=3.0 * g0.dot_radius
        )
        assert g.overlap_s == pytest.approx(math.exp(-9.0), rel=1e-12)

    def test_field_suppresses_overlap(self):
        values = [
            DotGeometry.from_thickness(
                e0=1.7, thickness_nm=3.0, half_separation=45.0, b_field=b
            ).overlap_s
            for b in (0.0, 0.1, 0.5, 1.0)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_separation_suppresses_overlap(self):
        values = [
            DotGeometry.from_thickness(
                e0=1.7, thickness_nm=3.0, half_separation=L
            ).overlap_s
            for L in (30.0, 40.0, 50.0, 60.0)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestOrthogonalization:
    def test_series_limit(self):
        s = 1e-3
        assert orthogonalization_g(s) == pytest.approx(s / 2, rel=1e-6)
        assert orthogonalization_g(s) == pytest.approx(s / 2 + s**3 / 8, rel=1e-8)

    def test_g_below_s(self):
        for s in (1e-4, 0.01, 0.3, 0.9, 0.999):
            g = orthogonalization_g(s)
            assert 0 < g < s or (s == 1.0 and g == 1.0)

    def test_exact_orthonormality_identity(self):
        # <L|R> = 0 reduces to s(1+g^2) - 2g = 0
        for s in (1e-4, 0.01, 0.2, 0.7):
            g = orthogonalization_g(s)
            assert s * (1 + g * g) - 2 * g == pytest.approx(0.0, abs=1e-13)
            norm = 1.0 - 2 * s * g + g * g
            # <L|L> with the same coefficients
            assert (1.0 + g * g - 2 * g * s) / norm == pytest.approx(1.0, abs=1e-12)


def _dv_oracle(geometry, epsilon, which):
    """Direct numerical integration of dV against Gaussian orbital products."""
    a = geometry.dot_radius
    L = geometry.half_separation
    ax = geometry.alpha_x
    x0 = epsilon / (4 * ax * L)

    def dv(x):
        return np.sign(x - x0) * (epsilon / 2 - 2 * ax * L * x)

    def phi(x, center):
        return (1 / (math.pi ** 0.25 * math.sqrt(a))) * np.exp(
            -((x - center) ** 2) / (2 * a * a)
        )

    pairs = {"LL": (-L, -L), "RR": (L, L), "LR": (-L, L)}
    c1, c2 = pairs[which]
    val, _ = quad(
        lambda x: phi(x, c1) * phi(x, c2) * dv(x),
        -L - 12 * a,
        L + 12 * a,
        limit=400,
        epsabs=1e-14,
        epsrel=1e-12,
        points=[x0, -L, L],
    )
    return val


class TestDeltaV:
    def test_symmetric_at_zero_detuning(self, fit_geometry):
        dv_ll, dv_rr, dv_lr = delta_v_elements(fit_geometry, 0.0)
        assert dv_ll == pytest.approx(dv_rr, rel=1e-14)
        a = fit_geometry.dot_radius
        L = fit_geometry.half_separation
        ax = fit_geometry.alpha_x
        expected_ll = -2 * ax * L**2 * math.erf(L / a) - (
            2 * ax * L * a / math.sqrt(math.pi)
        ) * math.exp(-((L / a) ** 2))
        assert dv_ll == pytest.approx(expected_ll, rel=1e-14)
        s = math.exp(-((L / a) ** 2))
        assert dv_lr == pytest.approx(-s * 2 * ax * L * a / math.sqrt(math.pi), rel=1e-14)

    def test_against_integration_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            g = DotGeometry.from_thickness(
                e0=float(rng.uniform(1.0, 3.0)),
                thickness_nm=float(rng.uniform(2.0, 4.0)),
                half_separation=float(rng.uniform(30.0, 60.0)),
            )
            eps = float(rng.uniform(-0.3, 0.3))
            dv_ll, dv_rr, dv_lr = delta_v_elements(g, eps)
            assert dv_ll == pytest.approx(_dv_oracle(g, eps, "LL"), rel=1e-8)
            assert dv_rr == pytest.approx(_dv_oracle(g, eps, "RR"), rel=1e-8)
            assert dv_lr == pytest.approx(_dv_oracle(g, eps, "LR"), rel=1e-8)

    def test_detuning_out_of_range(self, fit_geometry):
        # |x0| >= L at eps = 4 alpha_x L^2
        eps_limit = 4 * fit_geometry.alpha_x * fit_geometry.half_separation**2
        with pytest.raises(DetuningOutOfRange):
            delta_v_elements(fit_geometry, 1.01 * eps_limit)
        with pytest.raises(DetuningOutOfRange):
            tunnel_coupling(fit_geometry, -1.01 * eps_limit)


def _schroedinger_splitting(geometry, epsilon=0.0, n=6001):
    """Doublet splitting of the 1-D double well by dense finite differences."""
    a = geometry.dot_radius
    L = geometry.half_separation
    ax = geometry.alpha_x
    span = L + 8 * a
    x = np.linspace(-span, span, n)
    h = x[1] - x[0]
    v = np.minimum(ax * (x + L) ** 2, ax * (x - L) ** 2 + epsilon)
    kin = CONST.hbar**2 / (2 * M_PERP * h * h)
    diag = v + 2 * kin
    off = np.full(n - 1, -kin)
    w = eigh_tridiagonal(diag, off, select="i", select_range=(0, 1))[0]
    return w[1] - w[0]


class TestTunnelCoupling:
    def test_paper_magnitude(self, fit_geometry):
        delta = tunnel_coupling(fit_geometry, 0.0)
        # "Delta ~ 1 ueV" from the microscopic fit
        assert 0.5e-3 < delta < 2e-3

    def test_against_schroedinger_oracle(self, fit_geometry):
        delta = tunnel_coupling(fit_geometry, 0.0)
        splitting = _schroedinger_splitting(fit_geometry)
        assert delta == pytest.approx(splitting, rel=0.20)

    def test_weak_detuning_dependence(self, fit_geometry):
        d0 = tunnel_coupling(fit_geometry, 0.0)
        for eps in (-0.3, -0.1, 0.1, 0.3):
            assert abs(tunnel_coupling(fit_geometry, eps) / d0 - 1.0) < 0.01

    def test_even_to_first_order(self, fit_geometry):
        d0 = tunnel_coupling(fit_geometry, 0.0)
        dplus = tunnel_coupling(fit_geometry, 1e-3)
        dminus = tunnel_coupling(fit_geometry, -1e-3)
        assert abs(dplus - dminus) / d0 < 1e-6


def _fock_darwin_energy_oracle(geometry, n=160):
    """<phi|H|phi> for the 3-D Gaussian ground state by Gauss-Hermite quadrature.

    Separable: each axis contributes <K_i> + <V_i>; for the harmonic well
    with matching Gaussian width both equal a quarter of the mode energy.
    Evaluated numerically anyway as an independent check.
    """
    from numpy.polynomial.hermite import hermgauss

    x, w = hermgauss(n)
    total = 0.0
    for e_mode, mass in ((geometry.e0, M_PERP), (geometry.e0, M_PERP), (geometry.ez, M_PAR)):
        width = math.sqrt(CONST.hbar**2 / (mass * e_mode))
        # in units y = x/width: <V> = alpha width^2 <y^2>, <K> = hbar^2/(2 m width^2) <y^2>
        alpha = mass * e_mode**2 / (2 * CONST.hbar**2)
        y2 = float((w * x * x).sum() / w.sum())
        total += alpha * width**2 * y2 + CONST.hbar**2 / (2 * mass * width**2) * y2
    return total


class TestSingleDotEnergy:
    def test_sum_rule(self):
        g = DotGeometry(e0=1.7, ez=20.0, half_separation=45.0)
        assert single_dot_energy(g) == pytest.approx(11.7, rel=1e-14)

    def test_against_quadrature_oracle(self, fit_geometry):
        assert single_dot_energy(fit_geometry) == pytest.approx(
            _fock_darwin_energy_oracle(fit_geometry), rel=1e-8
        )

    def test_independent_of_separation(self):
        g1 = DotGeometry.from_thickness(e0=1.7, thickness_nm=3.0, half_separation=30.0)
        g2 = DotGeometry.from_thickness(e0=1.7, thickness_nm=3.0, half_separation=70.0)
        assert single_dot_energy(g1) == single_dot_energy(g2)


class TestValidation:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            DotGeometry(e0=-1.0, ez=8.0, half_separation=45.0)
        with pytest.raises(ValueError):
            DotGeometry(e0=1.7, ez=8.0, half_separation=0.0)
        with pytest.raises(ValueError):
            DotGeometry(e0=1.7, ez=8.0, half_separation=45.0, b_field=-0.1)
