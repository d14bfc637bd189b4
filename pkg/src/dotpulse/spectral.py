"""Bath spectral densities J(omega) and the relaxation rate built from them.

Two families are provided:

* a phenomenological power law with Gaussian high-frequency cutoff,
  J(w) = alpha hbar^2 w (w/w_c)^(s-1) exp(-w^2/2w_c^2);
* a microscopic deformation-potential acoustic-phonon model for a
  double dot, split into longitudinal and transverse branches.  Each
  branch reduces to a 1-D integral over the polar direction cosine v,
  with the azimuthal average folded into a 1 - J0(...) Bessel factor.

J carries dimensions of hbar^2 * frequency = meV^2 ns.  The relaxation
rate is Gamma_r = (2 pi/hbar^2) (delta/gap)^2 J(Omega) coth(beta gap/2),
evaluated at the gap frequency Omega = sqrt(eps^2+delta^2)/hbar.

A tabulated form (log-log monotone cubic over an omega grid) lets the
dynamics and inference layers consume externally supplied or
pre-sampled spectral densities through the same interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.special import j0 as _scipy_j0

from .constants import CONST, KG_PER_M3_TO_INTERNAL, MEV_PER_EV
from .dotgeom import DotGeometry
from .qubit import QubitParams, energy_gap
from .ratecurve import RateCurve

__all__ = [
    "QuadratureError",
    "PhenomSpectral",
    "Material",
    "SILICON",
    "MicroSpectral",
    "TabulatedSpectral",
    "SpectralModel",
    "bessel_j0",
    "one_minus_j0",
    "j_phenom",
    "j_long",
    "j_trans",
    "j_micro",
    "j_micro_bruteforce",
    "spectral_density",
    "relaxation_rate",
    "SpectralRate",
    "rate_curve_from_model",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge; carries the error estimate."""

    def __init__(self, message, error_estimate):
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class PhenomSpectral:
    """Power-law bath with Gaussian cutoff.

    s_exponent: spectral exponent s >= 1 (s = 1 Ohmic, s > 1 super-Ohmic)
    coupling_alpha: dimensionless coupling strength > 0
    cutoff_energy: hbar*omega_c in meV (> 0)
    """

    s_exponent: float
    coupling_alpha: float
    cutoff_energy: float

    def __post_init__(self):
        if self.s_exponent < 1:
            raise ValueError(f"s_exponent must be >= 1, got {self.s_exponent}")
        if self.coupling_alpha <= 0:
            raise ValueError(f"coupling_alpha must be > 0, got {self.coupling_alpha}")
        if self.cutoff_energy <= 0:
            raise ValueError(f"cutoff_energy must be > 0, got {self.cutoff_energy}")

    @property
    def omega_c(self) -> float:
        """Cutoff angular frequency in rad/ns."""
        return self.cutoff_energy / CONST.hbar


@dataclass(frozen=True)
class Material:
    """Acoustic/deformation parameters of the host crystal.

    xi_d, xi_u: dilational and uniaxial shear deformation potentials (eV)
    mass_density: bulk density (kg/m^3)
    c_long, c_trans: longitudinal/transverse sound speeds (m/s)
    """

    xi_d: float
    xi_u: float
    mass_density: float
    c_long: float
    c_trans: float

    def __post_init__(self):
        if self.mass_density <= 0 or self.c_long <= 0 or self.c_trans <= 0:
            raise ValueError("mass_density and sound speeds must be > 0")


# literature values for silicon; deformation potentials are overridable
# since reported values disagree widely (even in sign for xi_d)
SILICON = Material(
    xi_d=-10.7, xi_u=9.29, mass_density=2.33e3, c_long=9.0e3, c_trans=5.41e3
)


@dataclass(frozen=True)
class MicroSpectral:
    """Deformation-potential phonon bath for a concrete dot geometry."""

    geometry: DotGeometry
    material: Material = SILICON
    quadrature_tol: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.quadrature_tol <= 1e-4):
            raise ValueError(
                f"quadrature_tol must be in (0, 1e-4], got {self.quadrature_tol}"
            )


class TabulatedSpectral:
    """J(omega) given on a grid, interpolated monotone-cubically in log-log.

    Below/above the grid the boundary log-log slope is continued linearly,
    preserving power-law behavior.  Requires strictly increasing omega > 0
    and J > 0 (zeros are not representable in log space).
    """

    def __init__(self, omega, j_values):
        omega = np.asarray(omega, dtype=float)
        j_values = np.asarray(j_values, dtype=float)
        if omega.ndim != 1 or omega.size < 2:
            raise ValueError("need at least two grid points")
        if not np.all(np.diff(omega) > 0) or omega[0] <= 0:
            raise ValueError("omega grid must be strictly increasing and > 0")
        if np.any(j_values <= 0):
            raise ValueError("tabulated J values must be > 0")
        self.omega = omega
        self.j_values = j_values
        self._logw = np.log(omega)
        self._logj = np.log(j_values)
        self._spline = PchipInterpolator(self._logw, self._logj, extrapolate=False)
        deriv = self._spline.derivative()
        self._slope_lo = float(deriv(self._logw[0]))
        self._slope_hi = float(deriv(self._logw[-1]))

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        out = np.zeros_like(w, dtype=float)
        pos = w > 0
        lw = np.log(np.where(pos, w, 1.0))
        val = self._spline(lw)
        val = np.where(
            lw < self._logw[0],
            self._logj[0] + self._slope_lo * (lw - self._logw[0]),
            val,
        )
        val = np.where(
            lw > self._logw[-1],
            self._logj[-1] + self._slope_hi * (lw - self._logw[-1]),
            val,
        )
        out = np.where(pos, np.exp(val), 0.0)
        return out if out.ndim else float(out)


SpectralModel = PhenomSpectral | MicroSpectral | TabulatedSpectral


def bessel_j0(x):
    """Zeroth Bessel function of the first kind.

    Matches the integral definition (1/pi) int_0^pi cos(x sin t) dt to
    better than 1e-10 relative away from its zeros.
    """
    return _scipy_j0(x)


def one_minus_j0(x):
    """1 - J0(x), series-protected against cancellation for |x| << 1.

    For x < 1e-3 uses x^2/4 - x^4/64 + x^6/2304, exact to machine
    precision there; this preserves the w^5 low-energy limit of the
    phonon integrals.
    """
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    series = x2 / 4.0 - x2 * x2 / 64.0 + x2 * x2 * x2 / 2304.0
    out = np.where(small, series, 1.0 - _scipy_j0(np.where(small, 1.0, x)))
    return out if out.ndim else float(out)


def j_phenom(omega, model: PhenomSpectral):
    """Phenomenological spectral density at omega (rad/ns), in meV^2 ns."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("omega must be >= 0")
    wc = model.omega_c
    out = (
        model.coupling_alpha
        * CONST.hbar**2
        * w
        * (w / wc) ** (model.s_exponent - 1.0)
        * np.exp(-(w**2) / (2.0 * wc**2))
    )
    return out if out.ndim else float(out)


def _branch_scales(model: MicroSpectral, branch: str):
    """Sound speed (nm/ns), weight function, and prefactor pieces per branch."""
    geom = model.geometry
    mat = model.material
    xi_d = mat.xi_d * MEV_PER_EV
    xi_u = mat.xi_u * MEV_PER_EV
    # m/s and nm/ns coincide numerically
    c = mat.c_long if branch == "L" else mat.c_trans
    rho = mat.mass_density * KG_PER_M3_TO_INTERNAL
    a, b, _ = geom.length_scales()
    L = geom.half_separation
    w_L = c / L   # rad/ns scales set by separation,
    w_a = c / a   # dot radius,
    w_b = c / b   # and dot thickness
    if branch == "L":
        weight = lambda v: (xi_d + xi_u * v * v) ** 2  # noqa: E731
    else:
        weight = lambda v: xi_u * xi_u * v * v * (1.0 - v * v)  # noqa: E731
    return c, rho, weight, w_L, w_a, w_b


def _j_branch(omega: float, model: MicroSpectral, branch: str) -> float:
    """One acoustic branch of the microscopic J via the 1-D reduced integral."""
    w = float(omega)
    if w < 0:
        raise ValueError("omega must be >= 0")
    if w == 0.0:
        return 0.0
    c, rho, weight, w_L, w_a, w_b = _branch_scales(model, branch)
    prefactor = (
        CONST.hbar * w**3 / (8.0 * math.pi**2 * rho * c**5)
        * math.exp(-(w**2) / (2.0 * w_a**2))
    )
    # exponent of the residual v-dependent Gaussian factor
    gauss_coeff = 0.5 * (w**2 / w_b**2 - w**2 / w_a**2)

    def integrand(v):
        bessel_arg = 2.0 * w * math.sqrt(max(1.0 - v * v, 0.0)) / w_L
        return (
            weight(v)
            * one_minus_j0(bessel_arg)
            * math.exp(-gauss_coeff * v * v)
        )

    result = quad(
        integrand, 0.0, 1.0, epsabs=0.0, epsrel=model.quadrature_tol,
        limit=200, full_output=True,
    )
    if len(result) > 3:
        raise QuadratureError(
            f"phonon integral ({branch} branch) did not converge at omega={w:g}",
            result[1],
        )
    return prefactor * result[0]


def j_long(omega, model: MicroSpectral) -> float:
    """Longitudinal acoustic-phonon spectral density (meV^2 ns)."""
    return _j_branch(omega, model, "L")


def j_trans(omega, model: MicroSpectral) -> float:
    """Transverse acoustic-phonon spectral density (meV^2 ns)."""
    return _j_branch(omega, model, "T")


def j_micro(omega, model: MicroSpectral) -> float:
    """Total microscopic spectral density, J_L + J_T."""
    return j_long(omega, model) + j_trans(omega, model)


def _j_branch_bruteforce(
    omega: float, model: MicroSpectral, branch: str, n_polar=256, n_azim=256
) -> float:
    """Dense tensor-product quadrature of the raw 2-D angular integral.

    Integrates sin^2((w/w_L) sin(theta) cos(phi)) over (cos(theta), phi)
    directly, without the azimuthal Bessel reduction; used as the test
    oracle for the 1-D form.
    """
    w = float(omega)
    if w == 0.0:
        return 0.0
    c, rho, weight, w_L, w_a, w_b = _branch_scales(model, branch)
    vx, vw = np.polynomial.legendre.leggauss(n_polar)    # v in [-1, 1]
    px, pw = np.polynomial.legendre.leggauss(n_azim)     # phi in [0, 2 pi]
    phi = math.pi * (px + 1.0)
    phi_w = math.pi * pw
    v = vx[:, None]
    sin_theta = np.sqrt(np.maximum(1.0 - v**2, 0.0))
    f = (
        weight(v)
        * np.sin((w / w_L) * sin_theta * np.cos(phi)[None, :]) ** 2
        * np.exp(-(w**2 / (2.0 * w_a**2)) * (1.0 - v**2))
        * np.exp(-(w**2 / (2.0 * w_b**2)) * v**2)
    )
    integral = float(vw @ f @ phi_w)
    return CONST.hbar * w**3 / (16.0 * math.pi**3 * rho * c**5) * integral


def j_micro_bruteforce(omega, model: MicroSpectral, n_polar=256, n_azim=256) -> float:
    """Total microscopic J by brute-force 2-D angular quadrature (oracle)."""
    return _j_branch_bruteforce(
        omega, model, "L", n_polar, n_azim
    ) + _j_branch_bruteforce(omega, model, "T", n_polar, n_azim)


def spectral_density(omega, model: SpectralModel):
    """Evaluate any spectral model at omega (rad/ns)."""
    if isinstance(model, PhenomSpectral):
        return j_phenom(omega, model)
    if isinstance(model, TabulatedSpectral):
        return model(omega)
    if isinstance(model, MicroSpectral):
        w = np.asarray(omega, dtype=float)
        if w.ndim == 0:
            return j_micro(float(w), model)
        return np.array([j_micro(float(wi), model) for wi in w])
    raise TypeError(f"unknown spectral model type {type(model).__name__}")


def relaxation_rate(epsilon, qubit: QubitParams, model: SpectralModel):
    """Born-Markov relaxation rate toward thermal equilibrium, in 1/ns.

    Gamma_r = (2 pi/hbar^2) (delta/gap)^2 J(Omega) coth(gap/2 kB T) at the
    gap frequency Omega = sqrt(eps^2 + delta^2)/hbar; even in eps and
    strictly positive for positive J.
    """
    gap = energy_gap(epsilon, qubit.delta)
    omega = gap / CONST.hbar
    jval = spectral_density(omega, model)
    coth = 1.0 / np.tanh(0.5 * qubit.beta * gap)
    out = (
        (2.0 * math.pi / CONST.hbar**2)
        * (qubit.delta / gap) ** 2
        * jval
        * coth
    )
    return out if np.ndim(out) else float(out)


class SpectralRate:
    """Callable eps -> Gamma_r(eps) binding a qubit and a spectral model.

    Suitable wherever a RateCurve is accepted by the dynamics layer;
    vectorized for phenomenological and tabulated models.
    """

    def __init__(self, qubit: QubitParams, model: SpectralModel):
        self.qubit = qubit
        self.model = model

    def __call__(self, epsilon):
        return relaxation_rate(epsilon, self.qubit, self.model)


def rate_curve_from_model(
    qubit: QubitParams, model: SpectralModel, eps_max: float, n_knots: int = 201
) -> RateCurve:
    """Sample Gamma_r(eps) onto an even RateCurve over |eps| <= eps_max.

    Mainly useful for the microscopic model, whose per-point quadrature is
    too slow to evaluate inside the pulse-dynamics inner loop.
    """
    abs_knots = np.linspace(0.0, eps_max, n_knots)
    rates = relaxation_rate(abs_knots, qubit, model)
    return RateCurve.even_from_half(abs_knots, np.log(rates))
