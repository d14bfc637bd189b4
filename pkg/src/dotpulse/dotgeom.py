"""Harmonic double-well device model and the tunnel coupling derived from it.

The two dots are identical anisotropic harmonic wells centered at
x = -L and x = +L with in-plane confinement energy E0 and vertical
confinement Ez; the localized basis states are the ground Fock-Darwin
orbitals of each well.  Orthogonalizing the (non-orthogonal) pair with
mixing coefficient g = (1 - sqrt(1 - s^2))/s and projecting the full
double-well Hamiltonian onto the resulting two-state basis yields the
tunnel coupling Delta(E0, L, eps) in closed form, up to error-function
matrix elements of the potential correction dV.

The perpendicular magnetic field is kept in the overlap and length
scales, where its confinement enhancement is observable, but neglected
inside the tunnel-coupling matrix elements (l0 -> a, phases dropped):
at the fields of interest the Larmor energy is far below E0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import erf

from .constants import CONST, M_PAR, M_PERP

__all__ = [
    "DetuningOutOfRange",
    "DotGeometry",
    "orthogonalization_g",
    "single_dot_energy",
    "delta_v_elements",
    "tunnel_coupling",
]


class DetuningOutOfRange(ValueError):
    """|eps| too large for the double-well minima to remain well-defined."""


# kilogram in meV ns^2/nm^2, for converting M_PERP back to SI in larmor_energy
_MEV_NS2_PER_KG = 1e3 / CONST.e_charge


def orthogonalization_g(s: float) -> float:
    """Basis-orthogonalization coefficient g = (1 - sqrt(1 - s^2))/s.

    Satisfies 0 < g <= s for s in (0, 1] and g -> s/2 as s -> 0; the
    orthogonalized states are (phi_L - g phi_R)/sqrt(1 - 2sg + g^2) and
    its mirror.
    """
    if not (0.0 < s <= 1.0):
        raise ValueError(f"overlap s must be in (0, 1], got {s}")
    if s < 1e-2:
        # series avoids cancellation in 1 - sqrt(1 - s^2); truncation
        # error O(s^9) stays below the direct form's rounding here
        return s / 2.0 + s**3 / 8.0 + s**5 / 16.0 + 5.0 * s**7 / 128.0
    return (1.0 - math.sqrt(1.0 - s * s)) / s


@dataclass(frozen=True)
class DotGeometry:
    """Double-dot geometry parameters.

    e0: in-plane confinement energy in meV
    ez: vertical confinement energy in meV
    half_separation: L in nm (dot centers at +/- L)
    b_field: perpendicular magnetic field in T

    The thin-dot (single-valley) regime b < a/3 is enforced.
    """

    e0: float
    ez: float
    half_separation: float
    b_field: float = 0.0

    def __post_init__(self):
        if self.e0 <= 0 or self.ez <= 0 or self.half_separation <= 0:
            raise ValueError("e0, ez, half_separation must be > 0")
        if self.b_field < 0:
            raise ValueError("b_field must be >= 0")
        if not self.thickness < self.dot_radius / 3.0:
            raise ValueError(
                f"thin-dot regime violated: b={self.thickness:.3f} nm must be "
                f"< a/3={self.dot_radius / 3.0:.3f} nm (raise ez or lower e0)"
            )

    @classmethod
    def from_thickness(
        cls, e0: float, thickness_nm: float, half_separation: float, b_field: float = 0.0
    ) -> "DotGeometry":
        """Build from the dot thickness b (nm) instead of Ez."""
        ez = CONST.hbar**2 / (M_PAR * thickness_nm**2)
        return cls(e0=e0, ez=ez, half_separation=half_separation, b_field=b_field)

    @property
    def dot_radius(self) -> float:
        """In-plane width a = sqrt(hbar^2 / m_perp E0) in nm."""
        return math.sqrt(CONST.hbar**2 / (M_PERP * self.e0))

    @property
    def thickness(self) -> float:
        """Vertical width b = sqrt(hbar^2 / m_par Ez) in nm."""
        return math.sqrt(CONST.hbar**2 / (M_PAR * self.ez))

    @property
    def larmor_energy(self) -> float:
        """hbar e B / m_perp in meV."""
        omega_larmor_si = CONST.e_charge * self.b_field / (M_PERP / _MEV_NS2_PER_KG)
        return CONST.hbar * omega_larmor_si * 1e-9

    @property
    def magnetic_length(self) -> float:
        """Field-compressed in-plane length l0 <= a in nm; equals a at B = 0."""
        half_larmor = 0.5 * self.larmor_energy
        return (
            CONST.hbar
            / math.sqrt(M_PERP)
            / (half_larmor**2 + self.e0**2) ** 0.25
        )

    @property
    def overlap_s(self) -> float:
        """Fock-Darwin ground-state overlap <phi_L|phi_R> in (0, 1].

        exp(-[(L/l0)^2 + (e B L l0 / 2 hbar)^2]); monotone decreasing in
        both separation and field (field compresses l0 but the phase
        mismatch term dominates, netting extra suppression).
        """
        l0 = self.magnetic_length
        L = self.half_separation
        phase = self._eb_over_hbar * L * l0 / 2.0
        return math.exp(-((L / l0) ** 2 + phase**2))

    @property
    def orthogonalization_g(self) -> float:
        return orthogonalization_g(self.overlap_s)

    @property
    def _eb_over_hbar(self) -> float:
        """e B / hbar in 1/nm^2."""
        omega_larmor = self.larmor_energy / CONST.hbar  # rad/ns
        return omega_larmor * M_PERP / CONST.hbar

    @property
    def alpha_x(self) -> float:
        """In-plane curvature m_perp E0^2 / 2 hbar^2 in meV/nm^2."""
        return M_PERP * self.e0**2 / (2.0 * CONST.hbar**2)

    def length_scales(self) -> tuple[float, float, float]:
        """(a, b, l0) in nm."""
        return (self.dot_radius, self.thickness, self.magnetic_length)


def single_dot_energy(geometry: DotGeometry) -> float:
    """Ground-state energy of one isolated well, E0 + Ez/2, in meV.

    Two in-plane modes at hbar w = E0 contribute E0/2 each and the
    vertical mode Ez/2; independent of L and valid while the Larmor
    energy is negligible against E0.
    """
    return geometry.e0 + geometry.ez / 2.0


def _b0_overlap(geometry: DotGeometry) -> float:
    """Zero-field overlap exp(-(L/a)^2) used inside the tunnel coupling."""
    return math.exp(-((geometry.half_separation / geometry.dot_radius) ** 2))


def delta_v_elements(geometry: DotGeometry, epsilon: float) -> tuple[float, float, float]:
    """Matrix elements (dV_LL, dV_RR, dV_LR) of the double-well correction.

    dV(x) = sgn(x - x0) (eps/2 - 2 alpha_x L x) with x0 = eps/(4 alpha_x L)
    is the difference between the true min-of-parabolas potential and the
    mean of the two single-well Hamiltonians.  Closed forms follow from
    Gaussian integrals; the field is neglected here (l0 -> a).

    Raises DetuningOutOfRange when |x0| >= L, where the local minima at
    x = +/- L stop being well-defined; clamping instead would silently
    corrupt fits at large |eps|.
    """
    a = geometry.dot_radius
    L = geometry.half_separation
    ax = geometry.alpha_x
    x0 = epsilon / (4.0 * ax * L)
    if abs(x0) >= L:
        raise DetuningOutOfRange(
            f"|eps|={abs(epsilon):g} meV puts x0={x0:g} nm outside (-L, L), "
            f"L={L:g} nm: double-well minima undefined"
        )
    s = _b0_overlap(geometry)
    gauss = 2.0 * ax * L * a / math.sqrt(math.pi)
    dv_ll = -(epsilon / 2.0 + 2.0 * ax * L**2) * erf((L + x0) / a) - gauss * math.exp(
        -(((L + x0) / a) ** 2)
    )
    dv_rr = (epsilon / 2.0 - 2.0 * ax * L**2) * erf((L - x0) / a) - gauss * math.exp(
        -(((L - x0) / a) ** 2)
    )
    dv_lr = -s * ((epsilon / 2.0) * erf(x0 / a) + gauss * math.exp(-((x0 / a) ** 2)))
    return dv_ll, dv_rr, dv_lr


def tunnel_coupling(geometry: DotGeometry, epsilon: float = 0.0) -> float:
    """Tunnel coupling Delta = -2 <L|H|R> of the orthogonalized basis, meV.

    Combines the single-well energies E_L, E_R = E_L + eps with the dV
    matrix elements; the (E_L + E_R) term multiplies s(1+g^2) - 2g, which
    vanishes identically, so only the dV pieces contribute.  Positive for
    any geometry in the perturbative (well-separated dots) regime.
    """
    s = _b0_overlap(geometry)
    g = orthogonalization_g(s)
    dv_ll, dv_rr, dv_lr = delta_v_elements(geometry, epsilon)
    e_left = single_dot_energy(geometry)
    e_right = e_left + epsilon
    denom = 1.0 - 2.0 * s * g + g * g
    ax_l2 = geometry.alpha_x * geometry.half_separation**2
    delta = (-2.0 / denom) * (
        0.5 * (e_left + e_right) * (s * (1.0 + g * g) - 2.0 * g)
        + (1.0 + g * g) * dv_lr
        - g * (4.0 * ax_l2 + dv_ll + dv_rr)
    )
    if delta <= 0:
        raise ValueError(
            f"non-positive tunnel coupling ({delta:g} meV): geometry outside "
            "the two-state perturbative regime"
        )
    return delta
