"""Two-level charge qubit fundamentals.

The qubit Hamiltonian in the localized left/right charge basis is
H = -(eps*sigma_z + delta*sigma_x)/2, with detuning eps and tunnel
coupling delta both in meV.  The ground state tends to |L> as
eps -> +inf and to |R> as eps -> -inf.

All functions are pure, accept scalars or numpy arrays, and are safe
for unrestricted concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import CONST

__all__ = [
    "QubitParams",
    "EigenGeometry",
    "energy_gap",
    "mixing_angle",
    "eigen_geometry",
    "ground_overlap",
    "equilibrium_occupancy_R",
    "equilibrium_left_occupancy",
    "equilibrium_ground_population",
    "diabaticity_threshold",
    "is_diabatic",
    "backaction_rate",
]


@dataclass(frozen=True)
class QubitParams:
    """State-independent two-level-system parameters.

    delta: tunnel coupling in meV (> 0)
    temperature: electron/bath temperature in K (> 0)
    """

    delta: float
    temperature: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    @property
    def beta(self) -> float:
        """Inverse temperature in 1/meV."""
        return 1.0 / (CONST.kB * self.temperature)


@dataclass(frozen=True)
class EigenGeometry:
    """Energy gap (meV) and mixing angle (rad) at one detuning."""

    gap: float
    theta: float


def energy_gap(epsilon, delta):
    """Two-level splitting sqrt(eps^2 + delta^2) in meV; even in epsilon."""
    return np.hypot(epsilon, delta)


def mixing_angle(epsilon, delta):
    """Mixing angle theta = arctan2(delta, eps)/2 in [0, pi/2].

    The two-argument arctangent keeps theta continuous through eps = 0
    (theta(+inf) -> 0, theta(0) = pi/4, theta(-inf) -> pi/2); ground
    state is cos(theta)|L> + sin(theta)|R>.
    """
    return 0.5 * np.arctan2(delta, epsilon)


def eigen_geometry(epsilon, delta) -> EigenGeometry:
    """Bundle gap and mixing angle for one detuning."""
    return EigenGeometry(
        gap=float(energy_gap(epsilon, delta)),
        theta=float(mixing_angle(epsilon, delta)),
    )


def ground_overlap(epsilon_from, epsilon_to, delta):
    """Squared overlap of ground states at two detunings.

    |<E0(eps_to)|E0(eps_from)>|^2 = cos^2(theta_to - theta_from); in [0, 1],
    symmetric under argument exchange, and 1 when the detunings coincide.
    """
    dtheta = mixing_angle(epsilon_to, delta) - mixing_angle(epsilon_from, delta)
    return np.cos(dtheta) ** 2


def equilibrium_occupancy_R(epsilon, delta, temperature):
    """Thermal probability of the |R> charge state.

    P_R = [1 - (eps/gap) tanh(gap / 2 kB T)]/2; equals 1/2 at eps = 0 and
    decreases monotonically with eps.
    """
    gap = energy_gap(epsilon, delta)
    return 0.5 * (1.0 - (epsilon / gap) * np.tanh(gap / (2.0 * CONST.kB * temperature)))


def equilibrium_left_occupancy(epsilon, delta, temperature):
    """Thermal probability of the |L> charge state, 1 - P_R."""
    return 1.0 - equilibrium_occupancy_R(epsilon, delta, temperature)


def equilibrium_ground_population(epsilon, delta, temperature):
    """Thermal ground-state population 1/(1 + exp(-gap/kB T)) in (1/2, 1)."""
    gap = energy_gap(epsilon, delta)
    return 1.0 / (1.0 + np.exp(-gap / (CONST.kB * temperature)))


def diabaticity_threshold(toggle_amplitude, delta):
    """Longest ramp time (ns) still traversing the anticrossing diabatically.

    tau_max = 2 hbar d_eps / (pi delta^2); a detuning ramp of duration
    tau < tau_max pumps ground into excited population rather than
    following the adiabatic eigenstate.
    """
    if np.any(np.asarray(delta) <= 0):
        raise ValueError("delta must be > 0")
    if np.any(np.asarray(toggle_amplitude) <= 0):
        raise ValueError("toggle_amplitude must be > 0")
    return 2.0 * CONST.hbar * toggle_amplitude / (math.pi * np.asarray(delta, dtype=float) ** 2)


def is_diabatic(ramp_time, toggle_amplitude, delta) -> bool:
    """Classify a ramp of the given duration (ns) against the threshold."""
    return bool(ramp_time < diabaticity_threshold(toggle_amplitude, delta))


def backaction_rate(current_1, current_2):
    """Charge-sensor back-action rate (sqrt(I1)-sqrt(I2))^2 / (2 pi e) in Hz.

    Currents in amperes; symmetric in its arguments and zero when they
    coincide.
    """
    i1 = np.asarray(current_1, dtype=float)
    i2 = np.asarray(current_2, dtype=float)
    if np.any(i1 < 0) or np.any(i2 < 0):
        raise ValueError("currents must be >= 0")
    return (np.sqrt(i1) - np.sqrt(i2)) ** 2 / (2.0 * math.pi * CONST.e_charge)
