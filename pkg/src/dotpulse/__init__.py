"""Pulsed double-quantum-dot charge qubit toolkit.

Forward-models steady-state charge occupancy maps n(eps_bar, f) under
periodic diabatic detuning pulses, and inverts measured maps to recover
the energy-dependent relaxation rate, bath spectral density, and device
parameters.
"""

from .constants import CONST, PhysConstants
from .qubit import (
    QubitParams,
    EigenGeometry,
    energy_gap,
    mixing_angle,
    ground_overlap,
    equilibrium_occupancy_R,
    equilibrium_left_occupancy,
    equilibrium_ground_population,
    diabaticity_threshold,
    is_diabatic,
    backaction_rate,
)
from .ratecurve import RateCurve
from .dotgeom import (
    DotGeometry,
    DetuningOutOfRange,
    orthogonalization_g,
    single_dot_energy,
    delta_v_elements,
    tunnel_coupling,
)
from .spectral import (
    PhenomSpectral,
    Material,
    SILICON,
    MicroSpectral,
    TabulatedSpectral,
    SpectralModel,
    SpectralRate,
    QuadratureError,
    bessel_j0,
    j_phenom,
    j_long,
    j_trans,
    j_micro,
    j_micro_bruteforce,
    spectral_density,
    relaxation_rate,
    rate_curve_from_model,
)

__version__ = "0.1.0"
