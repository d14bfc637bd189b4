"""Physical constants and unit conversions.

Internal unit convention: energies in meV, times in ns, lengths in nm,
temperatures in K, rates in 1/ns.  With these units all core quantities
stay within a few decades of unity; conversion to Hz/kHz, eV or SI
densities happens only at I/O boundaries.
"""

from dataclasses import dataclass

__all__ = [
    "PhysConstants",
    "CONST",
    "M_ELECTRON",
    "M_PERP",
    "M_PAR",
    "KG_PER_M3_TO_INTERNAL",
    "RATE_NS_TO_HZ",
    "HZ_TO_RATE_NS",
    "EV_PER_MEV",
    "MEV_PER_EV",
]


@dataclass(frozen=True)
class PhysConstants:
    """CODATA constants under the meV/ns/K convention. Immutable."""

    hbar: float = 6.582119569e-4       # reduced Planck constant, meV ns
    kB: float = 8.617333262e-2         # Boltzmann constant, meV / K
    e_charge: float = 1.602176634e-19  # elementary charge, C


CONST = PhysConstants()

# 1 J = 1/e_charge eV; kilograms expressed as meV ns^2 / nm^2
# (1 kg = 1 J s^2/m^2 and the ns^2/nm^2 factors cancel).
_MEV_PER_JOULE = 1e3 / CONST.e_charge

# electron mass: 9.1093837015e-31 kg -> meV ns^2 / nm^2
M_ELECTRON = 9.1093837015e-31 * _MEV_PER_JOULE

# silicon conduction-band effective masses (single-valley convention):
# m_perp transverse to the valley axis, m_par along it
M_PERP = 0.19 * M_ELECTRON
M_PAR = 0.98 * M_ELECTRON

# mass density: kg/m^3 -> meV ns^2 / nm^5  (1 kg/m^3 = 1 J s^2/m^5)
KG_PER_M3_TO_INTERNAL = _MEV_PER_JOULE * 1e18 / 1e45

RATE_NS_TO_HZ = 1e9
HZ_TO_RATE_NS = 1e-9

EV_PER_MEV = 1e-3
MEV_PER_EV = 1e3
