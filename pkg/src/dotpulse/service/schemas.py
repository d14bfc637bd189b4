"""Pydantic request/response models for the HTTP service.

Field names carry units explicitly (\_mev, \_hz, \_ns, \_k, ...) because the
wire format is the package's unit boundary: inside, energies are meV,
times ns, rates 1/ns; outside, rates are Hz and user-facing knobs keep
their lab units.
"""

from __future__ import annotations

from typing import Annotated, Literal, Union

from pydantic import BaseModel, Field, model_validator

from ..constants import HZ_TO_RATE_NS
from ..dotgeom import DotGeometry
from ..dynamics import PulseSchedule
from ..qubit import QubitParams
from ..ratecurve import RateCurve
from ..spectral import (
    Material,
    MicroSpectral,
    PhenomSpectral,
    SILICON,
    TabulatedSpectral,
)

import numpy as np


class QubitConfig(BaseModel):
    delta_mev: float = Field(1e-3, gt=0, description="tunnel coupling in meV")
    temperature_k: float = Field(0.3, gt=0, description="electron temperature in K")

    def to_params(self) -> QubitParams:
        return QubitParams(delta=self.delta_mev, temperature=self.temperature_k)


class GeometryConfig(BaseModel):
    e0_mev: float = Field(1.7, gt=0, description="in-plane confinement energy")
    half_separation_nm: float = Field(45.0, gt=0)
    ez_mev: float | None = Field(None, gt=0, description="vertical confinement")
    thickness_nm: float | None = Field(
        3.0, gt=0, description="dot thickness; used when ez_mev is absent"
    )
    b_field_t: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _one_of_ez_thickness(self):
        if self.ez_mev is None and self.thickness_nm is None:
            raise ValueError("give either ez_mev or thickness_nm")
        return self

    def to_geometry(self) -> DotGeometry:
        if self.ez_mev is not None:
            return DotGeometry(
                e0=self.e0_mev,
                ez=self.ez_mev,
                half_separation=self.half_separation_nm,
                b_field=self.b_field_t,
            )
        return DotGeometry.from_thickness(
            e0=self.e0_mev,
            thickness_nm=self.thickness_nm,
            half_separation=self.half_separation_nm,
            b_field=self.b_field_t,
        )


class MaterialConfig(BaseModel):
    xi_d_ev: float = SILICON.xi_d
    xi_u_ev: float = SILICON.xi_u
    mass_density_kg_m3: float = Field(SILICON.mass_density, gt=0)
    c_long_m_s: float = Field(SILICON.c_long, gt=0)
    c_trans_m_s: float = Field(SILICON.c_trans, gt=0)

    def to_material(self) -> Material:
        return Material(
            xi_d=self.xi_d_ev,
            xi_u=self.xi_u_ev,
            mass_density=self.mass_density_kg_m3,
            c_long=self.c_long_m_s,
            c_trans=self.c_trans_m_s,
        )


class PhenomConfig(BaseModel):
    kind: Literal["phenom"] = "phenom"
    s_exponent: float = Field(5.0, ge=1)
    coupling_alpha: float = Field(0.29, gt=0)
    cutoff_mev: float = Field(0.25, gt=0)

    def to_model(self) -> PhenomSpectral:
        return PhenomSpectral(
            s_exponent=self.s_exponent,
            coupling_alpha=self.coupling_alpha,
            cutoff_energy=self.cutoff_mev,
        )


class MicroConfig(BaseModel):
    kind: Literal["micro"] = "micro"
    geometry: GeometryConfig = GeometryConfig()
    material: MaterialConfig = MaterialConfig()
    quadrature_tol: float = Field(1e-8, gt=0, le=1e-4)

    def to_model(self) -> MicroSpectral:
        return MicroSpectral(
            geometry=self.geometry.to_geometry(),
            material=self.material.to_material(),
            quadrature_tol=self.quadrature_tol,
        )


class TabulatedConfig(BaseModel):
    kind: Literal["tabulated"] = "tabulated"
    omega_rad_ns: list[float]
    j_mev2_ns: list[float]

    def to_model(self) -> TabulatedSpectral:
        return TabulatedSpectral(self.omega_rad_ns, self.j_mev2_ns)


SpectralConfig = Annotated[
    Union[PhenomConfig, MicroConfig, TabulatedConfig], Field(discriminator="kind")
]


class ConstantRateConfig(BaseModel):
    kind: Literal["constant"] = "constant"
    rate_hz: float = Field(1e4, gt=0)


class SpectralRateConfig(BaseModel):
    kind: Literal["from_spectral"] = "from_spectral"
    model: SpectralConfig = PhenomConfig()


class CurveRateConfig(BaseModel):
    kind: Literal["curve"] = "curve"
    knots_mev: list[float]
    rate_hz: list[float]

    def to_curve(self) -> RateCurve:
        return RateCurve(
            self.knots_mev, np.log(np.asarray(self.rate_hz) * HZ_TO_RATE_NS)
        )


RateConfig = Annotated[
    Union[ConstantRateConfig, SpectralRateConfig, CurveRateConfig],
    Field(discriminator="kind"),
]


class ScheduleConfig(BaseModel):
    toggle_amplitude_mev: float = Field(0.21, ge=0)
    dither_amplitude_mev: float = Field(0.0, ge=0)
    dither_freq_hz: float = Field(43.0, gt=0)
    ramp_time_ns: float = Field(16.0, ge=0)
    steps_target: int | None = Field(None, ge=64)

    def to_template(self) -> PulseSchedule:
        return PulseSchedule(
            offset=0.0,
            toggle_amplitude=self.toggle_amplitude_mev,
            toggle_freq=self.dither_freq_hz,  # placeholder; rows override
            dither_amplitude=self.dither_amplitude_mev,
            dither_freq=self.dither_freq_hz,
            ramp_time=self.ramp_time_ns,
        )


class LinspaceSpec(BaseModel):
    start: float
    stop: float
    num: int = Field(ge=2)

    def to_array(self):
        return np.linspace(self.start, self.stop, self.num)


class GridConfig(BaseModel):
    offsets_mev: LinspaceSpec | list[float] = LinspaceSpec(start=-0.5, stop=0.5, num=101)
    freqs_hz: list[float] = Field(
        default_factory=lambda: [43.0 * m for m in (5, 12, 30, 75, 150, 302)]
    )

    def offsets(self):
        if isinstance(self.offsets_mev, LinspaceSpec):
            return self.offsets_mev.to_array()
        return np.asarray(self.offsets_mev, dtype=float)

    def freqs(self):
        return np.asarray(self.freqs_hz, dtype=float)


class EpsGridSpec(BaseModel):
    start: float = 0.0
    stop: float = 0.5
    num: int = Field(101, ge=2)


class SpectralRequest(BaseModel):
    qubit: QubitConfig = QubitConfig()
    model: SpectralConfig = PhenomConfig()
    eps_grid: EpsGridSpec = EpsGridSpec()
    check_omega5: bool = False


class SpectralTableRow(BaseModel):
    epsilon_mev: float
    gap_mev: float
    omega_rad_ns: float
    j_mev2_ns: float
    rate_hz: float


class Omega5Check(BaseModel):
    hbar_omega0_mev: float
    ratio_long: float
    ratio_trans: float
    expected: float = 32.0
    within_1pct: bool


class SpectralResponse(BaseModel):
    table: list[SpectralTableRow]
    omega5: Omega5Check | None = None
    resolved: SpectralRequest


class GridPayload(BaseModel):
    offsets_mev: list[float]
    freqs_hz: list[float]
    values: list[list[float]]
    sigma: list[list[float]] | None = None


class SimulateRequest(BaseModel):
    qubit: QubitConfig = QubitConfig()
    rate: RateConfig = ConstantRateConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    grid: GridConfig = GridConfig()
    observable: Literal["left", "right"] = "left"
    max_workers: int | None = None


class SimulateResponse(BaseModel):
    occupancy: GridPayload
    differential: GridPayload
    resolved: SimulateRequest


class SynthRequest(SimulateRequest):
    noise_sigma: float | None = Field(
        None, ge=0, description="absolute differential noise, 1/meV"
    )
    noise_frac: float = Field(
        0.01, ge=0, description="noise as a fraction of the peak |differential|"
    )
    seed: int = 0


class SynthResponse(BaseModel):
    occupancy: GridPayload
    differential: GridPayload
    noise_sigma: float
    seed: int
    resolved: SynthRequest


class MeasuredPayload(BaseModel):
    offsets_mev: list[float]
    freqs_hz: list[float]
    traces: list[list[float]]
    sigma: list[list[float]] | None = None
    lever_arm_ev_v: float | None = None


class FitSettings(BaseModel):
    n_modes: int = Field(32, ge=2)
    n_knots: int = Field(12, ge=3)
    seed_rate_hz: float = Field(1e4, gt=0)
    max_iter: int = Field(150, ge=1)
    with_confidence: bool = True
    n_realizations: int = Field(200, ge=8)
    seed: int = 0
    steps_target: int | None = Field(None, ge=64)
    match_forward_smoothing: bool = True


class MicroFitSettings(BaseModel):
    enabled: bool = False
    e0_init_mev: float = Field(1.5, gt=0)
    half_separation_init_nm: float = Field(40.0, gt=0)
    ez_mev: float = Field(8.639415228039741, gt=0)
    max_iter: int = Field(120, ge=1)


class FitRequest(BaseModel):
    data: MeasuredPayload
    qubit: QubitConfig = QubitConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    settings: FitSettings = FitSettings()
    fit_phenom: bool = False
    micro: MicroFitSettings = MicroFitSettings()


class PhenomFitPayload(BaseModel):
    s_exponent: float
    coupling_alpha: float
    cutoff_mev: float
    residual_rms: float
    converged: bool


class MicroFitPayload(BaseModel):
    e0_mev: float
    half_separation_nm: float
    implied_delta_mev: float
    misfit_min: float
    converged: bool
    iterations: int


class FitResponse(BaseModel):
    fit: dict
    data_occupancy: GridPayload
    delta_misfit: float
    phenom_fit: PhenomFitPayload | None = None
    micro_fit: MicroFitPayload | None = None
    resolved: FitRequest


class HealthResponse(BaseModel):
    status: str
    version: str
