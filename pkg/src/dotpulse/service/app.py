"""FastAPI service wrapping the simulation and inference core.

Stateless compute endpoints: every request carries its full
configuration and every response echoes the resolved form (defaults
materialized) for reproducibility.  Domain errors map to HTTP 400 with
a category field ("config", "data", "numeric") so thin clients can
translate them into exit codes.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..constants import CONST, RATE_NS_TO_HZ
from ..dynamics import (
    DifferentialMap,
    MapEvaluationError,
    OccupancyMap,
    differential_map,
    occupancy_map,
)
from ..inference import (
    ForwardModelFailure,
    GridMismatch,
    MeasuredSet,
    NormalizationInfeasible,
    NotConverged,
    fit_micro_params,
    fit_phenom_params,
    run_fit_pipeline,
    synth_data,
)
from ..qubit import energy_gap
from ..ratecurve import RateCurve
from ..spectral import (
    MicroSpectral,
    SpectralRate,
    j_long,
    j_trans,
    rate_curve_from_model,
    relaxation_rate,
    spectral_density,
)
from .schemas import (
    FitRequest,
    FitResponse,
    GridPayload,
    HealthResponse,
    MicroFitPayload,
    Omega5Check,
    PhenomFitPayload,
    SimulateRequest,
    SimulateResponse,
    SpectralRequest,
    SpectralResponse,
    SpectralTableRow,
    SynthRequest,
    SynthResponse,
)
from ..io import fit_result_to_dict

_CONFIG_ERRORS = (ValueError,)
_DATA_ERRORS = (GridMismatch, NormalizationInfeasible)
_NUMERIC_ERRORS = (NotConverged, ForwardModelFailure, MapEvaluationError)


def _grid_payload(grid) -> GridPayload:
    return GridPayload(
        offsets_mev=grid.offsets.tolist(),
        freqs_hz=grid.freqs.tolist(),
        values=grid.values.tolist(),
        sigma=None if grid.sigma is None else grid.sigma.tolist(),
    )


def _rate_callable(req: SimulateRequest):
    """Resolve a rate config into an eps -> 1/ns callable."""
    rate_cfg = req.rate
    if rate_cfg.kind == "constant":
        reach = _grid_reach(req)
        return RateCurve.constant_hz(rate_cfg.rate_hz, span=(-reach, reach))
    if rate_cfg.kind == "curve":
        return rate_cfg.to_curve()
    model = rate_cfg.model.to_model()
    qubit = req.qubit.to_params()
    if isinstance(model, MicroSpectral):
        return rate_curve_from_model(qubit, model, _grid_reach(req))
    return SpectralRate(qubit, model)


def _grid_reach(req: SimulateRequest) -> float:
    return float(
        np.max(np.abs(req.grid.offsets()))
        + 0.5 * req.schedule.toggle_amplitude_mev
        + req.schedule.dither_amplitude_mev
        + 1e-9
    )


def _as_observable(omap: OccupancyMap, observable: str) -> OccupancyMap:
    if observable == "left":
        return omap
    return OccupancyMap(omap.offsets, omap.freqs, 1.0 - omap.values, omap.sigma)


def create_app() -> FastAPI:
    app = FastAPI(
        title="dotpulse",
        version=__version__,
        description="Pulsed double-dot charge-qubit occupancy simulation "
        "and relaxation-rate inversion",
    )

    @app.exception_handler(Exception)
    async def domain_error_handler(request: Request, exc: Exception):
        if isinstance(exc, _NUMERIC_ERRORS):
            category = "numeric"
        elif isinstance(exc, _DATA_ERRORS):
            category = "data"
        elif isinstance(exc, _CONFIG_ERRORS):
            category = "config"
        else:
            raise exc
        return JSONResponse(
            status_code=400, content={"detail": str(exc), "category": category}
        )

    @app.get("/health", response_model=HealthResponse)
    async def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/spectral", response_model=SpectralResponse)
    async def spectral(req: SpectralRequest):
        qubit = req.qubit.to_params()
        model = req.model.to_model()
        eps = np.linspace(req.eps_grid.start, req.eps_grid.stop, req.eps_grid.num)
        if eps.size == 0:
            raise ValueError("empty detuning grid")
        gaps = energy_gap(eps, qubit.delta)
        omegas = gaps / CONST.hbar
        jvals = np.atleast_1d(spectral_density(omegas, model))
        rates = np.atleast_1d(relaxation_rate(eps, qubit, model)) * RATE_NS_TO_HZ
        table = [
            SpectralTableRow(
                epsilon_mev=float(e),
                gap_mev=float(g),
                omega_rad_ns=float(w),
                j_mev2_ns=float(j),
                rate_hz=float(r),
            )
            for e, g, w, j, r in zip(eps, gaps, omegas, jvals, rates)
        ]
        omega5 = None
        if req.check_omega5:
            if not isinstance(model, MicroSpectral):
                raise ValueError("check_omega5 requires the microscopic model")
            w0 = 1e-4 / CONST.hbar
            r_l = j_long(2 * w0, model) / j_long(w0, model)
            r_t = j_trans(2 * w0, model) / j_trans(w0, model)
            omega5 = Omega5Check(
                hbar_omega0_mev=1e-4,
                ratio_long=float(r_l),
                ratio_trans=float(r_t),
                within_1pct=bool(
                    abs(r_l / 32.0 - 1.0) < 0.01 and abs(r_t / 32.0 - 1.0) < 0.01
                ),
            )
        return SpectralResponse(table=table, omega5=omega5, resolved=req)

    @app.post("/simulate", response_model=SimulateResponse)
    async def simulate(req: SimulateRequest):
        qubit = req.qubit.to_params()
        rate = _rate_callable(req)
        omap = occupancy_map(
            req.grid.offsets(),
            req.grid.freqs(),
            rate,
            qubit,
            req.schedule.to_template(),
            max_workers=req.max_workers,
            steps_target=req.schedule.steps_target,
        )
        omap = _as_observable(omap, req.observable)
        dmap = differential_map(omap)
        return SimulateResponse(
            occupancy=_grid_payload(omap),
            differential=_grid_payload(dmap),
            resolved=req,
        )

    @app.post("/synth", response_model=SynthResponse)
    async def synth(req: SynthRequest):
        qubit = req.qubit.to_params()
        rate = _rate_callable(req)
        template = req.schedule.to_template()
        sigma = req.noise_sigma
        if sigma is None:
            clean = synth_data(
                rate, qubit, req.grid.offsets(), req.grid.freqs(), template,
                noise_sigma=0.0, steps_target=req.schedule.steps_target,
                max_workers=req.max_workers,
            )
            sigma = req.noise_frac * float(np.max(np.abs(clean.differential.values)))
        ds = synth_data(
            rate,
            qubit,
            req.grid.offsets(),
            req.grid.freqs(),
            template,
            noise_sigma=sigma,
            rng_seed=req.seed,
            steps_target=req.schedule.steps_target,
            max_workers=req.max_workers,
        )
        occ = _as_observable(ds.occupancy, req.observable)
        flip = -1.0 if req.observable == "right" else 1.0
        noisy = DifferentialMap(
            ds.measured.offsets,
            ds.measured.freqs,
            flip * ds.measured.traces,
            ds.measured.sigma,
        )
        return SynthResponse(
            occupancy=_grid_payload(occ),
            differential=_grid_payload(noisy),
            noise_sigma=sigma,
            seed=req.seed,
            resolved=req,
        )

    @app.post("/fit", response_model=FitResponse)
    async def fit(req: FitRequest):
        measured = MeasuredSet(
            offsets=np.asarray(req.data.offsets_mev),
            freqs=np.asarray(req.data.freqs_hz),
            traces=np.asarray(req.data.traces),
            sigma=None if req.data.sigma is None else np.asarray(req.data.sigma),
            lever_arm=req.data.lever_arm_ev_v,
        )
        qubit = req.qubit.to_params()
        template = req.schedule.to_template()
        s = req.settings
        result = run_fit_pipeline(
            measured,
            qubit,
            template,
            n_modes=s.n_modes,
            n_knots=s.n_knots,
            seed_rate_hz=s.seed_rate_hz,
            max_iter=s.max_iter,
            with_confidence=s.with_confidence,
            n_realizations=s.n_realizations,
            seed=s.seed,
            steps_target=s.steps_target,
            match_forward_smoothing=s.match_forward_smoothing,
            raise_on_failure=False,
        )
        phenom_payload = None
        if req.fit_phenom:
            pf = fit_phenom_params(result.fit.curve, qubit, raise_on_failure=False)
            phenom_payload = PhenomFitPayload(
                s_exponent=pf.s_exponent,
                coupling_alpha=pf.coupling_alpha,
                cutoff_mev=pf.cutoff_energy,
                residual_rms=pf.residual_rms,
                converged=pf.converged,
            )
        micro_payload = None
        if req.micro.enabled:
            mf = fit_micro_params(
                result.data,
                req.qubit.temperature_k,
                template,
                ez=req.micro.ez_mev,
                init=(req.micro.e0_init_mev, req.micro.half_separation_init_nm),
                max_iter=req.micro.max_iter,
                steps_target=s.steps_target,
                raise_on_failure=False,
            )
            micro_payload = MicroFitPayload(
                e0_mev=mf.e0,
                half_separation_nm=mf.half_separation,
                implied_delta_mev=mf.implied_delta,
                misfit_min=mf.misfit_min,
                converged=mf.converged,
                iterations=mf.iterations,
            )
        return FitResponse(
            fit=fit_result_to_dict(result.fit),
            data_occupancy=_grid_payload(result.data),
            delta_misfit=result.delta_misfit,
            phenom_fit=phenom_payload,
            micro_fit=micro_payload,
            resolved=req,
        )

    return app


app = create_app()
