"""The inverse problem: from differential traces to a relaxation-rate curve.

Pipeline: per-frequency differential traces are smoothed by projecting
onto even Fourier modes about eps = 0 and integrating (which pins
n(0) = 1/2 and keeps n in [0, 1]); the smoothed occupancy map is fitted
by a quasi-Newton search over log-rate values at spline knots, with the
forward model from the dynamics engine; per-knot confidence bounds come
from perturbing each knot to the misfit contour M_min + delta_M
(M_min + 4 delta_M for the wider band), where delta_M is the spread of
the misfit under synthetic noise realizations.

Rates far outside the probed frequency window leave the occupancy map
unchanged, so the corresponding contour crossings do not exist; those
bounds are reported open-ended rather than fabricated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .constants import HZ_TO_RATE_NS, RATE_NS_TO_HZ
from .dotgeom import DotGeometry
from .dynamics import (
    GridMap,
    OccupancyMap,
    PulseSchedule,
    _occupancy_from_x,
    _waveform_invariants,
    differential_map,
    discretize_waveform,
    occupancy_map,
    row_schedule,
)
from .qubit import QubitParams, equilibrium_left_occupancy
from .ratecurve import RateCurve
from .spectral import (
    MicroSpectral,
    Material,
    PhenomSpectral,
    SILICON,
    rate_curve_from_model,
    relaxation_rate,
)
from .dotgeom import tunnel_coupling

__all__ = [
    "GridMismatch",
    "NormalizationInfeasible",
    "NotConverged",
    "ForwardModelFailure",
    "MeasuredSet",
    "SmoothedTrace",
    "smooth_to_occupancy",
    "smooth_set",
    "smoothing_operator",
    "misfit",
    "FitResult",
    "fit_rate_curve",
    "confidence_regions",
    "estimate_delta_misfit",
    "PhenomFit",
    "fit_phenom_params",
    "MicroFit",
    "fit_micro_params",
    "fit_electron_temperature",
    "SynthDataset",
    "synth_data",
    "run_fit_pipeline",
]


class GridMismatch(ValueError):
    """Two maps or traces do not share the same (offset, freq) grid."""


class NormalizationInfeasible(RuntimeError):
    """No admissible mode count keeps the smoothed occupancy inside [0, 1]."""


class ForwardModelFailure(RuntimeError):
    """Forward occupancy evaluation failed during fitting."""


class NotConverged(RuntimeError):
    """Optimization stopped without meeting its convergence criteria.

    The best iterate is still available on the .result attribute.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class MeasuredSet:
    """Per-frequency differential traces dS/d eps_bar on a common grid.

    traces has shape (n_freqs, n_offsets); sigma is the per-point standard
    error (same shape, broadcastable, or None).  lever_arm records the
    voltage-to-energy conversion already applied at ingestion (eV/V), as
    metadata only.
    """

    offsets: np.ndarray
    freqs: np.ndarray
    traces: np.ndarray
    sigma: np.ndarray | None = None
    lever_arm: float | None = None

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=float)
        freqs = np.asarray(self.freqs, dtype=float)
        traces = np.asarray(self.traces, dtype=float)
        if not np.all(np.diff(offsets) > 0):
            raise ValueError("offsets must be strictly increasing")
        if not np.all(np.diff(freqs) > 0):
            raise ValueError("freqs must be strictly increasing")
        if traces.shape != (freqs.size, offsets.size):
            raise ValueError("traces must have shape (n_freqs, n_offsets)")
        sigma = self.sigma
        if sigma is not None:
            sigma = np.broadcast_to(np.asarray(sigma, dtype=float), traces.shape).copy()
            if np.any(sigma <= 0):
                raise ValueError("sigma must be > 0")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class SmoothedTrace:
    """One frequency row after even-mode smoothing and normalization."""

    offsets: np.ndarray
    occupancy: np.ndarray
    coefficients: np.ndarray
    half_span: float
    n_modes: int
    scale: float
    residual_rms: float
    sigma_estimate: float


def _even_mode_matrix(offsets, half_span, n_modes):
    k = np.arange(n_modes)
    return np.cos(np.pi * np.outer(offsets, k) / half_span)


def _integrated_mode_matrix(offsets, half_span, n_modes):
    """Columns are the antiderivatives of the even modes, zero at eps = 0."""
    out = np.empty((np.size(offsets), n_modes))
    out[:, 0] = offsets
    k = np.arange(1, n_modes)
    if k.size:
        out[:, 1:] = np.sin(np.pi * np.outer(offsets, k) / half_span) * (
            half_span / (np.pi * k)
        )
    return out


def _integrated_modes(offsets, coeff, half_span):
    """Antiderivative of the even-mode expansion, zero at eps = 0."""
    return _integrated_mode_matrix(offsets, half_span, coeff.size) @ coeff


def smooth_to_occupancy(
    offsets,
    trace,
    n_modes: int = 24,
    sigma=None,
    normalize_rise: bool = True,
    enforce_bounds: bool = True,
    bound_tol: float = 2e-3,
) -> SmoothedTrace:
    """Smooth one differential trace into an occupancy curve n(eps).

    Least-squares fit of the differential onto even Fourier modes
    cos(k pi eps / W) about eps = 0, integrated analytically; the
    integration constant pins n(0) = 1/2, and an affine rescale maps the
    total rise across the span to 1 (skipped for a flat trace, which
    integrates to n = 1/2 everywhere).

    A truncated Fourier representation of a saturating curve always
    rings slightly past the saturation levels, so excursions outside
    [0, 1] up to bound_tol are tolerated (and trimmed from the returned
    samples).  Larger excursions mean the mode count overfits the trace:
    it is reduced and the fit retried, and NormalizationInfeasible is
    raised when even 2 modes cannot satisfy the bounds.
    """
    offsets = np.asarray(offsets, dtype=float)
    trace = np.asarray(trace, dtype=float)
    if offsets[0] > 0.0 or offsets[-1] < 0.0:
        raise ValueError("trace must span eps = 0")
    if n_modes < 2:
        raise ValueError("n_modes must be >= 2")
    n_modes = min(n_modes, offsets.size)
    half_span = float(np.max(np.abs(offsets)))
    weights = None
    if sigma is not None:
        weights = 1.0 / np.broadcast_to(np.asarray(sigma, dtype=float), trace.shape)

    last_violation = None
    for k_try in range(n_modes, 1, -1):
        basis = _even_mode_matrix(offsets, half_span, k_try)
        if weights is None:
            coeff, *_ = np.linalg.lstsq(basis, trace, rcond=None)
        else:
            coeff, *_ = np.linalg.lstsq(
                basis * weights[:, None], trace * weights, rcond=None
            )
        raw = 0.5 + _integrated_modes(offsets, coeff, half_span)
        rise = raw[-1] - raw[0]
        scale = 1.0
        if normalize_rise and abs(rise) > 1e-6:
            scale = rise
        curve = 0.5 + (raw - 0.5) / scale

        dense = np.linspace(offsets[0], offsets[-1], 8 * offsets.size)
        dense_curve = 0.5 + _integrated_modes(dense, coeff, half_span) / scale
        lo, hi = dense_curve.min(), dense_curve.max()
        if enforce_bounds and (lo < -bound_tol or hi > 1.0 + bound_tol):
            last_violation = (k_try, lo, hi)
            continue

        residual = trace - basis @ coeff
        rms = float(np.sqrt(np.mean(residual**2)))
        dof = max(offsets.size - k_try, 1)
        sigma_est = float(np.sqrt(np.sum(residual**2) / dof))
        return SmoothedTrace(
            offsets=offsets,
            occupancy=np.clip(curve, 0.0, 1.0),
            coefficients=coeff,
            half_span=half_span,
            n_modes=k_try,
            scale=scale,
            residual_rms=rms,
            sigma_estimate=sigma_est,
        )

    raise NormalizationInfeasible(
        f"no mode count <= {n_modes} keeps n in [0, 1] "
        f"(last attempt {last_violation})"
    )


def smoothing_operator(smoothed: SmoothedTrace, sigma_row=None):
    """The differentiate-project-integrate map one data row went through.

    Returns a callable applying the identical smoothing to forward-model
    occupancy rows (shape (..., n_offsets)), so that fitted curves are
    compared to the data in the same representation.  Without this, the
    truncation error of the mode basis (largest where the occupancy has
    sharp structure) acts as a systematic misfit the optimizer chases.
    """
    offsets = smoothed.offsets
    basis = _even_mode_matrix(offsets, smoothed.half_span, smoothed.n_modes)
    if sigma_row is None:
        proj = np.linalg.pinv(basis)
    else:
        w = 1.0 / np.asarray(sigma_row, dtype=float)
        proj = np.linalg.pinv(basis * w[:, None]) * w[None, :]
    integ = _integrated_mode_matrix(offsets, smoothed.half_span, smoothed.n_modes)
    normalize = smoothed.scale != 1.0

    def apply(rows):
        diff = np.gradient(rows, offsets, axis=-1)
        raw = 0.5 + (diff @ proj.T) @ integ.T
        if normalize:
            rise = raw[..., -1] - raw[..., 0]
            rise = np.where(np.abs(rise) > 1e-6, rise, 1.0)
            raw = 0.5 + (raw - 0.5) / rise[..., None]
        return raw

    return apply


def smooth_set(
    measured: MeasuredSet, n_modes: int = 24, normalize_rise: bool = True
) -> tuple[OccupancyMap, list[SmoothedTrace]]:
    """Smooth every frequency row of a measured set into an occupancy map."""
    rows = []
    for i in range(measured.freqs.size):
        sig = None if measured.sigma is None else measured.sigma[i]
        rows.append(
            smooth_to_occupancy(
                measured.offsets,
                measured.traces[i],
                n_modes=n_modes,
                sigma=sig,
                normalize_rise=normalize_rise,
            )
        )
    values = np.vstack([r.occupancy for r in rows])
    return OccupancyMap(measured.offsets, measured.freqs, values), rows


def misfit(n1: GridMap, n2: GridMap) -> float:
    """Summed squared deviation between two maps on the same grid."""
    if not n1.same_grid(n2):
        raise GridMismatch("maps must share identical offset and frequency grids")
    return float(np.sum((n1.values - n2.values) ** 2))


@dataclass(frozen=True)
class FitResult:
    """Best-fit rate curve with optional per-knot confidence bounds.

    abs_knots and log_values parameterize the even curve on |eps| >= 0;
    curve is the mirrored RateCurve.  Confidence bounds are rates in 1/ns
    at the knots; an open-ended direction is encoded as 0 (lower) or +inf
    (upper).  delta_misfit is the contour offset used for the 68% band.
    """

    curve: RateCurve
    abs_knots: np.ndarray
    log_values: np.ndarray
    misfit_min: float
    iterations: int
    converged: bool
    message: str
    grad_norm: float
    misfit_history: tuple = ()
    delta_misfit: float | None = None
    confidence_68: tuple | None = None
    confidence_95: tuple | None = None

    def band(self, level: int):
        bounds = self.confidence_68 if level == 68 else self.confidence_95
        if bounds is None:
            raise ValueError("confidence bounds not computed; run confidence_regions")
        return bounds


def default_knots(data: OccupancyMap, schedule_template: PulseSchedule, n_knots: int = 12):
    """Uniform |eps| knots covering every detuning the waveform can reach."""
    reach = (
        np.max(np.abs(data.offsets))
        + 0.5 * schedule_template.toggle_amplitude
        + schedule_template.dither_amplitude
    )
    return np.linspace(0.0, reach, n_knots)


class _ForwardModel:
    """Batched misfit evaluation for even rate curves on fixed knots.

    Pre-discretizes the waveform and the rate-independent recursion
    invariants for every frequency row once; each candidate log-knot
    vector then costs one rate-curve evaluation per row plus the
    population recursion.
    """

    def __init__(
        self,
        data,
        qubit,
        schedule_template,
        abs_knots,
        steps_target=None,
        row_transforms=None,
    ):
        self.data = data
        self.qubit = qubit
        self.abs_knots = np.asarray(abs_knots, dtype=float)
        self.transforms = row_transforms
        self.rows = []
        for i in range(data.freqs.size):
            sched = row_schedule(schedule_template, data.freqs[i], steps_target)
            eps_base, dt = discretize_waveform(sched)
            eps = data.offsets[:, None] + eps_base[None, :]
            inv = _waveform_invariants(eps, qubit)
            self.rows.append((eps, dt, inv))
        self.n_calls = 0

    def curve(self, log_values) -> RateCurve:
        return RateCurve.even_from_half(self.abs_knots, log_values)

    def occupancies(self, log_values) -> np.ndarray:
        """Forward map (n_freqs, n_offsets) for one candidate."""
        curve = self.curve(log_values)
        out = np.empty_like(self.data.values)
        for i, (eps, dt, inv) in enumerate(self.rows):
            nbar = _occupancy_from_x(dt * curve(eps), *inv)
            if self.transforms is not None:
                nbar = self.transforms[i](nbar)
            out[i] = nbar
        return out

    def misfit_batch(self, log_matrix) -> np.ndarray:
        """Misfits for a (Q, n_knots) batch of candidates."""
        log_matrix = np.atleast_2d(np.asarray(log_matrix, dtype=float))
        q = log_matrix.shape[0]
        curves = [self.curve(v) for v in log_matrix]
        total = np.zeros(q)
        try:
            for i, (eps, dt, inv) in enumerate(self.rows):
                x = np.stack([dt * c(eps) for c in curves])  # (Q, n_off, N)
                nbar = _occupancy_from_x(x, *inv)
                if self.transforms is not None:
                    nbar = self.transforms[i](nbar)
                total += np.sum((nbar - self.data.values[i]) ** 2, axis=-1)
        except Exception as exc:
            raise ForwardModelFailure(
                f"forward model failed at frequency row {i} "
                f"(f={self.data.freqs[i]:g} Hz): {exc}"
            ) from exc
        self.n_calls += q
        return total


def fit_rate_curve(
    data: OccupancyMap,
    qubit: QubitParams,
    schedule_template: PulseSchedule,
    knots=None,
    n_knots: int = 12,
    seed_rate_hz: float = 1e4,
    max_iter: int = 150,
    fd_rel_step: float = 1e-4,
    steps_target: int | None = None,
    row_transforms=None,
    log_rate_bounds: tuple[float, float] = (-23.0, 2.3),
    ftol: float = 1e-10,
    raise_on_failure: bool = True,
) -> FitResult:
    """Fit an even relaxation-rate curve to an occupancy map.

    Quasi-Newton (L-BFGS-B) minimization of the summed squared occupancy
    misfit over log-rate values at the knots, seeded from a constant
    rate (10 kHz by default) to avoid bias toward any spectral shape.
    Gradients are central finite differences on the log-knots, evaluated
    as one batched forward sweep per iteration.  Deterministic given the
    data, seed rate and tolerances.

    row_transforms, when given, maps each forward-model row into the
    representation of the data rows (see smoothing_operator) before the
    misfit is taken.
    """
    if data.freqs.size < 3:
        raise ValueError("need at least 3 frequency rows to constrain the fit")
    abs_knots = (
        np.asarray(knots, dtype=float)
        if knots is not None
        else default_knots(data, schedule_template, n_knots)
    )
    fwd = _ForwardModel(
        data, qubit, schedule_template, abs_knots, steps_target, row_transforms
    )

    x0 = np.full(abs_knots.size, math.log(seed_rate_hz * HZ_TO_RATE_NS))
    cache: dict[bytes, float] = {}

    def fun(x):
        key = x.tobytes()
        if key not in cache:
            cache[key] = float(fwd.misfit_batch(x[None, :])[0])
        return cache[key]

    def jac(x):
        # central differences, batched into a single forward sweep
        steps = fd_rel_step * np.maximum(np.abs(x), 1.0)
        trials = np.vstack([x[None, :] + np.diag(steps), x[None, :] - np.diag(steps)])
        f_trials = fwd.misfit_batch(trials)
        n = x.size
        return (f_trials[:n] - f_trials[n:]) / (2.0 * steps)

    history = []

    def record(xk):
        history.append(fun(np.asarray(xk)))

    res = minimize(
        fun,
        x0,
        jac=jac,
        method="L-BFGS-B",
        callback=record,
        # generous physical bounds (~0.1 Hz to 10 GHz) stop the search from
        # wandering along directions the data leaves flat
        bounds=[log_rate_bounds] * abs_knots.size,
        options={"maxiter": max_iter, "ftol": ftol, "gtol": 1e-7},
    )
    grad_norm = float(np.max(np.abs(res.jac)))
    # a line-search abort with a flat finite-difference gradient is a
    # converged fit for practical purposes, not a failure
    converged = bool(res.success) or ("ABNORMAL" in str(res.message) and grad_norm < 1e-3)
    result = FitResult(
        curve=fwd.curve(res.x),
        abs_knots=abs_knots,
        log_values=res.x.copy(),
        misfit_min=float(res.fun),
        iterations=int(res.nit),
        converged=converged,
        message=str(res.message),
        grad_norm=grad_norm,
        misfit_history=tuple(history),
    )
    if raise_on_failure and not converged:
        raise NotConverged(
            f"rate-curve fit did not converge after {res.nit} iterations: "
            f"{res.message} (|grad|_inf = {result.grad_norm:.3e})",
            result=result,
        )
    return result


def estimate_delta_misfit(
    smoothed: list[SmoothedTrace],
    sigma_diff=None,
    n_realizations: int = 256,
    seed: int = 0,
    n_modes: int | None = None,
) -> float:
    """Spread of the misfit under synthetic differential-noise realizations.

    Noise with the per-row sigma (estimated from smoothing residuals when
    not given) is added to each smoothed differential; the noise-added
    trace is re-smoothed into an occupancy realization and its misfit
    against the noise-free occupancy recorded.  Returns the standard
    deviation of that misfit sample.  Realizations draw from independent
    child seeds of the master seed.
    """
    offsets = smoothed[0].offsets
    base = np.vstack([r.occupancy for r in smoothed])
    sigmas = []
    for i, row in enumerate(smoothed):
        if sigma_diff is None:
            sigmas.append(row.sigma_estimate)
        else:
            sigmas.append(float(np.mean(np.atleast_1d(sigma_diff))))
    if all(s == 0.0 for s in sigmas):
        return 0.0

    children = np.random.SeedSequence(seed).spawn(n_realizations)
    samples = np.empty(n_realizations)
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        total = 0.0
        for i, row in enumerate(smoothed):
            basis = _even_mode_matrix(offsets, row.half_span, row.n_modes)
            clean_diff = basis @ row.coefficients
            noisy = clean_diff + rng.normal(0.0, sigmas[i], offsets.size)
            realization = smooth_to_occupancy(
                offsets,
                noisy,
                n_modes=row.n_modes if n_modes is None else n_modes,
                normalize_rise=row.scale != 1.0,
                enforce_bounds=False,
            )
            total += float(np.sum((realization.occupancy - base[i]) ** 2))
        samples[r] = total
    return float(np.std(samples))


def confidence_regions(
    fit: FitResult,
    data: OccupancyMap,
    qubit: QubitParams,
    schedule_template: PulseSchedule,
    noise_sigma: float | None = None,
    delta_misfit: float | None = None,
    n_realizations: int = 256,
    seed: int = 0,
    log_range: float = 12.0,
    log_tol: float = 5e-3,
    steps_target: int | None = None,
    row_transforms=None,
) -> FitResult:
    """Per-knot confidence bounds at the M_min + dM and M_min + 4 dM contours.

    Each knot's log-rate is bisected upward and downward (others held at
    the best fit) to the contour crossing.  When the misfit stays below
    the contour across the whole allowed range the bound is open-ended:
    0 for a lower bound, +inf for an upper one.  This is expected at
    knots whose rates the probed frequency window cannot resolve.

    delta_misfit may be given directly (e.g. from estimate_delta_misfit);
    otherwise it is derived from iid occupancy noise of size noise_sigma:
    misfit between the data and data + noise over synthetic realizations.
    """
    if delta_misfit is None:
        if noise_sigma is None:
            raise ValueError("provide either delta_misfit or noise_sigma")
        if noise_sigma == 0.0:
            delta_misfit = 0.0
        else:
            children = np.random.SeedSequence(seed).spawn(n_realizations)
            draws = [
                float(
                    np.sum(
                        np.random.default_rng(c).normal(
                            0.0, noise_sigma, data.values.shape
                        )
                        ** 2
                    )
                )
                for c in children
            ]
            delta_misfit = float(np.std(draws))

    n = fit.abs_knots.size
    if delta_misfit == 0.0:
        rates = np.exp(fit.log_values)
        return replace(
            fit,
            delta_misfit=0.0,
            confidence_68=(rates.copy(), rates.copy()),
            confidence_95=(rates.copy(), rates.copy()),
        )

    fwd = _ForwardModel(
        data, qubit, schedule_template, fit.abs_knots, steps_target, row_transforms
    )
    base = fit.log_values
    targets = {
        68: fit.misfit_min + delta_misfit,
        95: fit.misfit_min + 4.0 * delta_misfit,
    }

    # one task per (knot, direction, level); directions +1 up, -1 down
    tasks = [
        (i, d, lvl) for i in range(n) for d in (+1.0, -1.0) for lvl in (68, 95)
    ]

    def batch_eval(t_values, active):
        mat = np.tile(base, (len(active), 1))
        for row, (task_idx, t) in enumerate(zip(active, t_values)):
            i, d, _ = tasks[task_idx]
            mat[row, i] = base[i] + d * t
        return fwd.misfit_batch(mat)

    # unbounded detection at the edge of the allowed range
    edge = batch_eval([log_range] * len(tasks), list(range(len(tasks))))
    t_hi = np.full(len(tasks), log_range)
    t_lo = np.zeros(len(tasks))
    unbounded = np.array(
        [edge[j] < targets[tasks[j][2]] for j in range(len(tasks))]
    )

    active = [j for j in range(len(tasks)) if not unbounded[j]]
    n_steps = max(1, math.ceil(math.log2(log_range / log_tol)))
    for _ in range(n_steps):
        if not active:
            break
        mids = [(t_lo[j] + t_hi[j]) / 2.0 for j in active]
        vals = batch_eval(mids, active)
        for j, mid, val in zip(active, mids, vals):
            if val < targets[tasks[j][2]]:
                t_lo[j] = mid
            else:
                t_hi[j] = mid

    bounds = {68: (np.empty(n), np.empty(n)), 95: (np.empty(n), np.empty(n))}
    for j, (i, d, lvl) in enumerate(tasks):
        t = 0.5 * (t_lo[j] + t_hi[j])
        lo, hi = bounds[lvl]
        if d > 0:
            hi[i] = np.inf if unbounded[j] else math.exp(base[i] + t)
        else:
            lo[i] = 0.0 if unbounded[j] else math.exp(base[i] - t)
    return replace(
        fit,
        delta_misfit=float(delta_misfit),
        confidence_68=bounds[68],
        confidence_95=bounds[95],
    )


@dataclass(frozen=True)
class PhenomFit:
    """Best-fit phenomenological spectral parameters."""

    s_exponent: float
    coupling_alpha: float
    cutoff_energy: float
    residual_rms: float
    converged: bool

    @property
    def model(self) -> PhenomSpectral:
        return PhenomSpectral(self.s_exponent, self.coupling_alpha, self.cutoff_energy)


def fit_phenom_params(
    target: RateCurve,
    qubit: QubitParams,
    init=(3.0, 0.05, 0.4),
    eps_grid=None,
    raise_on_failure: bool = True,
) -> PhenomFit:
    """Least-squares (s, alpha, hbar w_c) fit to a rate curve, in log space.

    alpha and the cutoff are optimized on a log scale to stay positive;
    s is bounded to [1, 12].  Scaling alpha rescales the rate without
    moving s or the cutoff, so the fit is deterministic given init.
    """
    eps = (
        np.asarray(eps_grid, dtype=float)
        if eps_grid is not None
        else target.knots[target.knots >= 0]
    )
    log_target = np.log(target(eps))

    def residual(x):
        s, log_alpha, log_wc = x
        model = PhenomSpectral(s, math.exp(log_alpha), math.exp(log_wc))
        return np.log(relaxation_rate(eps, qubit, model)) - log_target

    res = least_squares(
        residual,
        x0=[init[0], math.log(init[1]), math.log(init[2])],
        bounds=([1.0, -30.0, -8.0], [12.0, 10.0, 5.0]),
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
    )
    fit = PhenomFit(
        s_exponent=float(res.x[0]),
        coupling_alpha=float(math.exp(res.x[1])),
        cutoff_energy=float(math.exp(res.x[2])),
        residual_rms=float(np.sqrt(np.mean(res.fun**2))),
        converged=bool(res.success),
    )
    if raise_on_failure and not res.success:
        raise NotConverged(f"phenomenological fit failed: {res.message}", result=fit)
    return fit


@dataclass(frozen=True)
class MicroFit:
    """Best-fit microscopic geometry parameters."""

    e0: float
    half_separation: float
    implied_delta: float
    misfit_min: float
    converged: bool
    iterations: int


def fit_micro_params(
    data: OccupancyMap,
    temperature: float,
    schedule_template: PulseSchedule,
    material: Material = SILICON,
    ez: float = 8.639415228039741,
    init=(1.5, 40.0),
    bounds=((0.8, 4.0), (25.0, 70.0)),
    max_iter: int = 120,
    steps_target: int | None = None,
    rate_knots: int = 121,
    raise_on_failure: bool = True,
) -> MicroFit:
    """Two-parameter (E0, L) misfit minimization with derived tunnel coupling.

    At each iterate the tunnel coupling is recomputed from the geometry,
    the microscopic spectral density is sampled onto a rate curve, and
    the occupancy map is forward-modeled.  Nelder-Mead keeps the search
    derivative-free; the misfit surface is smooth but the per-evaluation
    quadrature makes finite differences wasteful.
    """
    eps_reach = (
        np.max(np.abs(data.offsets))
        + 0.5 * schedule_template.toggle_amplitude
        + schedule_template.dither_amplitude
    )
    n_evals = 0

    def objective(x):
        nonlocal n_evals
        e0, half_sep = x
        geom = DotGeometry(e0=e0, ez=ez, half_separation=half_sep)
        delta = tunnel_coupling(geom, 0.0)
        qubit = QubitParams(delta=delta, temperature=temperature)
        curve = rate_curve_from_model(
            qubit, MicroSpectral(geometry=geom, material=material),
            eps_reach, n_knots=rate_knots,
        )
        model_map = occupancy_map(
            data.offsets, data.freqs, curve, qubit, schedule_template,
            steps_target=steps_target,
        )
        n_evals += 1
        return misfit(model_map, data)

    res = minimize(
        objective,
        x0=np.asarray(init, dtype=float),
        method="Nelder-Mead",
        bounds=bounds,
        options={"maxiter": max_iter, "xatol": 1e-3, "fatol": 1e-10},
    )
    geom = DotGeometry(e0=float(res.x[0]), ez=ez, half_separation=float(res.x[1]))
    fit = MicroFit(
        e0=float(res.x[0]),
        half_separation=float(res.x[1]),
        implied_delta=tunnel_coupling(geom, 0.0),
        misfit_min=float(res.fun),
        converged=bool(res.success),
        iterations=int(res.nit),
    )
    if raise_on_failure and not res.success:
        raise NotConverged(f"microscopic fit failed: {res.message}", result=fit)
    return fit


def fit_electron_temperature(offsets, occupancies, delta: float, t_init: float = 0.2):
    """Electron temperature from an equilibrium occupancy trace.

    One-parameter least squares of the thermal left-occupancy formula
    over log T; insensitive to the n <-> 1-n, eps <-> -eps convention.
    """
    offsets = np.asarray(offsets, dtype=float)
    occupancies = np.asarray(occupancies, dtype=float)

    def residual(log_t):
        return (
            equilibrium_left_occupancy(offsets, delta, math.exp(log_t[0]))
            - occupancies
        )

    res = least_squares(residual, x0=[math.log(t_init)], xtol=1e-14, ftol=1e-14)
    if not res.success:
        raise NotConverged(f"temperature fit failed: {res.message}")
    return float(math.exp(res.x[0]))


@dataclass(frozen=True)
class SynthDataset:
    """Synthetic experiment: clean forward model plus noisy differentials."""

    occupancy: OccupancyMap
    differential: "GridMap"
    measured: MeasuredSet
    noise_sigma: float
    rng_seed: int


def synth_data(
    true_rate,
    qubit: QubitParams,
    offsets,
    freqs,
    schedule_template: PulseSchedule,
    noise_sigma: float = 0.0,
    rng_seed: int = 0,
    steps_target: int | None = None,
    max_workers: int | None = None,
) -> SynthDataset:
    """Forward-model, differentiate, and add iid Gaussian noise.

    The occupancy map and its differential are exact; noise of the stated
    sigma lands on the differential traces (the quantity an experiment
    measures).  The same seed reproduces the dataset bit for bit.
    """
    offsets = np.asarray(offsets, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    clean = occupancy_map(
        offsets, freqs, true_rate, qubit, schedule_template,
        max_workers=max_workers, steps_target=steps_target,
    )
    diff = differential_map(clean)
    traces = diff.values.copy()
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if noise_sigma > 0:
        rng = np.random.default_rng(rng_seed)
        traces = traces + rng.normal(0.0, noise_sigma, traces.shape)
    measured = MeasuredSet(
        offsets=offsets,
        freqs=freqs,
        traces=traces,
        sigma=None if noise_sigma == 0 else np.full_like(traces, noise_sigma),
    )
    return SynthDataset(
        occupancy=clean,
        differential=diff,
        measured=measured,
        noise_sigma=noise_sigma,
        rng_seed=rng_seed,
    )


@dataclass(frozen=True)
class PipelineResult:
    """Everything the smooth -> fit -> confidence pipeline produces."""

    fit: FitResult
    data: OccupancyMap
    smoothed: list
    delta_misfit: float


def run_fit_pipeline(
    measured: MeasuredSet,
    qubit: QubitParams,
    schedule_template: PulseSchedule,
    n_modes: int = 24,
    knots=None,
    n_knots: int = 12,
    seed_rate_hz: float = 1e4,
    max_iter: int = 150,
    with_confidence: bool = True,
    n_realizations: int = 200,
    seed: int = 0,
    steps_target: int | None = None,
    match_forward_smoothing: bool = True,
    raise_on_failure: bool = True,
) -> PipelineResult:
    """Full inversion: smoothing, rate-curve fit, confidence bands.

    match_forward_smoothing passes every forward-model row through the
    same mode projection the data received, so the misfit compares like
    with like; disable to fit raw forward occupancies against the
    smoothed data.
    """
    data, smoothed = smooth_set(measured, n_modes=n_modes)
    transforms = None
    if match_forward_smoothing:
        transforms = [
            smoothing_operator(
                row, None if measured.sigma is None else measured.sigma[i]
            )
            for i, row in enumerate(smoothed)
        ]
    fit = fit_rate_curve(
        data,
        qubit,
        schedule_template,
        knots=knots,
        n_knots=n_knots,
        seed_rate_hz=seed_rate_hz,
        max_iter=max_iter,
        steps_target=steps_target,
        row_transforms=transforms,
        raise_on_failure=raise_on_failure,
    )
    sigma_diff = None if measured.sigma is None else float(np.mean(measured.sigma))
    dm = 0.0
    if with_confidence:
        dm = estimate_delta_misfit(
            smoothed,
            sigma_diff=sigma_diff,
            n_realizations=n_realizations,
            seed=seed,
        )
        fit = confidence_regions(
            fit,
            data,
            qubit,
            schedule_template,
            delta_misfit=dm,
            steps_target=steps_target,
            row_transforms=transforms,
        )
    return PipelineResult(fit=fit, data=data, smoothed=smoothed, delta_misfit=dm)
