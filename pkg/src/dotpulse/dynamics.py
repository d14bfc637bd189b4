"""Pulsed-detuning rate-equation engine.

One dither period of the periodic detuning waveform is discretized into
N piecewise-constant intervals.  Each interval applies a relaxation map
R (exponential decay toward the local thermal populations) followed by
a diabatic basis-change map B into the next interval's eigenbasis; the
period map is the time-ordered product.  Populations at dynamical
equilibrium are the fixed point of that product, and the observable is
the time-averaged left-well occupancy over one period.

Two implementations coexist deliberately: explicit 2x2 stochastic
matrices (relax_matrix/basis_change_matrix/period_map/fixed_point),
which mirror the math one-to-one, and a vectorized scalar kernel used
by occupancy_map, which tracks only the ground population through the
equivalent affine recursion p -> c + m*p.  Tests pin the two paths
against each other; keep them in sync when touching either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .constants import CONST
from .qubit import QubitParams

__all__ = [
    "DegenerateMap",
    "TooFewPoints",
    "MapEvaluationError",
    "PulseSchedule",
    "PopulationPair",
    "TransferMatrix",
    "GridMap",
    "OccupancyMap",
    "DifferentialMap",
    "discretize_waveform",
    "relax_matrix",
    "basis_change_matrix",
    "period_map",
    "fixed_point",
    "mean_left_occupancy",
    "steps_for_ratio",
    "row_schedule",
    "occupancy_map",
    "differential_map",
]

# auto-discretization targets ~4096 steps, rounded up so that every
# square-wave edge lands on a step boundary
_N_TARGET = 4096
_N_MIN = 64
_DEGENERATE_TOL = 1e-14


class DegenerateMap(RuntimeError):
    """Period map is the identity; its fixed point is not unique."""


class TooFewPoints(ValueError):
    """Not enough grid points for the requested stencil."""


class MapEvaluationError(RuntimeError):
    """One or more occupancy-map grid points failed to evaluate."""

    def __init__(self, failures):
        self.failures = failures
        lines = ", ".join(
            f"(offset={o:g} meV, f={f:g} Hz): {err}" for o, f, err in failures[:5]
        )
        more = "" if len(failures) <= 5 else f" (+{len(failures) - 5} more)"
        super().__init__(f"{len(failures)} grid point(s) failed: {lines}{more}")


@dataclass(frozen=True)
class PulseSchedule:
    """Periodic detuning waveform eps(t) = offset + (d_eps/2) h(f t) + A sin(2 pi nu t).

    offset: DC detuning offset in meV
    toggle_amplitude: square-wave peak-to-peak amplitude d_eps in meV
    toggle_freq: square-wave frequency f in Hz (integer multiple of dither_freq)
    dither_amplitude: sinusoidal dither amplitude A in meV
    dither_freq: dither frequency nu in Hz (defaults to toggle_freq when A = 0)
    ramp_time: switching ramp tau in ns; metadata for the diabaticity check
        only, the model switches instantaneously
    steps_per_period: number N of piecewise-constant intervals per dither
        period; auto-selected near 4096 when omitted, always a multiple of
        2 f/nu so square-wave edges fall on interval boundaries
    """

    offset: float
    toggle_amplitude: float
    toggle_freq: float
    dither_amplitude: float = 0.0
    dither_freq: float | None = None
    ramp_time: float = 16.0
    steps_per_period: int | None = None

    def __post_init__(self):
        if self.toggle_amplitude < 0:
            raise ValueError("toggle_amplitude must be >= 0")
        if self.toggle_freq <= 0:
            raise ValueError("toggle_freq must be > 0")
        if self.dither_amplitude < 0:
            raise ValueError("dither_amplitude must be >= 0")
        if self.ramp_time < 0:
            raise ValueError("ramp_time must be >= 0")
        if self.dither_freq is None:
            object.__setattr__(self, "dither_freq", self.toggle_freq)
        if self.dither_freq <= 0:
            raise ValueError("dither_freq must be > 0")
        ratio = self.toggle_freq / self.dither_freq
        if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0):
            raise ValueError(
                f"toggle_freq must be an integer multiple of dither_freq "
                f"(got ratio {ratio:g})"
            )
        waiting_ns = 1e9 / (2.0 * self.toggle_freq)
        if self.ramp_time >= 0.1 * waiting_ns:
            raise ValueError(
                f"ramp_time {self.ramp_time:g} ns must stay below 10% of the "
                f"waiting time {waiting_ns:g} ns"
            )
        n = self.steps_per_period
        if n is None:
            block = 2 * self.freq_ratio
            n = max(_N_MIN, block * math.ceil(_N_TARGET / block))
            object.__setattr__(self, "steps_per_period", n)
        else:
            if n < 2:
                raise ValueError("steps_per_period must be >= 2")
            if n % (2 * self.freq_ratio) != 0:
                raise ValueError(
                    f"steps_per_period must be divisible by 2 f/nu = "
                    f"{2 * self.freq_ratio}"
                )

    @property
    def freq_ratio(self) -> int:
        """Square-wave periods per dither period, f/nu."""
        return int(round(self.toggle_freq / self.dither_freq))

    @property
    def period_ns(self) -> float:
        """Full control period 1/nu in ns."""
        return 1e9 / self.dither_freq

    @property
    def dt_ns(self) -> float:
        """Interval duration per step in ns."""
        return self.period_ns / self.steps_per_period


def _square(x):
    """Unit square wave, +1 on [0, 1/2) of each period, -1 on [1/2, 1)."""
    return np.where((np.floor(2.0 * x) % 2) == 0, 1.0, -1.0)


def discretize_waveform(schedule: PulseSchedule):
    """Midpoint-sampled detuning sequence over one dither period.

    Returns (eps, dt_ns): eps[k] = eps((k + 1/2) dt) for k = 0..N-1 in meV
    and the common interval length in ns.  Switching between intervals is
    treated as instantaneous.
    """
    n = schedule.steps_per_period
    k = np.arange(n)
    t = (k + 0.5) / (n * schedule.dither_freq)  # seconds
    eps = (
        schedule.offset
        + 0.5 * schedule.toggle_amplitude * _square(schedule.toggle_freq * t)
        + schedule.dither_amplitude * np.sin(2.0 * math.pi * schedule.dither_freq * t)
    )
    return eps, schedule.dt_ns


@dataclass(frozen=True)
class PopulationPair:
    """Ground/excited populations in the instantaneous energy basis."""

    rho00: float
    rho11: float

    def __post_init__(self):
        if self.rho00 < -1e-12 or self.rho11 < -1e-12:
            raise ValueError("populations must be nonnegative")
        if abs(self.rho00 + self.rho11 - 1.0) > 1e-12:
            raise ValueError("populations must sum to 1")

    @classmethod
    def thermal(cls, epsilon, qubit: QubitParams) -> "PopulationPair":
        gap = math.hypot(epsilon, qubit.delta)
        p0 = 1.0 / (1.0 + math.exp(-qubit.beta * gap))
        return cls(p0, 1.0 - p0)

    def as_array(self):
        return np.array([self.rho00, self.rho11])


@dataclass(frozen=True)
class TransferMatrix:
    """2x2 column-stochastic map acting on (rho00, rho11) vectors."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2):
            raise ValueError("transfer matrix must be 2x2")
        if np.any(m < -1e-12) or np.any(m > 1.0 + 1e-12):
            raise ValueError("transfer-matrix entries must lie in [0, 1]")
        sums = m.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError(f"columns must sum to 1, got {sums}")
        object.__setattr__(self, "matrix", m)
        m.setflags(write=False)

    def __matmul__(self, other):
        if isinstance(other, TransferMatrix):
            return TransferMatrix(self.matrix @ other.matrix)
        return NotImplemented

    def apply(self, pops: PopulationPair) -> PopulationPair:
        v = self.matrix @ pops.as_array()
        return PopulationPair(float(v[0]), float(v[1]))

    @classmethod
    def identity(cls) -> "TransferMatrix":
        return cls(np.eye(2))


def _thermal_p0(epsilon, beta, delta):
    """Equilibrium ground population, vectorized."""
    gap = np.hypot(epsilon, delta)
    return 1.0 / (1.0 + np.exp(-beta * gap))


def _decay_average(x):
    """nu_bar = (1 - exp(-x))/x, the within-interval average of exp(-t Gamma).

    Series for small x avoids 0/0; exact limit 1 at x = 0.
    """
    x = np.asarray(x, dtype=float)
    small = x < 1e-8
    xs = np.where(small, 0.0, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = -np.expm1(-xs) / np.where(small, 1.0, xs)
    series = 1.0 - x / 2.0 + x * x / 6.0
    return np.where(small, series, direct)


def relax_matrix(
    epsilon: float, dt: float, rate, qubit: QubitParams, as_average: bool = False
) -> TransferMatrix:
    """Relaxation map R(eps, dt) toward the local thermal populations.

    rate is any callable eps -> Gamma_r in 1/ns (e.g. a RateCurve).  The
    decay factor is exp(-dt Gamma); with as_average the within-interval
    time average (1 - exp(-dt Gamma))/(dt Gamma) is used instead, giving
    the map whose output is the mean state over the interval.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    gamma = float(rate(epsilon))
    if gamma < 0:
        raise ValueError("relaxation rate must be >= 0")
    x = dt * gamma
    nu = float(_decay_average(x)) if as_average else math.exp(-x)
    p0 = _thermal_p0(epsilon, qubit.beta, qubit.delta)
    p1 = 1.0 - p0
    return TransferMatrix(
        np.array(
            [
                [p0 + nu * p1, (1.0 - nu) * p0],
                [(1.0 - nu) * p1, p1 + nu * p0],
            ]
        )
    )


def basis_change_matrix(
    epsilon_from: float, epsilon_to: float, qubit: QubitParams
) -> TransferMatrix:
    """Diabatic population transfer between eigenbases at two detunings.

    Doubly stochastic and symmetric, with diagonal mu = squared ground-state
    overlap; the identity when the detunings coincide.
    """
    th0 = 0.5 * math.atan2(qubit.delta, epsilon_from)
    th1 = 0.5 * math.atan2(qubit.delta, epsilon_to)
    mu = math.cos(th1 - th0) ** 2
    return TransferMatrix(np.array([[mu, 1.0 - mu], [1.0 - mu, mu]]))


def period_map(schedule: PulseSchedule, rate, qubit: QubitParams) -> TransferMatrix:
    """Full-period map Lambda_N, time-ordered right to left.

    Lambda_N = B(eps_1, eps_N) R(eps_N) ... B(eps_2, eps_1) R(eps_1); the
    closing basis change wraps around by control periodicity.
    """
    eps, dt = discretize_waveform(schedule)
    n = eps.size
    total = TransferMatrix.identity()
    for k in range(n):
        step = basis_change_matrix(eps[k], eps[(k + 1) % n], qubit) @ relax_matrix(
            eps[k], dt, rate, qubit
        )
        total = step @ total
    return total


def fixed_point(transfer: TransferMatrix) -> PopulationPair:
    """Normalized eigenvector of a column-stochastic map for eigenvalue 1.

    Closed form for 2x2: the matrix [[1-b, a], [b, 1-a]] has fixed point
    (a, b)/(a + b).  Raises DegenerateMap when the map is the identity to
    1e-14, where every state is fixed.
    """
    m = transfer.matrix
    if np.max(np.abs(m - np.eye(2))) < _DEGENERATE_TOL:
        raise DegenerateMap("period map is the identity; fixed point not unique")
    a = m[0, 1]
    b = m[1, 0]
    p0 = a / (a + b)
    return PopulationPair(p0, 1.0 - p0)


def _waveform_invariants(eps, qubit: QubitParams):
    """Rate-independent per-step quantities for the occupancy recursion.

    Returns (u, p_eq, mu) with the shape of eps: charge projection
    u = eps/gap, thermal ground population, and the squared ground-state
    overlap mu between each interval's basis and the next (wrapping
    periodically).
    """
    eps = np.asarray(eps, dtype=float)
    gap = np.hypot(eps, qubit.delta)
    u = eps / gap
    p_eq = 1.0 / (1.0 + np.exp(-qubit.beta * gap))
    theta = 0.5 * np.arctan2(qubit.delta, eps)
    dtheta = np.roll(theta, -1, axis=-1) - theta
    mu = np.cos(dtheta) ** 2
    return u, p_eq, mu


def _occupancy_recursion_numpy(x, u, p_eq, mu):
    """Single-pass affine recursion over one period, vectorized over rows.

    x = dt*gamma, u, p_eq, mu: all (P, N).  Each interval acts on the
    ground population as p -> c + m p (relaxation followed by basis
    rotation).  One sweep accumulates both the period-map composition
    (C, M) and the affine dependence of the time-averaged occupancy on
    the initial population: nbar = (S0 + S1 p0)/N with p0 = C/(1 - M).
    Degenerate periods (M = 1 to 1e-14) fall back to the thermal state
    of the first interval.
    """
    n = x.shape[-1]
    nu = np.exp(-x)
    nu_bar = _decay_average(x)
    two_mu = 2.0 * mu - 1.0
    c_step = (1.0 - mu) + two_mu * (1.0 - nu) * p_eq
    m_step = two_mu * nu
    # within-interval average: p_bar = a + b p with b = nu_bar
    a_avg = p_eq * (1.0 - nu_bar)
    w0 = 0.5 * (1.0 - u)

    shape = x.shape[:-1]
    big_c = np.zeros(shape)
    big_m = np.ones(shape)
    s0 = np.zeros(shape)
    s1 = np.zeros(shape)
    for k in range(n):
        p_bar_const = a_avg[..., k] + nu_bar[..., k] * big_c
        s0 += w0[..., k] + u[..., k] * p_bar_const
        s1 += u[..., k] * nu_bar[..., k] * big_m
        big_c = c_step[..., k] + m_step[..., k] * big_c
        big_m = m_step[..., k] * big_m

    denom = 1.0 - big_m
    degenerate = np.abs(denom) < _DEGENERATE_TOL
    p0 = np.where(
        degenerate,
        np.broadcast_to(p_eq[..., 0], shape),
        big_c / np.where(degenerate, 1.0, denom),
    )
    return (s0 + s1 * p0) / n


try:  # pragma: no cover - exercised indirectly
    from numba import njit as _njit

    @_njit(cache=True, fastmath=False)
    def _occupancy_recursion_jit(x, u, p_eq, mu, n_rows_inv):  # noqa: ANN001
        n_total, n = x.shape
        out = np.empty(n_total)
        for p in range(n_total):
            j = p % n_rows_inv
            big_c = 0.0
            big_m = 1.0
            s0 = 0.0
            s1 = 0.0
            for k in range(n):
                xk = x[p, k]
                ex = math.exp(-xk)
                if xk < 1e-8:
                    nb = 1.0 - xk / 2.0 + xk * xk / 6.0
                else:
                    nb = (1.0 - ex) / xk
                muk = mu[j, k]
                peqk = p_eq[j, k]
                uk = u[j, k]
                two_mu = 2.0 * muk - 1.0
                c_step = (1.0 - muk) + two_mu * (1.0 - ex) * peqk
                m_step = two_mu * ex
                p_bar_const = peqk * (1.0 - nb) + nb * big_c
                s0 += 0.5 * (1.0 - uk) + uk * p_bar_const
                s1 += uk * nb * big_m
                big_c = c_step + m_step * big_c
                big_m = m_step * big_m
            denom = 1.0 - big_m
            if abs(denom) < 1e-14:
                p0 = p_eq[j, 0]
            else:
                p0 = big_c / denom
            out[p] = (s0 + s1 * p0) / n
        return out

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def _occupancy_from_x(x, u, p_eq, mu, use_jit: bool = True):
    """Dispatch the recursion given x = dt*gamma against fixed invariants.

    x has shape (..., J, N) with invariants (J, N); candidate axes, if
    any, lead.
    """
    full = x.shape
    n = full[-1]
    if _HAVE_NUMBA and use_jit:
        x2 = np.ascontiguousarray(x).reshape(-1, n)
        out = _occupancy_recursion_jit(
            x2,
            np.ascontiguousarray(u.reshape(-1, n)),
            np.ascontiguousarray(p_eq.reshape(-1, n)),
            np.ascontiguousarray(mu.reshape(-1, n)),
            int(np.prod(u.shape[:-1], dtype=int)) if u.ndim > 1 else 1,
        )
        return out.reshape(full[:-1]) if len(full) > 1 else float(out[0])
    xb = x
    ub = np.broadcast_to(u, full)
    pb = np.broadcast_to(p_eq, full)
    mb = np.broadcast_to(mu, full)
    out = _occupancy_recursion_numpy(xb, ub, pb, mb)
    return out if np.ndim(out) else float(out)


def _occupancy_kernel(eps, dt, gamma, qubit: QubitParams, use_jit: bool = True):
    """Mean left occupancy over one period, batched.

    eps: (..., N) detuning samples in meV; gamma: rates at eps in 1/ns,
    broadcastable to eps by prepending axes (e.g. eps (n_off, N) with
    gamma (Q, n_off, N) for Q rate candidates).  Returns the broadcast
    leading shape.
    """
    eps = np.asarray(eps, dtype=float)
    x = dt * np.asarray(gamma, dtype=float)
    full = np.broadcast_shapes(eps.shape, x.shape)
    if full[-eps.ndim:] != eps.shape:
        raise ValueError("gamma must broadcast against eps by prepending axes")
    u, p_eq, mu = _waveform_invariants(eps, qubit)
    return _occupancy_from_x(np.broadcast_to(x, full), u, p_eq, mu, use_jit=use_jit)


def mean_left_occupancy(schedule: PulseSchedule, rate, qubit: QubitParams) -> float:
    """Time-averaged left-well occupancy at dynamical equilibrium.

    n_L(eps) = [1 - eps/gap]/2 + (eps/gap) rho00, averaged over one period
    with the per-interval mean state; always in [0, 1].
    """
    eps, dt = discretize_waveform(schedule)
    gamma = np.asarray(rate(eps), dtype=float)
    return float(_occupancy_kernel(eps, dt, gamma, qubit))


class GridMap:
    """Values on an (offset, frequency) grid with optional uncertainties.

    offsets: strictly increasing detuning offsets in meV
    freqs: strictly increasing toggle frequencies in Hz
    values: shape (len(freqs), len(offsets))
    """

    value_label = "value"

    def __init__(self, offsets, freqs, values, sigma=None):
        offsets = np.asarray(offsets, dtype=float)
        freqs = np.asarray(freqs, dtype=float)
        values = np.asarray(values, dtype=float)
        if not np.all(np.diff(offsets) > 0):
            raise ValueError("offsets must be strictly increasing")
        if not np.all(np.diff(freqs) > 0):
            raise ValueError("freqs must be strictly increasing")
        if values.shape != (freqs.size, offsets.size):
            raise ValueError(
                f"values shape {values.shape} != (n_freqs, n_offsets) = "
                f"({freqs.size}, {offsets.size})"
            )
        if sigma is not None:
            sigma = np.broadcast_to(np.asarray(sigma, dtype=float), values.shape).copy()
            if np.any(sigma <= 0):
                raise ValueError("sigma must be > 0 where given")
        self._validate_values(values)
        self.offsets = offsets
        self.freqs = freqs
        self.values = values
        self.sigma = sigma
        for arr in (offsets, freqs, values):
            arr.setflags(write=False)

    def _validate_values(self, values):
        pass

    def same_grid(self, other) -> bool:
        return (
            self.offsets.shape == other.offsets.shape
            and self.freqs.shape == other.freqs.shape
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.freqs, other.freqs)
        )

    def __repr__(self):
        return (
            f"{type(self).__name__}({self.freqs.size} freqs x "
            f"{self.offsets.size} offsets)"
        )


class OccupancyMap(GridMap):
    """Time-averaged left-well occupancies n_L(eps_bar, f) in [0, 1]."""

    value_label = "n_left"

    def _validate_values(self, values):
        if np.any(values < -1e-9) or np.any(values > 1.0 + 1e-9):
            raise ValueError("occupancies must lie in [0, 1]")


class DifferentialMap(GridMap):
    """Derivative d n / d eps_bar on the same grid (1/meV)."""

    value_label = "dn_deps"


def steps_for_ratio(freq_ratio: int, target: int | None = None) -> int:
    """Smallest admissible step count at or above the target.

    Rounds the target (default 4096) up to a multiple of 2*freq_ratio so
    every square-wave edge lands on an interval boundary, with a floor of
    64 steps.
    """
    block = 2 * freq_ratio
    target = _N_TARGET if target is None else int(target)
    return max(_N_MIN, block * math.ceil(target / block))


def row_schedule(
    template: PulseSchedule, freq: float, steps_target: int | None = None
) -> PulseSchedule:
    """Schedule for one frequency row of a grid sweep.

    Takes amplitudes, dither and ramp from the template; offset is zeroed
    (grid offsets are added to the sampled waveform directly).  A
    dither-free template lets the dither frequency follow the row
    frequency so the integer-ratio invariant holds for any grid.
    steps_target adjusts the discretization density; the actual step
    count per row still honors the edge-alignment constraint.
    """
    dither_freq = template.dither_freq if template.dither_amplitude > 0 else None
    ratio = 1 if dither_freq is None else int(round(freq / dither_freq))
    return PulseSchedule(
        offset=0.0,
        toggle_amplitude=template.toggle_amplitude,
        toggle_freq=float(freq),
        dither_amplitude=template.dither_amplitude,
        dither_freq=dither_freq,
        ramp_time=template.ramp_time,
        steps_per_period=steps_for_ratio(ratio, steps_target),
    )


def occupancy_map(
    offsets,
    freqs,
    rate,
    qubit: QubitParams,
    schedule_template: PulseSchedule,
    max_workers: int | None = None,
    steps_target: int | None = None,
) -> OccupancyMap:
    """Forward-model n_L over an (offsets x freqs) grid.

    Each frequency row re-derives its schedule from the template via
    row_schedule; the template's own offset, toggle_freq and
    steps_per_period are ignored (pass steps_target to change the
    discretization density).  Rows are independent; max_workers > 1
    evaluates them in a thread pool with results placed by index, so
    output is deterministic regardless of worker count.
    """
    offsets = np.asarray(offsets, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    values = np.empty((freqs.size, offsets.size))
    failures = []

    def eval_row(i):
        sched = row_schedule(schedule_template, freqs[i], steps_target)
        eps_base, dt = discretize_waveform(sched)
        eps = offsets[:, None] + eps_base[None, :]
        gamma = np.asarray(rate(eps), dtype=float)
        return _occupancy_kernel(eps, dt, gamma, qubit)

    if max_workers is not None and max_workers > 1 and freqs.size > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows = {i: pool.submit(eval_row, i) for i in range(freqs.size)}
        for i, fut in rows.items():
            try:
                values[i] = fut.result()
            except Exception as exc:  # noqa: BLE001 - aggregated with coordinates
                failures.append((float(offsets[0]), float(freqs[i]), exc))
    else:
        for i in range(freqs.size):
            try:
                values[i] = eval_row(i)
            except Exception as exc:  # noqa: BLE001
                failures.append((float(offsets[0]), float(freqs[i]), exc))

    if failures:
        raise MapEvaluationError(failures)
    return OccupancyMap(offsets, freqs, np.clip(values, 0.0, 1.0))


def differential_map(grid: GridMap) -> DifferentialMap:
    """d values / d offset: central differences interior, one-sided edges."""
    if grid.offsets.size < 3:
        raise TooFewPoints("need at least 3 offset points to differentiate")
    deriv = np.gradient(grid.values, grid.offsets, axis=1)
    return DifferentialMap(grid.offsets, grid.freqs, deriv)
