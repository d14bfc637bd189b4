"""Spline-parameterized, strictly positive relaxation-rate functions.

A RateCurve stores log Gamma_r at detuning knots and interpolates with a
monotone (shape-preserving) cubic in (eps, log Gamma); positivity holds
by construction since the exponential of a finite spline is evaluated.
Outside the knot span the boundary log-slope is continued linearly, so
power-law-in-energy tails extrapolate sensibly.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import PchipInterpolator

from .constants import HZ_TO_RATE_NS, RATE_NS_TO_HZ

__all__ = ["RateCurve"]


class RateCurve:
    """Gamma_r(eps) > 0 parameterized by log-rate values at detuning knots.

    knots: strictly increasing detunings in meV
    log_values: natural log of the rate in 1/ns at each knot
    Instances are immutable and callable: curve(eps) -> 1/ns.
    """

    def __init__(self, knots, log_values):
        knots = np.asarray(knots, dtype=float)
        log_values = np.asarray(log_values, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise ValueError("need at least two knots")
        if log_values.shape != knots.shape:
            raise ValueError("log_values must match knots in shape")
        if not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be strictly increasing")
        if not np.all(np.isfinite(log_values)):
            raise ValueError("log_values must be finite")
        self.knots = knots
        self.log_values = log_values
        self._spline = PchipInterpolator(knots, log_values, extrapolate=False)
        deriv = self._spline.derivative()
        self._slope_lo = float(deriv(knots[0]))
        self._slope_hi = float(deriv(knots[-1]))
        self.knots.setflags(write=False)
        self.log_values.setflags(write=False)

    @classmethod
    def constant(cls, rate_per_ns, span=(-1.0, 1.0), n_knots=2) -> "RateCurve":
        """Flat curve at the given rate (1/ns) over the span."""
        if rate_per_ns <= 0:
            raise ValueError("rate must be > 0")
        knots = np.linspace(span[0], span[1], n_knots)
        return cls(knots, np.full(n_knots, np.log(rate_per_ns)))

    @classmethod
    def constant_hz(cls, rate_hz, span=(-1.0, 1.0), n_knots=2) -> "RateCurve":
        """Flat curve at the given rate in Hz."""
        return cls.constant(rate_hz * HZ_TO_RATE_NS, span=span, n_knots=n_knots)

    @classmethod
    def even_from_half(cls, abs_knots, log_values) -> "RateCurve":
        """Mirror knots on |eps| >= 0 into an even curve about eps = 0.

        abs_knots must be strictly increasing and start at 0; the mirrored
        curve shares the eps = 0 value.
        """
        abs_knots = np.asarray(abs_knots, dtype=float)
        log_values = np.asarray(log_values, dtype=float)
        if abs_knots[0] != 0.0:
            raise ValueError("abs_knots must start at 0")
        knots = np.concatenate([-abs_knots[:0:-1], abs_knots])
        vals = np.concatenate([log_values[:0:-1], log_values])
        return cls(knots, vals)

    def with_log_values(self, log_values) -> "RateCurve":
        """New curve on the same knots with replaced log-rate values."""
        return RateCurve(self.knots, log_values)

    def log_rate(self, epsilon):
        """log of the rate (1/ns) with linear log-slope extrapolation."""
        eps = np.asarray(epsilon, dtype=float)
        out = self._spline(eps)
        lo = eps < self.knots[0]
        hi = eps > self.knots[-1]
        if np.any(lo):
            out = np.where(
                lo, self.log_values[0] + self._slope_lo * (eps - self.knots[0]), out
            )
        if np.any(hi):
            out = np.where(
                hi, self.log_values[-1] + self._slope_hi * (eps - self.knots[-1]), out
            )
        return out if out.ndim else float(out)

    def __call__(self, epsilon):
        """Rate Gamma_r(eps) in 1/ns; strictly positive."""
        return np.exp(self.log_rate(epsilon))

    def rate_hz(self, epsilon):
        """Rate in Hz (I/O-boundary convenience)."""
        return self(epsilon) * RATE_NS_TO_HZ

    def rate_at_gap(self, gap, delta):
        """Rate evaluated at the detuning implied by an energy gap.

        gap = sqrt(eps^2 + delta^2) inverts to |eps|; the curve is sampled
        on the positive branch.  Gaps below delta clamp to eps = 0.
        """
        gap = np.asarray(gap, dtype=float)
        eps = np.sqrt(np.maximum(gap**2 - delta**2, 0.0))
        return self(eps)

    def __repr__(self):
        return (
            f"RateCurve({self.knots.size} knots on "
            f"[{self.knots[0]:g}, {self.knots[-1]:g}] meV)"
        )
