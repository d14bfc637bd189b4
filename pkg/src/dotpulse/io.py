"""File formats: CSV tables (RFC 4180, '.' decimal, 17 significant digits)
and JSON envelopes for structured results and config echoes.

Grid maps round-trip bit-exactly through CSV: 17 significant digits are
enough to reproduce any IEEE double.  Loaders sort rows into canonical
(increasing-grid) order, so files may be row-shuffled without changing
what they mean.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .constants import RATE_NS_TO_HZ
from .dynamics import DifferentialMap, GridMap, OccupancyMap
from .inference import FitResult, GridMismatch, MeasuredSet
from .qubit import energy_gap

__all__ = [
    "DataFormatError",
    "write_grid_csv",
    "read_occupancy_csv",
    "write_measured_csv",
    "read_measured_csv",
    "write_rate_table_csv",
    "fit_result_to_dict",
    "write_json",
]

_FMT = "%.17g"


class DataFormatError(ValueError):
    """A data file failed to parse or validate; message carries context."""


def _fmt(x: float) -> str:
    return _FMT % x


def write_grid_csv(grid: GridMap, path, value_name: str | None = None) -> None:
    """Write a grid map as long-format CSV.

    Columns: offset_meV, freq_Hz, <value>, sigma.  Rows ordered by
    frequency then offset; sigma column left empty when absent.
    """
    value_name = value_name or grid.value_label
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["offset_meV", "freq_Hz", value_name, "sigma"])
        for i, f in enumerate(grid.freqs):
            for j, o in enumerate(grid.offsets):
                sig = "" if grid.sigma is None else _fmt(grid.sigma[i, j])
                writer.writerow([_fmt(o), _fmt(f), _fmt(grid.values[i, j]), sig])


def _read_long_csv(path, value_names: tuple[str, ...], lever_arm: float | None = None):
    """Parse a long-format grid CSV into (offsets, freqs, values, sigma).

    Detuning may be given as offset_meV, or as offset_V when a lever arm
    (eV/V) is supplied; the voltage-to-energy conversion is applied here,
    exactly once.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    except (OSError, StopIteration) as exc:
        raise DataFormatError(f"{path}: cannot read CSV ({exc})") from exc
    header = [h.strip() for h in header]
    value_col = None
    for name in value_names:
        if name in header:
            value_col = header.index(name)
            break
    offset_scale = 1.0
    if "offset_meV" in header:
        offset_col = header.index("offset_meV")
    elif "offset_V" in header:
        if lever_arm is None:
            raise DataFormatError(
                f"{path}: offsets are in volts; a lever arm (eV/V) is required"
            )
        offset_col = header.index("offset_V")
        offset_scale = lever_arm * 1e3  # eV/V -> meV per volt
    else:
        raise DataFormatError(f"{path}: no offset_meV or offset_V column")
    if value_col is None or "freq_Hz" not in header:
        raise DataFormatError(
            f"{path}: header must contain freq_Hz and one of "
            f"{value_names}, got {header}"
        )
    io, if_, iv = offset_col, header.index("freq_Hz"), value_col
    isig = header.index("sigma") if "sigma" in header else None

    records = []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            sig = None
            if isig is not None and row[isig].strip():
                sig = float(row[isig])
            records.append(
                (offset_scale * float(row[io]), float(row[if_]), float(row[iv]), sig)
            )
        except (ValueError, IndexError) as exc:
            raise DataFormatError(f"{path}:{lineno}: bad row {row} ({exc})") from exc
    if not records:
        raise DataFormatError(f"{path}: no data rows")

    offsets = np.array(sorted({r[0] for r in records}))
    freqs = np.array(sorted({r[1] for r in records}))
    values = np.full((freqs.size, offsets.size), np.nan)
    sigma = np.full((freqs.size, offsets.size), np.nan)
    o_idx = {o: j for j, o in enumerate(offsets)}
    f_idx = {f: i for i, f in enumerate(freqs)}
    have_sigma = False
    for o, f, v, s in records:
        values[f_idx[f], o_idx[o]] = v
        if s is not None:
            sigma[f_idx[f], o_idx[o]] = s
            have_sigma = True
    if np.any(np.isnan(values)):
        raise DataFormatError(f"{path}: grid is not complete (missing points)")
    if have_sigma and np.any(np.isnan(sigma)):
        raise DataFormatError(f"{path}: sigma given for some points but not all")
    return offsets, freqs, values, (sigma if have_sigma else None)


def read_occupancy_csv(path) -> OccupancyMap:
    offsets, freqs, values, sigma = _read_long_csv(path, ("n_left",))
    try:
        return OccupancyMap(offsets, freqs, values, sigma)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def write_measured_csv(measured: MeasuredSet, path) -> None:
    grid = DifferentialMap(
        measured.offsets, measured.freqs, measured.traces, measured.sigma
    )
    write_grid_csv(grid, path)


def read_measured_csv(paths, lever_arm: float | None = None) -> MeasuredSet:
    """Load one or more differential-trace CSVs into a single measured set.

    Multiple files contribute distinct frequency rows; every file must
    share the first file's offset grid or GridMismatch is raised with the
    offending file named.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    all_offsets = None
    freq_rows: dict[float, tuple[np.ndarray, np.ndarray | None, str]] = {}
    for path in paths:
        offsets, freqs, values, sigma = _read_long_csv(
            path, ("dn_deps", "dS_deps", "value"), lever_arm=lever_arm
        )
        if all_offsets is None:
            all_offsets = offsets
        elif offsets.shape != all_offsets.shape or not np.array_equal(
            offsets, all_offsets
        ):
            j = 0
            if offsets.shape == all_offsets.shape:
                j = int(np.argmax(offsets != all_offsets))
            raise GridMismatch(
                f"{path}: offset grid differs from {paths[0]} "
                f"(first difference at grid index {j})"
            )
        for i, f in enumerate(freqs):
            if f in freq_rows:
                raise DataFormatError(f"{path}: duplicate frequency {f} Hz")
            freq_rows[f] = (values[i], None if sigma is None else sigma[i], str(path))
    freqs = np.array(sorted(freq_rows))
    traces = np.vstack([freq_rows[f][0] for f in freqs])
    sigmas = [freq_rows[f][1] for f in freqs]
    sigma = None
    if all(s is not None for s in sigmas):
        sigma = np.vstack(sigmas)
    return MeasuredSet(
        offsets=all_offsets, freqs=freqs, traces=traces, sigma=sigma,
        lever_arm=lever_arm,
    )


def write_rate_table_csv(fit: FitResult, delta: float, path) -> None:
    """Plot-ready rate table over the mirrored knot grid.

    Columns: epsilon_meV, gap_meV, rate_Hz, lo68, hi68, lo95, hi95; band
    columns are empty until confidence_regions has run, and open-ended
    bounds are written as empty fields.
    """
    knots = fit.curve.knots
    rates = fit.curve(knots) * RATE_NS_TO_HZ

    def band_cols(level):
        if (fit.confidence_68 if level == 68 else fit.confidence_95) is None:
            return [""] * knots.size, [""] * knots.size
        lo, hi = fit.band(level)
        los, his = [], []
        for k in knots:
            i = int(np.argmin(np.abs(fit.abs_knots - abs(k))))
            los.append("" if lo[i] <= 0.0 else _fmt(lo[i] * RATE_NS_TO_HZ))
            his.append("" if math.isinf(hi[i]) else _fmt(hi[i] * RATE_NS_TO_HZ))
        return los, his

    lo68, hi68 = band_cols(68)
    lo95, hi95 = band_cols(95)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["epsilon_meV", "gap_meV", "rate_Hz", "lo68", "hi68", "lo95", "hi95"]
        )
        for j, k in enumerate(knots):
            writer.writerow(
                [
                    _fmt(k),
                    _fmt(float(energy_gap(k, delta))),
                    _fmt(rates[j]),
                    lo68[j],
                    hi68[j],
                    lo95[j],
                    hi95[j],
                ]
            )


def _band_to_jsonable(bounds):
    if bounds is None:
        return None
    lo, hi = bounds
    return {
        "lo_hz": [None if v <= 0.0 else v * RATE_NS_TO_HZ for v in lo],
        "hi_hz": [None if math.isinf(v) else v * RATE_NS_TO_HZ for v in hi],
    }


def fit_result_to_dict(fit: FitResult) -> dict:
    """JSON-ready summary of a fit (knots, rates, bands, convergence)."""
    return {
        "abs_knots_meV": fit.abs_knots.tolist(),
        "log_rate_per_ns": fit.log_values.tolist(),
        "rate_hz": (np.exp(fit.log_values) * RATE_NS_TO_HZ).tolist(),
        "misfit_min": fit.misfit_min,
        "delta_misfit": fit.delta_misfit,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "message": fit.message,
        "grad_norm": fit.grad_norm,
        "misfit_history": list(fit.misfit_history),
        "confidence_68": _band_to_jsonable(fit.confidence_68),
        "confidence_95": _band_to_jsonable(fit.confidence_95),
    }


def write_json(payload: dict, path) -> None:
    with Path(path).open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
