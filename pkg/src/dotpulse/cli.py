"""Command-line front end: a thin client of the HTTP service.

Every subcommand builds a JSON request from a config file, environment
overrides (DOTPULSE_SECTION__FIELD=value) and flags, sends it to the
service (in-process by default, --server URL for a remote instance), and
writes plot-ready CSV/JSON files plus a resolved-config echo into the
output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical
non-convergence, 4 data-format error.
"""

from __future__ import annotations

import asyncio
import json
import os
import sys
from pathlib import Path

import click
import httpx
import numpy as np

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_DATA = 4

ENV_PREFIX = "DOTPULSE_"

PAPER_PRESET = {
    "qubit": {"delta_mev": 1e-3, "temperature_k": 0.3},
    "schedule": {
        "toggle_amplitude_mev": 0.21,
        "dither_amplitude_mev": 0.06,
        "dither_freq_hz": 43.0,
        "ramp_time_ns": 16.0,
    },
    "grid": {
        "offsets_mev": {"start": -0.5, "stop": 0.5, "num": 101},
        "freqs_hz": [43.0 * m for m in (5, 12, 30, 75, 150, 302)],
    },
    "rate": {"kind": "from_spectral", "model": {"kind": "micro"}},
}


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        _fail(f"config file not found: {path}", EXIT_CONFIG)
    except json.JSONDecodeError as exc:
        _fail(f"config file {path} is not valid JSON: {exc}", EXIT_CONFIG)
    if not isinstance(cfg, dict):
        _fail(f"config file {path} must hold a JSON object", EXIT_CONFIG)
    return cfg


def _deep_update(base: dict, extra: dict) -> dict:
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], val)
        else:
            base[key] = val
    return base


def _env_overrides() -> dict:
    """DOTPULSE_A__B=value -> {"a": {"b": parsed-value}}."""
    out: dict = {}
    for name, raw in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in name[len(ENV_PREFIX):].split("__") if p]
        if not path:
            continue
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = value
    return out


def _build_request(config_path, preset: str | None, overrides: dict) -> dict:
    body: dict = {}
    if preset == "paper":
        _deep_update(body, json.loads(json.dumps(PAPER_PRESET)))
    elif preset is not None:
        _fail(f"unknown preset {preset!r} (available: paper)", EXIT_CONFIG)
    _deep_update(body, _load_config(config_path))
    _deep_update(body, _env_overrides())
    _deep_update(body, overrides)
    return body


def _post(path: str, payload: dict, server: str | None):
    try:
        if server:
            return httpx.post(
                server.rstrip("/") + path, json=payload, timeout=None
            )

        async def go():
            from .service.app import create_app

            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://dotpulse.local", timeout=None
            ) as client:
                return await client.post(path, json=payload)

        return asyncio.run(go())
    except httpx.HTTPError as exc:
        _fail(f"cannot reach service: {exc}", EXIT_CONFIG)


def _handle_errors(resp) -> dict:
    if resp.status_code == 200:
        return resp.json()
    try:
        body = resp.json()
    except json.JSONDecodeError:
        _fail(f"service error ({resp.status_code}): {resp.text}", EXIT_CONFIG)
    detail = body.get("detail", body)
    category = body.get("category", "config")
    code = {"config": EXIT_CONFIG, "data": EXIT_DATA, "numeric": EXIT_NUMERIC}.get(
        category, EXIT_CONFIG
    )
    _fail(f"{category} error: {detail}", code)


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_grid_csv_payload(payload: dict, path: Path, value_name: str):
    from .dynamics import DifferentialMap
    from .io import write_grid_csv

    grid = DifferentialMap(
        np.asarray(payload["offsets_mev"]),
        np.asarray(payload["freqs_hz"]),
        np.asarray(payload["values"]),
        None if payload.get("sigma") is None else np.asarray(payload["sigma"]),
    )
    write_grid_csv(grid, path, value_name=value_name)


def _echo_resolved(out: Path, resolved: dict, extra: dict | None = None):
    from .io import write_json

    payload = {"resolved_config": resolved}
    if extra:
        payload.update(extra)
    write_json(payload, out / "resolved_config.json")


@click.group()
@click.option("--server", default=None, help="URL of a running service; in-process by default")
@click.option("--out", default="out", show_default=True, help="output directory")
@click.pass_context
def main(ctx, server, out):
    """Pulsed double-dot charge qubit: simulate occupancy maps, synthesize
    datasets, and invert them for the relaxation-rate curve."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server
    ctx.obj["out"] = out


@main.command()
@click.option("--config", default=None, help="JSON request config")
@click.option("--check-omega5", is_flag=True, help="verify the low-energy J ~ w^5 law")
@click.pass_context
def spectral(ctx, config, check_omega5):
    """Tabulate J(omega) and the relaxation rate over a detuning grid."""
    overrides: dict = {}
    if check_omega5:
        overrides["check_omega5"] = True
        overrides.setdefault("model", {"kind": "micro"})
    body = _build_request(config, None, overrides)
    data = _handle_errors(_post("/spectral", body, ctx.obj["server"]))
    out = _out_dir(ctx.obj["out"])

    import csv as _csv

    with (out / "spectral_table.csv").open("w", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["epsilon_meV", "gap_meV", "omega_rad_ns", "J_meV2_ns", "rate_Hz"])
        for row in data["table"]:
            writer.writerow(
                [
                    "%.17g" % row[k]
                    for k in ("epsilon_mev", "gap_mev", "omega_rad_ns", "j_mev2_ns", "rate_hz")
                ]
            )
    _echo_resolved(out, data["resolved"], {"omega5": data.get("omega5")})
    if data.get("omega5"):
        o5 = data["omega5"]
        click.echo(
            f"omega^5 check: J(2w)/J(w) = {o5['ratio_long']:.4f} (long), "
            f"{o5['ratio_trans']:.4f} (trans), expected 32 -> "
            f"{'OK' if o5['within_1pct'] else 'FAIL'}"
        )
        if not o5["within_1pct"]:
            sys.exit(EXIT_NUMERIC)
    click.echo(f"wrote {out / 'spectral_table.csv'}")


def _seed_override(seed):
    return {} if seed is None else {"seed": seed}


@main.command()
@click.option("--config", default=None, help="JSON request config")
@click.option("--preset", default=None, help="named preset (paper)")
@click.option("--threads", default=None, type=int, help="parallel rows")
@click.pass_context
def simulate(ctx, config, preset, threads):
    """Forward-model the occupancy map n(eps_bar, f) and its differential."""
    overrides: dict = {}
    if threads:
        overrides["max_workers"] = threads
    body = _build_request(config, preset, overrides)
    data = _handle_errors(_post("/simulate", body, ctx.obj["server"]))
    out = _out_dir(ctx.obj["out"])
    _write_grid_csv_payload(data["occupancy"], out / "occupancy.csv", "n_left")
    _write_grid_csv_payload(data["differential"], out / "differential.csv", "dn_deps")
    _echo_resolved(out, data["resolved"])
    click.echo(f"wrote {out / 'occupancy.csv'} and {out / 'differential.csv'}")


@main.command()
@click.option("--config", default=None, help="JSON request config")
@click.option("--preset", default=None, help="named preset (paper)")
@click.option("--seed", default=None, type=int, help="noise seed")
@click.option("--threads", default=None, type=int, help="parallel rows")
@click.pass_context
def synth(ctx, config, preset, seed, threads):
    """Generate a reproducible synthetic dataset (noisy differentials)."""
    overrides = _seed_override(seed)
    if threads:
        overrides["max_workers"] = threads
    body = _build_request(config, preset, overrides)
    data = _handle_errors(_post("/synth", body, ctx.obj["server"]))
    out = _out_dir(ctx.obj["out"])
    _write_grid_csv_payload(data["occupancy"], out / "occupancy.csv", "n_left")
    _write_grid_csv_payload(data["differential"], out / "differential.csv", "dn_deps")
    _echo_resolved(
        out,
        data["resolved"],
        {"noise_sigma": data["noise_sigma"], "seed": data["seed"]},
    )
    click.echo(
        f"wrote dataset (sigma={data['noise_sigma']:.4g}, seed={data['seed']}) to {out}"
    )


@main.command()
@click.argument("data_files", nargs=-1, required=True, type=click.Path())
@click.option("--config", default=None, help="JSON request config")
@click.option("--seed", default=None, type=int, help="noise-realization seed")
@click.option("--phenom", is_flag=True, help="also fit phenomenological (s, alpha, w_c)")
@click.option("--micro", is_flag=True, help="also fit microscopic (E0, L)")
@click.option("--lever-arm", default=0.021, show_default=True,
              help="eV/V conversion for voltage-unit data files")
@click.pass_context
def fit(ctx, data_files, config, seed, phenom, micro, lever_arm):
    """Invert measured differential traces for the relaxation-rate curve."""
    from .inference import GridMismatch
    from .io import DataFormatError, read_measured_csv

    try:
        measured = read_measured_csv(list(data_files), lever_arm=lever_arm)
    except GridMismatch as exc:
        _fail(str(exc), EXIT_DATA)
    except DataFormatError as exc:
        _fail(str(exc), EXIT_DATA)

    overrides: dict = {
        "data": {
            "offsets_mev": measured.offsets.tolist(),
            "freqs_hz": measured.freqs.tolist(),
            "traces": measured.traces.tolist(),
            "sigma": None if measured.sigma is None else measured.sigma.tolist(),
            "lever_arm_ev_v": lever_arm,
        }
    }
    if phenom:
        overrides["fit_phenom"] = True
    if micro:
        overrides["micro"] = {"enabled": True}
    if seed is not None:
        overrides["settings"] = {"seed": seed}
    body = _build_request(config, None, overrides)
    data = _handle_errors(_post("/fit", body, ctx.obj["server"]))
    out = _out_dir(ctx.obj["out"])

    from .io import write_json

    write_json({k: v for k, v in data.items() if k != "resolved"}, out / "fit_result.json")
    _write_grid_csv_payload(data["data_occupancy"], out / "data_occupancy.csv", "n_left")
    _write_rate_csv(data, body, out / "rate_curve.csv")
    resolved = dict(data["resolved"])
    resolved["data"] = {
        "files": [str(p) for p in data_files],
        "lever_arm_ev_v": lever_arm,
        "lever_arm_uncertainty": "0.021 eV/V +- 10% (metadata only)",
    }
    _echo_resolved(out, resolved)

    fit_info = data["fit"]
    click.echo(
        f"fit: misfit={fit_info['misfit_min']:.4g} iterations={fit_info['iterations']} "
        f"converged={fit_info['converged']}"
    )
    if data.get("phenom_fit"):
        pf = data["phenom_fit"]
        click.echo(
            f"phenom: s={pf['s_exponent']:.3f} alpha={pf['coupling_alpha']:.4g} "
            f"cutoff={pf['cutoff_mev']:.4g} meV"
        )
    if data.get("micro_fit"):
        mf = data["micro_fit"]
        click.echo(
            f"micro: E0={mf['e0_mev']:.3f} meV L={mf['half_separation_nm']:.2f} nm "
            f"implied delta={mf['implied_delta_mev'] * 1e3:.3f} ueV"
        )
    if not fit_info["converged"] or (
        data.get("micro_fit") and not data["micro_fit"]["converged"]
    ):
        click.echo("fit did not converge; see fit_result.json for diagnostics", err=True)
        sys.exit(EXIT_NUMERIC)
    click.echo(f"wrote {out / 'fit_result.json'} and {out / 'rate_curve.csv'}")


def _write_rate_csv(data: dict, body: dict, path: Path):
    import csv as _csv
    import math as _math

    fit_info = data["fit"]
    knots = fit_info["abs_knots_meV"]
    rates = fit_info["rate_hz"]
    delta = body.get("qubit", {}).get("delta_mev", 1e-3)
    b68 = fit_info.get("confidence_68") or {}
    b95 = fit_info.get("confidence_95") or {}

    def col(band, side, i):
        vals = band.get(side)
        if vals is None or vals[i] is None:
            return ""
        return "%.17g" % vals[i]

    mirrored = [(-k, i) for i, k in reversed(list(enumerate(knots)))][:-1]
    mirrored += [(k, i) for i, k in enumerate(knots)]
    with path.open("w", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["epsilon_meV", "gap_meV", "rate_Hz", "lo68", "hi68", "lo95", "hi95"])
        for eps, i in mirrored:
            writer.writerow(
                [
                    "%.17g" % eps,
                    "%.17g" % _math.hypot(eps, delta),
                    "%.17g" % rates[i],
                    col(b68, "lo_hz", i),
                    col(b68, "hi_hz", i),
                    col(b95, "lo_hz", i),
                    col(b95, "hi_hz", i),
                ]
            )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8410, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("dotpulse.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
