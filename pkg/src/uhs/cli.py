"""Command-line entry points: run scenarios, expose the signal
generators, and launch the health server.

Exit codes: 0 success, 2 bad configuration or arguments, 3 server
unreachable, 4 authorization failure, 1 anything else.
"""

from __future__ import annotations

import signal
import sys
import threading
from pathlib import Path

import click
import yaml

from .errors import (
    BadCredentials,
    InvalidConfig,
    InvalidState,
    ServerUnreachable,
    UhsError,
    Unauthorized,
)
from .scenario import ScenarioScript, report_to_json, run_scenario
from .server import HealthServer, RiskModel, ServerConfig, make_http_server
from .synth import SynthConfig, synth_accel, synth_ppg

_EXIT_CODES = [
    (InvalidConfig, 2),
    (InvalidState, 2),
    (ServerUnreachable, 3),
    (Unauthorized, 4),
    (BadCredentials, 4),
]


def _fail(exc: UhsError) -> None:
    click.echo(f"error: {exc}", err=True)
    for cls, code in _EXIT_CODES:
        if isinstance(exc, cls):
            sys.exit(code)
    sys.exit(1)


@click.group()
def main() -> None:
    """Ubiquitous health monitoring pipeline tools."""


@main.command()
@click.option("--scenario", "scenario_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--server", "server_url", default=None,
              help="Run against a live server URL instead of embedding one.")
@click.option("--embedded", is_flag=True, default=False,
              help="Run with an in-process server (default when --server is absent).")
@click.option("--dump-traces", "dump_dir", default=None, type=click.Path(file_okay=False))
@click.option("--report", "report_file", default=None, type=click.Path(dir_okay=False))
@click.option("--seed", default=None, type=int, help="Override the script seed.")
def run(scenario_file, server_url, embedded, dump_dir, report_file, seed):
    """Run a scripted end-to-end scenario and print the report."""
    if server_url and embedded:
        _fail(InvalidConfig("--server and --embedded are mutually exclusive"))
    try:
        script = ScenarioScript.from_file(scenario_file)
        if seed is not None:
            script.seed = seed
        report = run_scenario(script, server_url=server_url, dump_dir=dump_dir)
    except UhsError as exc:
        _fail(exc)
    blob = report_to_json(report)
    if report_file:
        Path(report_file).write_text(blob)
        click.echo(f"report written to {report_file}")
    else:
        click.echo(blob, nl=False)


@main.group()
def synth() -> None:
    """Generate labeled synthetic sensor traces as CSV."""


@synth.command()
@click.option("--state", required=True, type=int,
              help="Motion state: 1 resting, 2 walking, 3 running, 4 falling.")
@click.option("--fs", default=50.0, show_default=True)
@click.option("--duration", "duration_s", default=10.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--noise", "noise_sigma", default=0.0, show_default=True)
@click.option("--out", "out_file", default="-", help="Output path, - for stdout.")
def accel(state, fs, duration_s, seed, noise_sigma, out_file):
    """Accelerometer trace for one motion state."""
    try:
        trace = synth_accel(SynthConfig(duration_s=duration_s, fs=fs, seed=seed,
                                        noise_sigma=noise_sigma, activity=state))
    except UhsError as exc:
        _fail(exc)
    _write_out(out_file, trace.to_csv())


@synth.command()
@click.option("--spo2", required=True, type=int)
@click.option("--hr", required=True, type=float)
@click.option("--fs", default=50.0, show_default=True)
@click.option("--duration", "duration_s", default=10.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--noise", "noise_sigma", default=0.0, show_default=True)
@click.option("--out", "out_file", default="-", help="Output path, - for stdout.")
def ppg(spo2, hr, fs, duration_s, seed, noise_sigma, out_file):
    """Two-wavelength PPG trace with embedded SpO2/HR ground truth."""
    try:
        trace = synth_ppg(SynthConfig(duration_s=duration_s, fs=fs, seed=seed,
                                      noise_sigma=noise_sigma, spo2=spo2, hr=hr))
    except UhsError as exc:
        _fail(exc)
    _write_out(out_file, trace.to_csv())


def _write_out(out_file: str, text: str) -> None:
    if out_file == "-":
        click.echo(text, nl=False)
    else:
        Path(out_file).write_text(text)
        click.echo(f"trace written to {out_file}")


@main.command()
@click.option("--config", "config_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
def serve(config_file):
    """Launch the health server from a YAML config file."""
    try:
        cfg = yaml.safe_load(Path(config_file).read_text()) or {}
        server_cfg = ServerConfig(
            spo2_low=float(cfg.get("spo2_low", 90.0)),
            hr_low=float(cfg.get("hr_low", 40.0)),
            hr_high=float(cfg.get("hr_high", 180.0)),
            token_ttl_s=float(cfg.get("token_ttl_s", 3600.0)),
            snapshot_every=int(cfg.get("snapshot_every", 100)),
            users=cfg.get("users", []),
        )
        if cfg.get("model_file"):
            import json

            server_cfg.model = RiskModel.from_json(
                json.loads(Path(cfg["model_file"]).read_text()))
        if cfg.get("tau") is not None:
            server_cfg.model.tau = float(cfg["tau"])
        core = HealthServer(server_cfg, data_dir=cfg.get("data_dir"))
        host = cfg.get("listen_host", "127.0.0.1")
        port = int(cfg.get("listen_port", 8470))
        httpd = make_http_server(core, host, port, static_dir=cfg.get("static_dir"))
    except (UhsError, OSError, ValueError) as exc:
        _fail(exc if isinstance(exc, UhsError) else InvalidConfig(str(exc)))

    def _shutdown(signum, frame):
        # shutdown() blocks until serve_forever returns, so it must not
        # run on the serving thread itself
        threading.Thread(target=httpd.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, _shutdown)
    signal.signal(signal.SIGINT, _shutdown)
    click.echo(f"health server listening on http://{host}:{port}")
    try:
        httpd.serve_forever()
    finally:
        core.close()
        click.echo("server stopped, state snapshotted")


if __name__ == "__main__":
    main()
