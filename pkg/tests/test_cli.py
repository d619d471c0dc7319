"""Command-line surface: synth exports, scenario runs, server launch."""

import json
import signal
import socket
import subprocess
import sys
import time

import requests
import yaml
from click.testing import CliRunner

from uhs.cli import main

SCENARIO = {
    "duration_s": 20,
    "seed": 5,
    "patients": [{
        "patient_id": "p1", "password": "pw1",
        "timeline": [{"start_s": 0, "activity": 1, "spo2": 95, "hr": 60}],
    }],
}


def test_synth_accel_to_file(tmp_path):
    out = tmp_path / "trace.csv"
    result = CliRunner().invoke(main, ["synth", "accel", "--state", "2",
                                       "--duration", "2", "--seed", "3",
                                       "--out", str(out)])
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x,y,z"
    assert len(lines) == 1 + 100


def test_synth_ppg_stdout():
    result = CliRunner().invoke(main, ["synth", "ppg", "--spo2", "85",
                                       "--hr", "60", "--duration", "1"])
    assert result.exit_code == 0
    assert result.output.startswith("t,red,ir")


def test_synth_rejects_bad_state():
    result = CliRunner().invoke(main, ["synth", "accel", "--state", "9"])
    assert result.exit_code == 2


def test_run_scenario_with_report(tmp_path):
    scenario_file = tmp_path / "scenario.yaml"
    scenario_file.write_text(yaml.safe_dump(SCENARIO))
    report_file = tmp_path / "report.json"
    result = CliRunner().invoke(main, ["run", "--scenario", str(scenario_file),
                                       "--embedded", "--report", str(report_file),
                                       "--dump-traces", str(tmp_path / "traces")])
    assert result.exit_code == 0, result.output
    report = json.loads(report_file.read_text())
    assert report["patients"]["p1"]["uploads"] >= 1
    assert (tmp_path / "traces" / "accel_p1.csv").exists()


def test_run_seed_override_changes_report(tmp_path):
    scenario_file = tmp_path / "scenario.yaml"
    scenario_file.write_text(yaml.safe_dump(SCENARIO))
    runner = CliRunner()
    a = runner.invoke(main, ["run", "--scenario", str(scenario_file)])
    b = runner.invoke(main, ["run", "--scenario", str(scenario_file),
                             "--seed", "5"])
    assert a.exit_code == 0 and b.exit_code == 0
    assert a.output == b.output  # same seed either way


def test_run_bad_config_exit_code(tmp_path):
    scenario_file = tmp_path / "bad.yaml"
    scenario_file.write_text("duration_s: -3\npatients: []\n")
    result = CliRunner().invoke(main, ["run", "--scenario", str(scenario_file)])
    assert result.exit_code == 2
    assert "error:" in result.output


def test_run_unreachable_server_exit_code(tmp_path):
    scenario_file = tmp_path / "scenario.yaml"
    scenario_file.write_text(yaml.safe_dump(SCENARIO))
    result = CliRunner().invoke(main, ["run", "--scenario", str(scenario_file),
                                       "--server", "http://127.0.0.1:9"])
    assert result.exit_code == 3


def _free_port():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def test_serve_subprocess_lifecycle(tmp_path):
    port = _free_port()
    config = tmp_path / "server.yaml"
    config.write_text(yaml.safe_dump({
        "listen_host": "127.0.0.1",
        "listen_port": port,
        "data_dir": str(tmp_path / "data"),
        "users": [{"username": "doc", "password": "pw", "role": "doctor"}],
    }))
    proc = subprocess.Popen([sys.executable, "-m", "uhs.cli", "serve",
                             "--config", str(config)],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    base = f"http://127.0.0.1:{port}"
    try:
        for _ in range(100):
            try:
                if requests.get(base + "/api/v1/health", timeout=0.5).ok:
                    break
            except requests.RequestException:
                time.sleep(0.1)
        else:
            raise AssertionError("server never came up")
        token = requests.post(base + "/api/v1/auth/login",
                              json={"username": "doc", "password": "pw"},
                              timeout=5).json()["token"]
        resp = requests.post(base + "/api/v1/patients", json={"patient_id": "p1"},
                             headers={"Authorization": f"Bearer {token}"}, timeout=5)
        assert resp.status_code == 201
    finally:
        proc.send_signal(signal.SIGTERM)
        proc.wait(timeout=10)
    assert (tmp_path / "data" / "snapshot.json").exists()
    assert (tmp_path / "data" / "journal.log").exists()
