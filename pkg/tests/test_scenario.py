"""Scenario script parsing and end-to-end run properties."""

import pytest

from uhs.errors import InvalidConfig
from uhs.scenario import ScenarioScript, report_to_json, run_scenario

CONSTANT = {
    "duration_s": 60,
    "seed": 7,
    "patients": [{
        "patient_id": "p1", "password": "pw1",
        "timeline": [{"start_s": 0, "activity": 1, "spo2": 95, "hr": 60}],
    }],
}

FALL = {
    "duration_s": 45,
    "seed": 42,
    "patients": [{
        "patient_id": "p1", "password": "pw1",
        "location": {"lat": -25.75, "lon": 28.19},
        "timeline": [
            {"start_s": 0, "activity": 1, "spo2": 97, "hr": 60},
            {"start_s": 30, "activity": 4, "spo2": 88, "hr": 120},
        ],
    }],
}


def test_constant_scenario_uploads_bounded():
    report = run_scenario(ScenarioScript.from_dict(CONSTANT))
    p = report["patients"]["p1"]
    # initial upload plus the vitals-presence flip once the oximeter warms up
    assert p["uploads"] == 2
    assert p["observations_fused"] > 50
    assert report["alerts"] == []
    expected = 1.0 - 2 / p["observations_fused"]
    assert p["suppression_ratio"] == pytest.approx(expected)


def test_report_conservation():
    report = run_scenario(ScenarioScript.from_dict(FALL))
    assert report["uploads_total"] == report["stored_on_server_total"]
    ch = report["channel"]
    assert ch["offered"] == ch["delivered"] + ch["lost"]
    assert ch["collisions"] == 0 and ch["violations"] == 0


def test_fall_scenario_alert_within_budget():
    report = run_scenario(ScenarioScript.from_dict(FALL))
    event = report["fall_events"][0]
    assert event["alert_id"] is not None
    assert event["has_location"] is True
    assert event["within_budget"] is True
    assert event["alert_latency_s"] <= report["budget"]["alert_latency_budget_s"]
    assert report["channel"]["max_frame_wait_s"] <= report["budget"]["superframe_s"]
    causes = [a["cause"] for a in report["alerts"]]
    assert "rule_fall" in causes and "rule_spo2_low" in causes


def test_seeded_runs_byte_identical():
    a = report_to_json(run_scenario(ScenarioScript.from_dict(FALL)))
    b = report_to_json(run_scenario(ScenarioScript.from_dict(FALL)))
    assert a == b


def test_lossy_channel_still_delivers_fall():
    script = dict(FALL)
    script["channel"] = {"loss_probability": 0.3}
    report = run_scenario(ScenarioScript.from_dict(script))
    assert report["channel"]["lost"] > 0
    # periodic refresh means the fall eventually lands despite loss
    assert any(a["cause"] == "rule_fall" for a in report["alerts"])


def test_dump_traces(tmp_path):
    run_scenario(ScenarioScript.from_dict(CONSTANT), dump_dir=str(tmp_path))
    accel = (tmp_path / "accel_p1.csv").read_text().splitlines()
    assert accel[0] == "t,x,y,z"
    assert len(accel) == 1 + 60 * 50
    ppg = (tmp_path / "ppg_p1.csv").read_text().splitlines()
    assert ppg[0] == "t,red,ir"
    events = (tmp_path / "channel_events.csv").read_text().splitlines()
    assert events[0] == "superframe,slot,node,kind,seq"
    assert len(events) > 100


def test_yaml_syntax_error_reports_line():
    bad = "duration_s: 10\npatients:\n  - patient_id: p1\n   timeline: [\n"
    with pytest.raises(InvalidConfig) as err:
        ScenarioScript.from_yaml(bad)
    assert "line" in str(err.value)


@pytest.mark.parametrize("mutate, fragment", [
    (lambda d: d.update(duration_s=-1), "duration_s"),
    (lambda d: d.update(patients=[]), "patient"),
    (lambda d: d["patients"][0]["timeline"].__setitem__(
        0, {"start_s": 5, "activity": 1, "spo2": 95, "hr": 60}), "start at 0"),
    (lambda d: d["patients"][0]["timeline"].append(
        {"start_s": 0, "activity": 1, "spo2": 95, "hr": 60}), "ordered"),
    (lambda d: d["patients"][0]["timeline"].__setitem__(
        0, {"start_s": 0, "activity": 7, "spo2": 95, "hr": 60}), "activity"),
    (lambda d: d["patients"][0]["timeline"].__setitem__(
        0, {"start_s": 0, "activity": 1, "spo2": 99, "hr": 60}), "spo2"),
    (lambda d: d["patients"][0]["timeline"].__setitem__(
        0, {"start_s": 0, "activity": 1, "spo2": 95, "hr": 300}), "hr"),
])
def test_script_validation_errors(mutate, fragment):
    import copy

    data = copy.deepcopy(CONSTANT)
    mutate(data)
    with pytest.raises(InvalidConfig) as err:
        ScenarioScript.from_dict(data)
    assert fragment in str(err.value)


def test_too_many_patients_for_schedule():
    data = {
        "duration_s": 10, "seed": 1,
        "patients": [
            {"patient_id": f"p{i}", "password": "x",
             "timeline": [{"start_s": 0, "activity": 1, "spo2": 95, "hr": 60}]}
            for i in range(5)
        ],
    }
    with pytest.raises(InvalidConfig) as err:
        ScenarioScript.from_dict(data)
    assert "slots" in str(err.value)


def test_classifier_thresholds_from_config():
    import copy

    data = copy.deepcopy(FALL)
    # an absurd fall threshold stops the spike from ever classifying as 4
    data["classifier"] = {"fall_z_peak_min": 10.0}
    report = run_scenario(ScenarioScript.from_dict(data))
    assert all(a["cause"] != "rule_fall" for a in report["alerts"])


def test_channel_seed_from_config():
    import copy

    data = copy.deepcopy(FALL)
    data["channel"] = {"loss_probability": 0.4, "seed": 11}
    a = run_scenario(ScenarioScript.from_dict(data))
    data["channel"] = {"loss_probability": 0.4, "seed": 12}
    b = run_scenario(ScenarioScript.from_dict(data))
    assert a["channel"]["lost"] > 0 and b["channel"]["lost"] > 0
    assert a["channel"]["lost"] != b["channel"]["lost"]


def test_multi_patient_run():
    data = {
        "duration_s": 30, "seed": 3,
        "patients": [
            {"patient_id": "p1", "password": "a",
             "timeline": [{"start_s": 0, "activity": 2, "spo2": 95, "hr": 60}]},
            {"patient_id": "p2", "password": "b",
             "timeline": [{"start_s": 0, "activity": 3, "spo2": 96, "hr": 120}]},
        ],
    }
    report = run_scenario(ScenarioScript.from_dict(data))
    assert set(report["patients"]) == {"p1", "p2"}
    assert report["channel"]["collisions"] == 0
    for p in report["patients"].values():
        assert p["stored_on_server"] == p["uploads"]
