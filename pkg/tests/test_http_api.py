"""The JSON API over real sockets: routing, status mapping, long-poll,
static assets, and client-side error translation."""

import threading
import time

import pytest
import requests

from uhs.base_node import BaseNode, HttpServerClient, RetryPolicy
from uhs.errors import (
    BadCredentials,
    DuplicatePatient,
    ServerUnreachable,
    SlotTaken,
    Unauthorized,
    UnknownPatient,
)
from uhs.server import HealthServer, ServerConfig, serve_in_thread

DOCTOR = {"username": "doc", "password": "doctorpw", "role": "doctor"}


@pytest.fixture()
def live_server():
    core = HealthServer(ServerConfig(users=[DOCTOR]))
    httpd, base_url = serve_in_thread(core)
    yield core, base_url
    httpd.shutdown()
    core.close()


def test_health_endpoint(live_server):
    _, base_url = live_server
    assert requests.get(base_url + "/api/v1/health", timeout=5).json() == {"ok": True}


def test_full_surface_over_http(live_server):
    _, base_url = live_server
    client = HttpServerClient(base_url)
    doctor = client.login(DOCTOR["username"], DOCTOR["password"])
    assert doctor["role"] == "doctor"

    created = client.add_patient(doctor["token"], {
        "patient_id": "p1", "username": "p1", "password": "pw-p1", "name": "A"})
    assert created["patient_id"] == "p1"
    patient = client.login("p1", "pw-p1")

    ack = client.enter_data(patient["token"], {
        "patient_id": "p1", "seq": 0, "t": 1.0, "activity": 4,
        "location": {"lat": 1.0, "lon": 2.0, "fix_time": 1.0}})
    assert ack["server_seq"] == 1
    assert ack["high_risk"] is True

    stored = client.get_observations(doctor["token"], "p1")
    assert len(stored) == 1 and stored[0]["activity"] == 4

    listed = client.list_patients(doctor["token"])
    assert listed[0]["patient_id"] == "p1"
    assert client.view_patient(doctor["token"], "p1")["history_stats"]["count"] == 1

    alerts = client.get_alerts(doctor["token"], state="open")
    assert alerts[0]["cause"] == "rule_fall"
    assert alerts[0]["location"]["lat"] == 1.0
    acked = client.ack_alert(doctor["token"], alerts[0]["alert_id"])
    assert acked["state"] == "acknowledged"

    client.upload_info(doctor["token"], "p1", {"kind": "recommendation",
                                               "text": "rest"})
    client.upload_info(doctor["token"], "p1", {"kind": "consult_slot",
                                               "slot_id": "s1",
                                               "start_time": 5.0,
                                               "duration_s": 60.0})
    bundle = client.get_info(patient["token"], "p1")
    assert bundle["recommendations"][0]["text"] == "rest"
    booked = client.book_appointment(patient["token"], "s1")
    assert booked["booked"] is True
    with pytest.raises(SlotTaken):
        client.book_appointment(patient["token"], "s1")

    manual = client.create_alert(doctor["token"], {"patient_id": "p1",
                                                   "cause": "rule_hr_out_of_band"})
    assert manual["state"] == "open"


def test_error_status_mapping(live_server):
    _, base_url = live_server
    client = HttpServerClient(base_url)
    with pytest.raises(BadCredentials):
        client.login("doc", "nope")
    doctor = client.login(DOCTOR["username"], DOCTOR["password"])
    with pytest.raises(Unauthorized):
        client.list_patients("garbage-token")
    with pytest.raises(UnknownPatient):
        client.view_patient(doctor["token"], "ghost")
    client.add_patient(doctor["token"], {"patient_id": "dup", "password": "x"})
    with pytest.raises(DuplicatePatient):
        client.add_patient(doctor["token"], {"patient_id": "dup", "password": "x"})
    # raw status codes
    resp = requests.get(base_url + "/api/v1/patients", timeout=5)
    assert resp.status_code == 401
    resp = requests.get(base_url + "/api/v1/nowhere", timeout=5)
    assert resp.status_code == 404
    resp = requests.post(base_url + "/api/v1/auth/login",
                         data=b"{not json", timeout=5,
                         headers={"Content-Type": "application/json",
                                  "Content-Length": "9"})
    assert resp.status_code == 400


def test_long_poll_over_http(live_server):
    core, base_url = live_server
    client = HttpServerClient(base_url)
    doctor = client.login(DOCTOR["username"], DOCTOR["password"])
    client.add_patient(doctor["token"], {"patient_id": "p1", "username": "p1",
                                         "password": "pw-p1"})
    patient = client.login("p1", "pw-p1")

    def publish_later():
        time.sleep(0.2)
        client2 = HttpServerClient(base_url)
        client2.enter_data(patient["token"], {"patient_id": "p1", "seq": 0,
                                              "t": 1.0, "activity": 4})

    thread = threading.Thread(target=publish_later)
    started = time.monotonic()
    thread.start()
    result = client.stream_alerts(doctor["token"], since=0, timeout_s=5.0)
    elapsed = time.monotonic() - started
    thread.join()
    assert result["alerts"][0]["cause"] == "rule_fall"
    assert result["next_since"] == 1
    assert elapsed < 4.0  # woke on publish, not on timeout


def test_static_files_served(tmp_path):
    (tmp_path / "index.html").write_text("<html><body>dash</body></html>")
    (tmp_path / "app.js").write_text("console.log('hi')")
    core = HealthServer(ServerConfig(users=[DOCTOR]))
    httpd, base_url = serve_in_thread(core, static_dir=str(tmp_path))
    try:
        resp = requests.get(base_url + "/ui/", timeout=5)
        assert resp.status_code == 200 and b"dash" in resp.content
        resp = requests.get(base_url + "/ui/app.js", timeout=5)
        assert resp.headers["Content-Type"] == "application/javascript"
        resp = requests.get(base_url + "/", timeout=5, allow_redirects=False)
        assert resp.status_code == 302
        resp = requests.get(base_url + "/ui/../secrets", timeout=5)
        assert resp.status_code == 404
    finally:
        httpd.shutdown()
        core.close()


def test_base_node_against_dead_server():
    client = HttpServerClient("http://127.0.0.1:9", timeout_s=0.2)
    node = BaseNode("p1", client, retry=RetryPolicy(max_attempts=2, backoff_ms=1))
    node.token = "irrelevant"
    from uhs.base_node import Observation

    with pytest.raises(ServerUnreachable):
        node.upload_observation(
            Observation(patient_id="p1", t=0.0, activity=1, seq_upload=0), 0.0)
