"""The gateway between body sensors and the health server.

A BaseNode owns one patient's sensor fleet: it unpacks delivered frames,
fuses the freshest activity and vitals into observations, and uploads an
observation only when it differs from the last one sent (delta
suppression, the comparison step that keeps transmission cost down).
Falls and server-flagged high-risk patients get a location fix attached
to the upload.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import requests

from .errors import (
    FrameError,
    InvalidConfig,
    NoActivityData,
    ServerUnreachable,
    error_by_name,
)
from .sensor import (
    FRAME_ACTIVITY,
    FRAME_VITALS,
    SensorFrame,
    VitalsReading,
    derive_quality,
    unpack_frame,
)
from .synth import FALLING

DELTA_EXACT = "exact"
DELTA_THRESHOLDED = "thresholded"


@dataclass(frozen=True)
class GeoLocation:
    lat: float
    lon: float
    fix_time: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidConfig(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidConfig(f"longitude out of range: {self.lon}")

    def to_json(self) -> dict:
        return {"lat": self.lat, "lon": self.lon, "fix_time": self.fix_time}


@dataclass(frozen=True)
class Observation:
    """One fused, upload-ready patient record."""

    patient_id: str
    t: float
    activity: int
    seq_upload: int
    vitals: VitalsReading | None = None
    location: GeoLocation | None = None

    def to_payload(self) -> dict:
        payload = {
            "patient_id": self.patient_id,
            "seq": self.seq_upload,
            "t": self.t,
            "activity": self.activity,
        }
        if self.vitals is not None:
            payload.update(
                spo2=self.vitals.spo2,
                hr=self.vitals.hr,
                ratio_r=self.vitals.ratio_r,
                quality=self.vitals.quality,
            )
        if self.location is not None:
            payload["location"] = self.location.to_json()
        return payload


@dataclass
class DeltaPolicy:
    """When is a new observation 'different enough' to upload.

    Exact mode compares every vitals field; thresholded mode tolerates
    spo2/hr wiggle within the eps bounds. An activity change or a change
    in vitals presence always triggers, in either mode.
    """

    mode: str = DELTA_EXACT
    eps_spo2: float = 0.0
    eps_hr: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in (DELTA_EXACT, DELTA_THRESHOLDED):
            raise InvalidConfig(f"unknown delta mode {self.mode!r}")
        if self.eps_spo2 < 0 or self.eps_hr < 0:
            raise InvalidConfig("eps values must be >= 0")


def fuse_observation(
    activity_readings: list[tuple[float, int]],
    vitals_readings: list[VitalsReading],
    window_s: float,
    patient_id: str,
    seq_upload: int,
) -> Observation:
    """Latest-value-wins fusion over the trailing window.

    The window is anchored at the freshest frame of either kind; vitals
    older than the window are treated as absent.
    """
    if not activity_readings:
        raise NoActivityData(f"no activity frames for patient {patient_id}")
    t_act, activity = max(activity_readings, key=lambda r: r[0])
    latest = t_act
    vitals = None
    if vitals_readings:
        candidate = max(vitals_readings, key=lambda r: r.t)
        latest = max(latest, candidate.t)
        if candidate.t > latest - window_s:
            vitals = candidate
    if latest - t_act >= window_s:
        raise NoActivityData(f"activity data stale beyond fusion window for {patient_id}")
    return Observation(patient_id=patient_id, t=latest, activity=activity,
                       seq_upload=seq_upload, vitals=vitals)


def delta_gate(last_sent: Observation | None, nxt: Observation, policy: DeltaPolicy) -> bool:
    """True when `nxt` must be uploaded given what the server last saw."""
    if last_sent is None:
        return True
    if nxt.activity != last_sent.activity:
        return True
    a, b = last_sent.vitals, nxt.vitals
    if (a is None) != (b is None):
        return True
    if a is None or b is None:
        return False
    if policy.mode == DELTA_EXACT:
        return (a.spo2, a.hr, a.ratio_r, a.quality) != (b.spo2, b.hr, b.ratio_r, b.quality)
    return abs(b.spo2 - a.spo2) > policy.eps_spo2 or abs(b.hr - a.hr) > policy.eps_hr


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    backoff_ms: float = 100.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise InvalidConfig("max_attempts must be >= 1")


class HttpServerClient:
    """requests-backed client for the health server's JSON API.

    Server-side errors come back as {"error": <class name>, "message": ...}
    and are re-raised as the matching exception type, so callers see the
    same error taxonomy whether the server is embedded or remote.
    """

    def __init__(self, base_url: str, timeout_s: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._session = requests.Session()

    def _request(self, method: str, path: str, token: str | None = None,
                 json_body: dict | None = None, params: dict | None = None) -> dict:
        headers = {}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self._session.request(
                method, self.base_url + path, json=json_body, params=params,
                headers=headers, timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise ServerUnreachable(f"{method} {path}: {exc}") from exc
        if resp.status_code >= 400:
            try:
                body = resp.json()
            except ValueError:
                body = {"error": "UhsError", "message": resp.text}
            raise error_by_name(body.get("error", "UhsError"))(body.get("message", ""))
        return resp.json()

    # -- auth / registry -------------------------------------------------
    def login(self, username: str, password: str) -> dict:
        return self._request("POST", "/api/v1/auth/login",
                             json_body={"username": username, "password": password})

    def add_patient(self, token: str, registration: dict) -> dict:
        return self._request("POST", "/api/v1/patients", token, registration)

    def list_patients(self, token: str) -> list:
        return self._request("GET", "/api/v1/patients", token)["patients"]

    def view_patient(self, token: str, patient_id: str) -> dict:
        return self._request("GET", f"/api/v1/patients/{patient_id}", token)

    # -- data plane -------------------------------------------------------
    def enter_data(self, token: str, payload: dict) -> dict:
        return self._request("POST", "/api/v1/observations", token, payload)

    def get_observations(self, token: str, patient_id: str,
                         t_from: float | None = None, t_to: float | None = None) -> list:
        params = {}
        if t_from is not None:
            params["from"] = t_from
        if t_to is not None:
            params["to"] = t_to
        return self._request("GET", f"/api/v1/patients/{patient_id}/observations",
                             token, params=params)["observations"]

    # -- info / appointments ----------------------------------------------
    def get_info(self, token: str, patient_id: str) -> dict:
        return self._request("GET", f"/api/v1/patients/{patient_id}/info", token)

    def upload_info(self, token: str, patient_id: str, info: dict) -> dict:
        return self._request("POST", f"/api/v1/patients/{patient_id}/info", token, info)

    def book_appointment(self, token: str, slot_id: str,
                         patient_id: str | None = None) -> dict:
        body = {"slot_id": slot_id}
        if patient_id is not None:
            body["patient_id"] = patient_id
        return self._request("POST", "/api/v1/appointments", token, body)

    # -- alerts -------------------------------------------------------------
    def get_alerts(self, token: str, state: str | None = None) -> list:
        params = {"state": state} if state else None
        return self._request("GET", "/api/v1/alerts", token, params=params)["alerts"]

    def ack_alert(self, token: str, alert_id: str) -> dict:
        return self._request("POST", f"/api/v1/alerts/{alert_id}/ack", token, {})

    def create_alert(self, token: str, body: dict) -> dict:
        return self._request("POST", "/api/v1/alerts", token, body)

    def stream_alerts(self, token: str, since: int = 0, timeout_s: float = 10.0) -> dict:
        return self._request("GET", "/api/v1/stream/alerts", token,
                             params={"since": since, "timeout_s": timeout_s})


class BaseNode:
    """Gateway instance for a single patient.

    Single-owner: frames must be handed to `handle_frame` from one
    driving context. `upload_observation` is at-least-once with server
    dedup on (patient_id, seq), so a retried send is harmless.
    """

    def __init__(
        self,
        patient_id: str,
        client,
        policy: DeltaPolicy | None = None,
        fusion_window_s: float = 5.0,
        location: tuple[float, float] | None = None,
        retry: RetryPolicy | None = None,
    ):
        self.patient_id = patient_id
        self.client = client
        self.policy = policy or DeltaPolicy()
        self.fusion_window_s = fusion_window_s
        self.location_fix = location
        self.retry = retry or RetryPolicy()
        self.token: str | None = None
        self.sensor_ids: set[int] = set()
        self.high_risk = False
        self.last_sent: Observation | None = None
        self._activity_buf: list[tuple[float, int]] = []
        self._vitals_buf: list[VitalsReading] = []
        self._seq = 0
        self.stats = {"frames": 0, "frame_errors": 0, "fused": 0,
                      "uploaded": 0, "suppressed": 0}

    def login(self, username: str, password: str) -> None:
        self.token = self.client.login(username, password)["token"]

    def register_sensor(self, node_id: int) -> None:
        self.sensor_ids.add(node_id)

    def _prune(self, now: float) -> None:
        horizon = now - self.fusion_window_s
        self._activity_buf = [r for r in self._activity_buf if r[0] > horizon]
        self._vitals_buf = [r for r in self._vitals_buf if r.t > horizon]

    def handle_frame(self, data: bytes, received_t: float) -> Observation | None:
        """Ingest one delivered frame; returns the observation if this
        frame's fusion result passed the delta gate and was uploaded."""
        self.stats["frames"] += 1
        try:
            frame = unpack_frame(data)
        except FrameError:
            self.stats["frame_errors"] += 1
            return None
        if frame.node_id not in self.sensor_ids:
            return None
        if frame.frame_type == FRAME_ACTIVITY:
            self._activity_buf.append((frame.t, frame.activity))
        elif frame.frame_type == FRAME_VITALS:
            self._vitals_buf.append(
                VitalsReading(t=frame.t, spo2=frame.spo2, hr=frame.hr,
                              ratio_r=frame.ratio_r,
                              quality=_wire_quality(frame)))
        self._prune(frame.t)
        try:
            obs = fuse_observation(self._activity_buf, self._vitals_buf,
                                   self.fusion_window_s, self.patient_id, self._seq)
        except NoActivityData:
            return None
        self._seq += 1
        self.stats["fused"] += 1
        if not delta_gate(self.last_sent, obs, self.policy):
            self.stats["suppressed"] += 1
            return None
        uploaded = self.upload_observation(obs, received_t)
        return uploaded

    def upload_observation(self, obs: Observation, received_t: float) -> Observation:
        """Upload with retry; attaches the location fix for falls and for
        patients the server currently flags as high risk."""
        if self.token is None:
            raise InvalidConfig("base node has no auth token; call login() first")
        if obs.activity == FALLING or self.high_risk:
            if self.location_fix is not None:
                obs = replace(obs, location=GeoLocation(
                    lat=self.location_fix[0], lon=self.location_fix[1],
                    fix_time=received_t))
        payload = obs.to_payload()
        last_exc: Exception | None = None
        for attempt in range(self.retry.max_attempts):
            try:
                ack = self.client.enter_data(self.token, payload)
                self.high_risk = bool(ack.get("high_risk", False))
                self.last_sent = obs
                self.stats["uploaded"] += 1
                return obs
            except ServerUnreachable as exc:
                last_exc = exc
                if attempt + 1 < self.retry.max_attempts:
                    time.sleep(self.retry.backoff_ms / 1000.0 * (2**attempt))
        raise ServerUnreachable(
            f"upload failed after {self.retry.max_attempts} attempts"
        ) from last_exc

    def sync_info(self) -> dict:
        """Pull the patient's recommendations, prescriptions and slots."""
        if self.token is None:
            raise InvalidConfig("base node has no auth token; call login() first")
        return self.client.get_info(self.token, self.patient_id)

    def book_appointment(self, slot_id: str) -> dict:
        if self.token is None:
            raise InvalidConfig("base node has no auth token; call login() first")
        return self.client.book_appointment(self.token, slot_id)


def _wire_quality(frame: SensorFrame) -> str:
    return derive_quality(frame.spo2, frame.hr, frame.ratio_r)
