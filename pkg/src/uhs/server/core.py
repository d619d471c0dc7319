"""Health server core: patient registry, authenticated ingestion and
retrieval, alert evaluation, clinician info, appointment slots.

State changes are event-sourced: every mutation is journaled before it
is applied, and applying a journal entry is deterministic, so restoring
from snapshot + journal reproduces the exact same registry, alert set
and counters. Alert evaluation runs on ingestion: hard safety rules
first (a fall must alert even with an untrained model), then the
logistic model threshold.
"""

from __future__ import annotations

import bisect
import threading
import time
from dataclasses import dataclass, field

from ..errors import (
    AlreadyAcknowledged,
    DuplicatePatient,
    InvalidConfig,
    InvalidObservation,
    OverlappingSlot,
    SlotTaken,
    Unauthorized,
    UnknownAlert,
    UnknownPatient,
    UnknownSlot,
)
from .auth import ROLE_DOCTOR, ROLE_PATIENT, AuthManager, TokenInfo, User
from .risk import RiskModel, default_screening_model, risk_score
from .storage import Journal

CAUSE_FALL = "rule_fall"
CAUSE_SPO2 = "rule_spo2_low"
CAUSE_HR = "rule_hr_out_of_band"
CAUSE_MODEL = "model_risk"
ALERT_CAUSES = (CAUSE_FALL, CAUSE_SPO2, CAUSE_HR, CAUSE_MODEL)

VALID_QUALITY = ("ok", "low_confidence")


@dataclass
class ServerConfig:
    """Tunable thresholds, the risk model, and bootstrap accounts."""

    model: RiskModel = field(default_factory=default_screening_model)
    spo2_low: float = 90.0
    hr_low: float = 40.0
    hr_high: float = 180.0
    token_ttl_s: float = 3600.0
    snapshot_every: int = 100
    users: list = field(default_factory=list)

    def rule_params(self) -> dict:
        return {
            "model": self.model.to_json(),
            "spo2_low": self.spo2_low,
            "hr_low": self.hr_low,
            "hr_high": self.hr_high,
        }


class _AlertBus:
    """Global alert stream with a long-poll cursor."""

    def __init__(self):
        self._cond = threading.Condition()
        self.entries: list[dict] = []

    def publish(self, alert: dict) -> None:
        with self._cond:
            self.entries.append(alert)
            self._cond.notify_all()

    def wait(self, since: int, timeout_s: float) -> tuple[list[dict], int]:
        deadline = time.monotonic() + timeout_s
        with self._cond:
            while len(self.entries) <= since:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._cond.wait(remaining)
            return list(self.entries[since:]), len(self.entries)


class HealthServer:
    """One clinic's backend. All registry mutations are serialized under
    a single lock (linearizable per patient trivially follows); the
    long-poll alert stream waits outside that lock."""

    def __init__(self, config: ServerConfig | None = None,
                 data_dir: str | None = None, clock=time.time):
        self.config = config or ServerConfig()
        self._lock = threading.RLock()
        self.auth = AuthManager(token_ttl_s=self.config.token_ttl_s, clock=clock)
        self.patients: dict[str, dict] = {}
        self.slots: dict[str, dict] = {}
        self.alerts_by_id: dict[str, dict] = {}
        self.bus = _AlertBus()
        self._dedup: dict[str, dict[int, int]] = {}
        self.counters = {"server_seq": 0, "alert_n": 0, "slot_n": 0,
                         "info_n": 0, "patient_n": 0}
        self._effective_rules = self.config.rule_params()
        self._mutations_since_snapshot = 0
        self.journal = Journal(data_dir)
        self._restore()

    # ------------------------------------------------------------------
    # persistence

    def _restore(self) -> None:
        snapshot, pending = self.journal.load()
        if snapshot is not None:
            self._load_state(snapshot)
        for entry in pending:
            self._apply(entry["op"], entry["data"])
        fresh = snapshot is None and not pending
        if fresh or self._effective_rules != self.config.rule_params():
            self._mutate("configure", self.config.rule_params())
        for spec in self.config.users:
            if spec["username"] not in self.auth.users:
                self.create_account(spec["username"], spec["password"], spec["role"])

    def _mutate(self, op: str, data: dict) -> None:
        self.journal.append(op, data)
        self._apply(op, data)
        self._mutations_since_snapshot += 1
        if (self.journal.data_dir is not None
                and self._mutations_since_snapshot >= self.config.snapshot_every):
            self.snapshot()

    def _apply(self, op: str, data: dict) -> None:
        getattr(self, "_apply_" + op)(data)

    def snapshot(self) -> None:
        with self._lock:
            self.journal.write_snapshot(self._dump_state())
            self._mutations_since_snapshot = 0

    def close(self) -> None:
        with self._lock:
            self.journal.write_snapshot(self._dump_state())
            self.journal.close()

    def _dump_state(self) -> dict:
        return {
            "patients": self.patients,
            "slots": self.slots,
            "users": [u.to_json() for u in self.auth.users.values()],
            "counters": self.counters,
            "rules": self._effective_rules,
            "alert_stream": [a["alert_id"] for a in self.bus.entries],
        }

    def _load_state(self, state: dict) -> None:
        self.patients = state["patients"]
        self.slots = state["slots"]
        for user_blob in state["users"]:
            self.auth.restore_user(User.from_json(user_blob))
        self.counters = state["counters"]
        self._effective_rules = state["rules"]
        for patient in self.patients.values():
            for alert in patient["alerts"]:
                self.alerts_by_id[alert["alert_id"]] = alert
            self._dedup[patient["patient_id"]] = {
                rec["seq"]: rec["server_seq"] for rec in patient["history"]
            }
        self.bus.entries = [self.alerts_by_id[aid] for aid in state["alert_stream"]]

    # ------------------------------------------------------------------
    # mutation appliers (must be deterministic; shared by live and replay)

    def _apply_configure(self, data: dict) -> None:
        self._effective_rules = data

    def _apply_add_user(self, data: dict) -> None:
        self.auth.restore_user(User.from_json(data))

    def _apply_add_patient(self, data: dict) -> None:
        record = {
            "patient_id": data["patient_id"],
            "demographics": data["demographics"],
            "monitoring_status": "active",
            "history": [],
            "alerts": [],
            "info": {"recommendations": [], "prescriptions": []},
        }
        self.patients[data["patient_id"]] = record
        self._dedup[data["patient_id"]] = {}
        self.auth.restore_user(User.from_json(data["user"]))
        self.counters["patient_n"] = data["patient_n"]

    def _apply_enter_data(self, data: dict) -> None:
        payload = data["payload"]
        pid = payload["patient_id"]
        patient = self.patients[pid]
        self.counters["server_seq"] += 1
        record = dict(payload)
        record["server_seq"] = self.counters["server_seq"]
        record["risk"] = self._score(payload)
        bisect.insort(patient["history"], record,
                      key=lambda r: (r["t"], r["seq"]))
        self._dedup[pid][payload["seq"]] = record["server_seq"]
        cause = self._first_firing_rule(record)
        if cause is not None:
            self.counters["alert_n"] += 1
            alert = {
                "alert_id": f"a{self.counters['alert_n']}",
                "patient_id": pid,
                "t": data.get("received_t") if data.get("received_t") is not None
                     else payload["t"],
                "cause": cause,
                "risk": record["risk"],
                "location": payload.get("location"),
                "state": "open",
            }
            patient["alerts"].append(alert)
            self.alerts_by_id[alert["alert_id"]] = alert
            self.bus.publish(alert)

    def _apply_manual_alert(self, data: dict) -> None:
        self.counters["alert_n"] += 1
        alert = {
            "alert_id": f"a{self.counters['alert_n']}",
            "patient_id": data["patient_id"],
            "t": data["t"],
            "cause": data["cause"],
            "risk": data["risk"],
            "location": data.get("location"),
            "state": "open",
        }
        self.patients[data["patient_id"]]["alerts"].append(alert)
        self.alerts_by_id[alert["alert_id"]] = alert
        self.bus.publish(alert)

    def _apply_ack_alert(self, data: dict) -> None:
        self.alerts_by_id[data["alert_id"]]["state"] = "acknowledged"

    def _apply_upload_info(self, data: dict) -> None:
        patient = self.patients[data["patient_id"]]
        kind = data["kind"]
        if kind in ("recommendation", "prescription"):
            patient["info"][kind + "s"].append(
                {"id": data["id"], "text": data["text"]})
            self.counters["info_n"] = data["info_n"]
        else:
            self.slots[data["slot"]["slot_id"]] = data["slot"]
            self.counters["slot_n"] = data["slot_n"]

    def _apply_book_appointment(self, data: dict) -> None:
        slot = self.slots[data["slot_id"]]
        slot["booked"] = True
        slot["booked_by"] = data["patient_id"]

    # ------------------------------------------------------------------
    # alert rules

    def _score(self, payload: dict) -> float:
        model = RiskModel.from_json(self._effective_rules["model"])
        return risk_score(model, payload)

    def _first_firing_rule(self, record: dict) -> str | None:
        rules = self._effective_rules
        if record["activity"] == 4:
            return CAUSE_FALL
        quality_ok = record.get("quality") == "ok"
        if record.get("spo2") is not None and quality_ok and record["spo2"] < rules["spo2_low"]:
            return CAUSE_SPO2
        if record.get("hr") is not None and quality_ok and not (
                rules["hr_low"] <= record["hr"] <= rules["hr_high"]):
            return CAUSE_HR
        if record["risk"] >= rules["model"]["tau"]:
            return CAUSE_MODEL
        return None

    def _high_risk(self, pid: str) -> bool:
        patient = self.patients[pid]
        if any(a["state"] == "open" for a in patient["alerts"]):
            return True
        if patient["history"]:
            return patient["history"][-1]["risk"] >= self._effective_rules["model"]["tau"]
        return False

    # ------------------------------------------------------------------
    # public API

    def login(self, username: str, password: str) -> dict:
        info = self.auth.authenticate(username, password)
        return {"token": info.token, "role": info.role,
                "patient_id": info.patient_id, "expires_at": info.expires_at}

    def create_account(self, username: str, password: str, role: str,
                       patient_id: str | None = None) -> None:
        with self._lock:
            if username in self.auth.users:
                raise InvalidConfig(f"user {username!r} already exists")
            # journal the salted hash, never the password
            user = AuthManager.build_user(username, password, role, patient_id)
            self._mutate("add_user", user.to_json())

    def add_patient(self, token: str, registration: dict) -> dict:
        with self._lock:
            self.auth.validate(token, roles=(ROLE_DOCTOR,))
            pid = registration.get("patient_id")
            if pid is None:
                pid = f"p{self.counters['patient_n'] + 1:03d}"
            if pid in self.patients:
                raise DuplicatePatient(f"patient {pid!r} already registered")
            username = registration.get("username", pid)
            if username in self.auth.users:
                raise DuplicatePatient(f"account {username!r} already exists")
            password = registration.get("password") or _random_password()
            user = AuthManager.build_user(username, password, ROLE_PATIENT, pid)
            self._mutate("add_patient", {
                "patient_id": pid,
                "demographics": {
                    "name": registration.get("name", ""),
                    "year_of_birth": registration.get("year_of_birth"),
                },
                "user": user.to_json(),
                "patient_n": self.counters["patient_n"] + 1,
            })
            return {"patient_id": pid, "username": username}

    def list_patients(self, token: str) -> list[dict]:
        with self._lock:
            self.auth.validate(token, roles=(ROLE_DOCTOR,))
            return [self.view_patient(token, pid) for pid in sorted(self.patients)]

    def view_patient(self, token: str, patient_id: str) -> dict:
        with self._lock:
            self.auth.validate(token, roles=(ROLE_DOCTOR,))
            patient = self._patient(patient_id)
            history = patient["history"]
            return {
                "patient_id": patient_id,
                "demographics": patient["demographics"],
                "monitoring_status": patient["monitoring_status"],
                "latest_observation": dict(history[-1]) if history else None,
                "open_alerts": [dict(a) for a in patient["alerts"]
                                if a["state"] == "open"],
                "history_stats": {
                    "count": len(history),
                    "t_first": history[0]["t"] if history else None,
                    "t_last": history[-1]["t"] if history else None,
                },
            }

    def enter_data(self, token: str, payload: dict,
                   received_t: float | None = None) -> dict:
        with self._lock:
            info = self.auth.validate(token, roles=(ROLE_PATIENT,))
            payload = _validate_observation(payload)
            pid = payload["patient_id"]
            if pid not in self.patients:
                raise UnknownPatient(f"no patient {pid!r}")
            if info.patient_id != pid:
                raise Unauthorized("token does not own this patient's data")
            seen = self._dedup[pid].get(payload["seq"])
            if seen is not None:
                return {"server_seq": seen, "duplicate": True,
                        "high_risk": self._high_risk(pid)}
            self._mutate("enter_data", {"payload": payload, "received_t": received_t})
            return {"server_seq": self.counters["server_seq"], "duplicate": False,
                    "high_risk": self._high_risk(pid)}

    def collect_data(self, token: str, patient_id: str,
                     t_from: float | None = None, t_to: float | None = None) -> list[dict]:
        with self._lock:
            info = self.auth.validate(token)
            if info.role == ROLE_PATIENT and info.patient_id != patient_id:
                raise Unauthorized("patients may only read their own history")
            patient = self._patient(patient_id)
            out = []
            for rec in patient["history"]:
                if t_from is not None and rec["t"] < t_from:
                    continue
                if t_to is not None and rec["t"] > t_to:
                    continue
                out.append(dict(rec))
            return out

    def upload_info(self, token: str, patient_id: str, info: dict) -> dict:
        with self._lock:
            tok = self.auth.validate(token, roles=(ROLE_DOCTOR,))
            self._patient(patient_id)
            kind = info.get("kind")
            if kind in ("recommendation", "prescription"):
                if not info.get("text"):
                    raise InvalidConfig("text is required")
                new_id = f"i{self.counters['info_n'] + 1}"
                self._mutate("upload_info", {
                    "patient_id": patient_id, "kind": kind, "text": info["text"],
                    "id": new_id, "info_n": self.counters["info_n"] + 1,
                })
                return {"id": new_id}
            if kind == "consult_slot":
                start = float(info["start_time"])
                duration = float(info["duration_s"])
                if duration <= 0:
                    raise InvalidConfig("duration_s must be positive")
                for slot in self.slots.values():
                    if slot["doctor"] != tok.username:
                        continue
                    if start < slot["start_time"] + slot["duration_s"] and \
                            slot["start_time"] < start + duration:
                        raise OverlappingSlot(
                            f"overlaps slot {slot['slot_id']} of {tok.username}")
                slot_id = info.get("slot_id") or f"s{self.counters['slot_n'] + 1}"
                if slot_id in self.slots:
                    raise OverlappingSlot(f"slot id {slot_id!r} already exists")
                self._mutate("upload_info", {
                    "patient_id": patient_id, "kind": kind,
                    "slot": {"slot_id": slot_id, "doctor": tok.username,
                             "patient_id": patient_id, "start_time": start,
                             "duration_s": duration, "booked": False,
                             "booked_by": None},
                    "slot_n": self.counters["slot_n"] + 1,
                })
                return {"id": slot_id}
            raise InvalidConfig(f"unknown info kind {kind!r}")

    def get_info(self, token: str, patient_id: str) -> dict:
        with self._lock:
            info = self.auth.validate(token)
            if info.role == ROLE_PATIENT and info.patient_id != patient_id:
                raise Unauthorized("patients may only read their own info")
            patient = self._patient(patient_id)
            return {
                "recommendations": [dict(r) for r in patient["info"]["recommendations"]],
                "prescriptions": [dict(r) for r in patient["info"]["prescriptions"]],
                "consult_slots": [dict(s) for s in self.slots.values()
                                  if s["patient_id"] == patient_id],
            }

    def book_appointment(self, token: str, slot_id: str,
                         patient_id: str | None = None) -> dict:
        with self._lock:
            info = self.auth.validate(token)
            if info.role == ROLE_PATIENT:
                patient_id = info.patient_id
            elif patient_id is None:
                raise InvalidConfig("doctor bookings must name a patient_id")
            self._patient(patient_id)
            slot = self.slots.get(slot_id)
            if slot is None:
                raise UnknownSlot(f"no slot {slot_id!r}")
            if slot["booked"]:
                raise SlotTaken(f"slot {slot_id!r} is already booked")
            self._mutate("book_appointment",
                         {"slot_id": slot_id, "patient_id": patient_id})
            return dict(self.slots[slot_id])

    def get_alerts(self, token: str, state: str | None = None) -> list[dict]:
        with self._lock:
            info = self.auth.validate(token)
            alerts = self.bus.entries
            if info.role == ROLE_PATIENT:
                alerts = [a for a in alerts if a["patient_id"] == info.patient_id]
            if state is not None:
                alerts = [a for a in alerts if a["state"] == state]
            return [dict(a) for a in alerts]

    def ack_alert(self, token: str, alert_id: str) -> dict:
        with self._lock:
            self.auth.validate(token, roles=(ROLE_DOCTOR,))
            alert = self.alerts_by_id.get(alert_id)
            if alert is None:
                raise UnknownAlert(f"no alert {alert_id!r}")
            if alert["state"] != "open":
                raise AlreadyAcknowledged(f"alert {alert_id!r} already acknowledged")
            self._mutate("ack_alert", {"alert_id": alert_id})
            return dict(alert)

    def create_alert(self, token: str, body: dict) -> dict:
        """Doctor-initiated alert, for conditions spotted by a human."""
        with self._lock:
            self.auth.validate(token, roles=(ROLE_DOCTOR,))
            pid = body.get("patient_id")
            self._patient(pid)
            cause = body.get("cause")
            if cause not in ALERT_CAUSES:
                raise InvalidConfig(f"cause must be one of {ALERT_CAUSES}")
            self._mutate("manual_alert", {
                "patient_id": pid, "cause": cause,
                "t": float(body.get("t", 0.0)),
                "risk": float(body.get("risk", 1.0)),
                "location": body.get("location"),
            })
            return dict(self.bus.entries[-1])

    def wait_alerts(self, token: str, since: int = 0,
                    timeout_s: float = 10.0) -> dict:
        info = self.auth.validate(token)
        alerts, next_since = self.bus.wait(since, timeout_s)
        if info.role == ROLE_PATIENT:
            alerts = [a for a in alerts if a["patient_id"] == info.patient_id]
        return {"alerts": [dict(a) for a in alerts], "next_since": next_since}

    # ------------------------------------------------------------------

    def _patient(self, patient_id: str | None) -> dict:
        patient = self.patients.get(patient_id)
        if patient is None:
            raise UnknownPatient(f"no patient {patient_id!r}")
        return patient


def _random_password() -> str:
    import secrets

    return secrets.token_hex(12)


def _validate_observation(payload: dict) -> dict:
    """Normalize and range-check an upload body. Raises InvalidObservation
    on anything a well-behaved base node would never send."""
    if not isinstance(payload, dict):
        raise InvalidObservation("body must be a JSON object")
    try:
        pid = payload["patient_id"]
        seq = payload["seq"]
        t = float(payload["t"])
        activity = payload["activity"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidObservation(f"missing or malformed field: {exc}") from exc
    if not isinstance(pid, str) or not pid:
        raise InvalidObservation("patient_id must be a non-empty string")
    if not isinstance(seq, int) or seq < 0:
        raise InvalidObservation("seq must be a non-negative integer")
    if not (t >= 0):
        raise InvalidObservation("t must be a non-negative number")
    if activity not in (1, 2, 3, 4):
        raise InvalidObservation(f"activity must be 1..4, got {activity}")
    out = {"patient_id": pid, "seq": seq, "t": t, "activity": activity}
    vitals_fields = [payload.get(k) for k in ("spo2", "hr", "ratio_r", "quality")]
    if any(v is not None for v in vitals_fields):
        if any(v is None for v in vitals_fields):
            raise InvalidObservation("spo2, hr, ratio_r, quality travel together")
        spo2, hr, ratio_r, quality = vitals_fields
        if not isinstance(spo2, int) or not 0 <= spo2 <= 97:
            raise InvalidObservation(f"spo2 must be an int in [0, 97], got {spo2}")
        if not isinstance(hr, int) or not 30 <= hr <= 285:
            raise InvalidObservation(f"hr must be an int in [30, 285], got {hr}")
        ratio_r = float(ratio_r)
        if ratio_r < 0:
            raise InvalidObservation("ratio_r must be >= 0")
        if quality not in VALID_QUALITY:
            raise InvalidObservation(f"quality must be one of {VALID_QUALITY}")
        if quality == "ok" and (hr > 245 or ratio_r <= 0):
            raise InvalidObservation("quality=ok contradicts hr/ratio values")
        out.update(spo2=spo2, hr=hr, ratio_r=ratio_r, quality=quality)
    if payload.get("location") is not None:
        loc = payload["location"]
        try:
            lat, lon = float(loc["lat"]), float(loc["lon"])
            fix_time = float(loc["fix_time"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidObservation(f"malformed location: {exc}") from exc
        if not -90 <= lat <= 90 or not -180 <= lon <= 180:
            raise InvalidObservation("location out of range")
        out["location"] = {"lat": lat, "lon": lon, "fix_time": fix_time}
    return out
