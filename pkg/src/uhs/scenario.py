"""End-to-end scenario runs: scripted patients drive synthetic sensors
through the TDMA channel into per-patient base nodes, which upload to a
health server (embedded in-process or remote over HTTP).

Time is virtual and advanced by the slot grid, so a run is exactly
reproducible for a fixed script and seed: the report it produces is
byte-identical across repeats.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .base_node import BaseNode, DeltaPolicy, HttpServerClient, RetryPolicy
from .errors import DuplicatePatient, InvalidConfig
from .sensor import AccelSensorNode, ClassifierConfig, PpgSensorNode, pack_frame
from .server import HealthServer, InProcessClient, RiskModel, ServerConfig
from .synth import FALLING, SPO2_MAX, HR_MAX, HR_MIN, SynthConfig, synth_accel, synth_ppg
from .tdma import Channel, ChannelConfig, NodeStats, TdmaSchedule, events_to_csv

DEFAULT_DOCTOR = {"username": "doctor", "password": "change-me"}


@dataclass
class Segment:
    start_s: float
    activity: int
    spo2: int
    hr: float


@dataclass
class PatientScript:
    patient_id: str
    password: str
    timeline: list[Segment]
    username: str | None = None
    name: str = ""
    location: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.username is None:
            self.username = self.patient_id


@dataclass
class ScenarioScript:
    duration_s: float
    seed: int
    patients: list[PatientScript]
    superframe_slots: int = 9
    slot_duration_ms: float = 20.0
    loss_probability: float = 0.0
    policy: DeltaPolicy = field(default_factory=DeltaPolicy)
    fs: float = 50.0
    noise_accel: float = 0.05
    noise_ppg: float = 0.0
    activity_refresh_s: float = 1.0
    vitals_interval_s: float = 2.0
    fusion_window_s: float = 5.0
    upload_rtt_ms: float = 0.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    channel_seed: int | None = None
    doctor_username: str = DEFAULT_DOCTOR["username"]
    doctor_password: str = DEFAULT_DOCTOR["password"]
    model: RiskModel | None = None

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise InvalidConfig("duration_s must be positive")
        if not self.patients:
            raise InvalidConfig("need at least one patient")
        needed_slots = 2 * len(self.patients)
        if needed_slots > self.superframe_slots - 1:
            raise InvalidConfig(
                f"{len(self.patients)} patients need {needed_slots} data slots, "
                f"schedule has {self.superframe_slots - 1}")
        for p_idx, patient in enumerate(self.patients):
            where = f"patients[{p_idx}]"
            if not patient.timeline:
                raise InvalidConfig(f"{where}: timeline is empty")
            if patient.timeline[0].start_s != 0:
                raise InvalidConfig(f"{where}: first segment must start at 0")
            prev = -1.0
            for s_idx, seg in enumerate(patient.timeline):
                at = f"{where}.timeline[{s_idx}]"
                if seg.start_s <= prev:
                    raise InvalidConfig(f"{at}: segments must be ordered and non-overlapping")
                prev = seg.start_s
                if seg.activity not in (1, 2, 3, 4):
                    raise InvalidConfig(f"{at}: activity must be 1..4")
                if not 0 <= seg.spo2 <= SPO2_MAX:
                    raise InvalidConfig(f"{at}: spo2 must be in [0, {SPO2_MAX}]")
                if not HR_MIN <= seg.hr <= HR_MAX:
                    raise InvalidConfig(f"{at}: hr must be in [{HR_MIN}, {HR_MAX}]")
                if seg.start_s >= self.duration_s:
                    raise InvalidConfig(f"{at}: starts after the scenario ends")

    # -- parsing ------------------------------------------------------------

    @classmethod
    def from_yaml(cls, text: str) -> "ScenarioScript":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" (line {mark.line + 1})" if mark else ""
            raise InvalidConfig(f"scenario file is not valid YAML{where}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidConfig("scenario file must contain a mapping")
        return cls.from_dict(data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioScript":
        return cls.from_yaml(Path(path).read_text())

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioScript":
        try:
            patients = []
            for pd in data["patients"]:
                timeline = [Segment(start_s=float(seg["start_s"]),
                                    activity=int(seg["activity"]),
                                    spo2=int(seg["spo2"]), hr=float(seg["hr"]))
                            for seg in pd["timeline"]]
                loc = pd.get("location")
                patients.append(PatientScript(
                    patient_id=str(pd["patient_id"]),
                    username=pd.get("username"),
                    password=str(pd.get("password", f"pw-{pd['patient_id']}")),
                    name=pd.get("name", ""),
                    location=(float(loc["lat"]), float(loc["lon"])) if loc else None,
                    timeline=timeline))
            tdma = data.get("tdma", {})
            channel = data.get("channel", {})
            policy_d = data.get("policy", {})
            synthesis = data.get("synthesis", {})
            upload = data.get("upload", {})
            server = data.get("server", {})
            sensors = data.get("sensors", {})
            model = None
            if server.get("model") is not None:
                model = RiskModel.from_json(server["model"])
            classifier_d = data.get("classifier", {})
            classifier = ClassifierConfig(
                window_len=int(classifier_d.get("window_len", 50)),
                rest_var_max=float(classifier_d.get("rest_var_max", 0.01)),
                walk_xy_var_min=float(classifier_d.get("walk_xy_var_min", 0.02)),
                run_z_var_min=float(classifier_d.get("run_z_var_min", 0.15)),
                fall_z_peak_min=float(classifier_d.get("fall_z_peak_min", 2.5)),
            )
            script = cls(
                duration_s=float(data["duration_s"]),
                seed=int(data.get("seed", 0)),
                patients=patients,
                superframe_slots=int(tdma.get("superframe_slots", 9)),
                slot_duration_ms=float(tdma.get("slot_duration_ms", 20.0)),
                loss_probability=float(channel.get("loss_probability", 0.0)),
                policy=DeltaPolicy(mode=policy_d.get("mode", "exact"),
                                   eps_spo2=float(policy_d.get("eps_spo2", 0.0)),
                                   eps_hr=float(policy_d.get("eps_hr", 0.0))),
                fs=float(sensors.get("fs", 50.0)),
                noise_accel=float(synthesis.get("noise_accel", 0.05)),
                noise_ppg=float(synthesis.get("noise_ppg", 0.0)),
                activity_refresh_s=float(sensors.get("activity_refresh_s", 1.0)),
                vitals_interval_s=float(sensors.get("vitals_interval_s", 2.0)),
                fusion_window_s=float(sensors.get("fusion_window_s", 5.0)),
                upload_rtt_ms=float(upload.get("rtt_ms", 0.0)),
                retry=RetryPolicy(max_attempts=int(upload.get("max_attempts", 3)),
                                  backoff_ms=float(upload.get("backoff_ms", 100.0))),
                classifier=classifier,
                channel_seed=(int(channel["seed"])
                              if channel.get("seed") is not None else None),
                doctor_username=server.get("doctor_username", DEFAULT_DOCTOR["username"]),
                doctor_password=server.get("doctor_password", DEFAULT_DOCTOR["password"]),
                model=model,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad scenario field: {exc!r}") from exc
        script.validate()
        return script

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration_s,
            "seed": self.seed,
            "tdma": {"superframe_slots": self.superframe_slots,
                     "slot_duration_ms": self.slot_duration_ms},
            "channel": {"loss_probability": self.loss_probability},
            "policy": {"mode": self.policy.mode, "eps_spo2": self.policy.eps_spo2,
                       "eps_hr": self.policy.eps_hr},
            "upload": {"rtt_ms": self.upload_rtt_ms},
            "patients": [
                {"patient_id": p.patient_id,
                 "timeline": [{"start_s": s.start_s, "activity": s.activity,
                               "spo2": s.spo2, "hr": s.hr} for s in p.timeline]}
                for p in self.patients
            ],
        }


def _derive_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence((master, *key)).generate_state(1)[0])


@dataclass
class _PatientRig:
    script: PatientScript
    accel_node: AccelSensorNode
    ppg_node: PpgSensorNode
    base_node: BaseNode
    accel_samples: np.ndarray   # columns t, x, y, z
    ppg_samples: np.ndarray     # columns t, red, ir
    cursor_accel: int = 0
    cursor_ppg: int = 0
    uploads: list = field(default_factory=list)   # (virtual_t, Observation)


class ScenarioRunner:
    """Deterministic driver loop; owns the virtual clock."""

    def __init__(self, script: ScenarioScript, server_url: str | None = None,
                 data_dir: str | None = None):
        self.script = script
        self.embedded_server: HealthServer | None = None
        if server_url is None:
            cfg = ServerConfig(users=[{"username": script.doctor_username,
                                       "password": script.doctor_password,
                                       "role": "doctor"}])
            if script.model is not None:
                cfg.model = script.model
            self.embedded_server = HealthServer(cfg, data_dir=data_dir)
            self.client = InProcessClient(self.embedded_server)
        else:
            self.client = HttpServerClient(server_url)

    # -- setup ---------------------------------------------------------------

    def _synth_patient(self, p_idx: int, patient: PatientScript):
        """Concatenate per-segment traces into one sample stream per sensor."""
        script = self.script
        accel_parts, ppg_parts = [], []
        bounds = [seg.start_s for seg in patient.timeline] + [script.duration_s]
        for s_idx, seg in enumerate(patient.timeline):
            seg_dur = bounds[s_idx + 1] - seg.start_s
            acc = synth_accel(SynthConfig(
                duration_s=seg_dur, fs=script.fs,
                seed=_derive_seed(script.seed, p_idx, s_idx, 0),
                noise_sigma=script.noise_accel, activity=seg.activity,
                t0=seg.start_s))
            ppg = synth_ppg(SynthConfig(
                duration_s=seg_dur, fs=script.fs,
                seed=_derive_seed(script.seed, p_idx, s_idx, 1),
                noise_sigma=script.noise_ppg, spo2=seg.spo2, hr=seg.hr,
                t0=seg.start_s))
            accel_parts.append(np.column_stack([acc.t, acc.x, acc.y, acc.z]))
            ppg_parts.append(np.column_stack([ppg.t, ppg.red, ppg.ir]))
        return np.vstack(accel_parts), np.vstack(ppg_parts)

    def _setup(self):
        script = self.script
        schedule = TdmaSchedule(superframe_slots=script.superframe_slots,
                                slot_duration_ms=script.slot_duration_ms)
        channel_seed = (script.channel_seed if script.channel_seed is not None
                        else _derive_seed(script.seed, 0xC0, 0, 0))
        channel = Channel(schedule, ChannelConfig(
            loss_probability=script.loss_probability, seed=channel_seed))
        doctor = self.client.login(script.doctor_username, script.doctor_password)
        rigs: list[_PatientRig] = []
        for p_idx, patient in enumerate(script.patients):
            try:
                self.client.add_patient(doctor["token"], {
                    "patient_id": patient.patient_id, "name": patient.name,
                    "username": patient.username, "password": patient.password,
                })
            except DuplicatePatient:
                pass  # rerun against a persistent server
            accel_id, ppg_id = 2 * p_idx + 1, 2 * p_idx + 2
            schedule.register_node(accel_id)
            schedule.register_node(ppg_id)
            base = BaseNode(patient.patient_id, self.client, policy=script.policy,
                            fusion_window_s=script.fusion_window_s,
                            location=patient.location, retry=script.retry)
            base.login(patient.username, patient.password)
            base.register_sensor(accel_id)
            base.register_sensor(ppg_id)
            accel_samples, ppg_samples = self._synth_patient(p_idx, patient)
            rigs.append(_PatientRig(
                script=patient,
                accel_node=AccelSensorNode(accel_id, cfg=script.classifier,
                                           refresh_s=script.activity_refresh_s),
                ppg_node=PpgSensorNode(ppg_id, fs=script.fs,
                                       interval_s=script.vitals_interval_s),
                base_node=base,
                accel_samples=accel_samples, ppg_samples=ppg_samples))
        return schedule, channel, doctor, rigs

    # -- main loop -------------------------------------------------------------

    def run(self, dump_dir: str | None = None) -> dict:
        script = self.script
        schedule, channel, doctor, rigs = self._setup()
        sf_duration = schedule.superframe_duration_s
        n_superframes = math.ceil(script.duration_s / sf_duration) + 1
        rtt_s = script.upload_rtt_ms / 1000.0

        # One-deep TX buffer per sensor: a fresher reading supersedes an
        # unsent stale one, which is what bounds enqueue-to-opportunity
        # delay at one superframe.
        pending: dict[int, tuple[float, bytes] | None] = {}
        node_rig: dict[int, _PatientRig] = {}
        superseded = 0
        for rig in rigs:
            for node in (rig.accel_node.node_id, rig.ppg_node.node_id):
                pending[node] = None
                node_rig[node] = rig
        slot_owner = {slot: node for node, slot in schedule.assignments.items()}
        stats = {node: NodeStats() for node in schedule.assignments}
        events = []
        max_wait_s = 0.0

        for sf in range(n_superframes):
            for slot in range(schedule.superframe_slots):
                t_slot = schedule.slot_start_s(sf, slot)
                superseded += self._ingest_until(rigs, pending, t_slot)
                offered = {}
                owner = slot_owner.get(slot)
                if owner is not None and pending[owner] is not None:
                    offered[owner] = pending[owner][1]
                event = channel.transmit(sf, slot, offered)
                events.append(event)
                if offered:
                    enq_t, data = pending[owner]
                    pending[owner] = None
                    max_wait_s = max(max_wait_s, t_slot - enq_t)
                    st = stats[owner]
                    st.offered += 1
                    if event.kind == "delivered":
                        st.delivered += 1
                        rig = node_rig[owner]
                        t_upload = t_slot + rtt_s
                        if isinstance(self.client, InProcessClient):
                            self.client.received_t = t_upload
                        obs = rig.base_node.handle_frame(data, t_upload)
                        if obs is not None:
                            rig.uploads.append((t_upload, obs))
                    elif event.kind == "lost":
                        st.lost += 1

        report = self._build_report(schedule, doctor, rigs, stats, max_wait_s,
                                    rtt_s, superseded)
        if dump_dir is not None:
            self._dump(Path(dump_dir), rigs, events)
        if self.embedded_server is not None:
            self.embedded_server.close()
        return report

    def _ingest_until(self, rigs, pending, t_slot: float) -> int:
        superseded = 0
        for rig in rigs:
            acc = rig.accel_samples
            while rig.cursor_accel < len(acc) and acc[rig.cursor_accel, 0] <= t_slot:
                row = acc[rig.cursor_accel]
                rig.cursor_accel += 1
                for frame in rig.accel_node.ingest(row[0], row[1], row[2], row[3]):
                    if pending[rig.accel_node.node_id] is not None:
                        superseded += 1
                    pending[rig.accel_node.node_id] = (t_slot, pack_frame(frame))
            ppg = rig.ppg_samples
            while rig.cursor_ppg < len(ppg) and ppg[rig.cursor_ppg, 0] <= t_slot:
                row = ppg[rig.cursor_ppg]
                rig.cursor_ppg += 1
                for frame in rig.ppg_node.ingest(row[0], row[1], row[2]):
                    if pending[rig.ppg_node.node_id] is not None:
                        superseded += 1
                    pending[rig.ppg_node.node_id] = (t_slot, pack_frame(frame))
        return superseded

    # -- reporting -----------------------------------------------------------

    def _build_report(self, schedule, doctor, rigs, stats, max_wait_s, rtt_s,
                      superseded: int = 0) -> dict:
        script = self.script
        alerts = self.client.get_alerts(doctor["token"])
        budget_s = schedule.superframe_duration_s + rtt_s

        patients = {}
        stored_total = 0
        for rig in rigs:
            pid = rig.script.patient_id
            bstats = rig.base_node.stats
            stored = self.client.get_observations(doctor["token"], pid)
            stored_total += len(stored)
            fused = bstats["fused"]
            patients[pid] = {
                "observations_fused": fused,
                "uploads": bstats["uploaded"],
                "suppressed": bstats["suppressed"],
                "suppression_ratio": (1.0 - bstats["uploaded"] / fused) if fused else 0.0,
                "frames_received": bstats["frames"],
                "stored_on_server": len(stored),
            }

        fall_events = []
        for rig in rigs:
            for seg in rig.script.timeline:
                if seg.activity != FALLING:
                    continue
                onset = seg.start_s
                upload_t = next((t for t, obs in rig.uploads
                                 if obs.activity == FALLING and t >= onset), None)
                matching = [a for a in alerts
                            if a["patient_id"] == rig.script.patient_id
                            and a["cause"] == "rule_fall" and a["t"] >= onset]
                fall_events.append({
                    "patient_id": rig.script.patient_id,
                    "onset_s": onset,
                    "upload_latency_s": None if upload_t is None else upload_t - onset,
                    "alert_id": matching[0]["alert_id"] if matching else None,
                    "alert_latency_s": (matching[0]["t"] - onset) if matching else None,
                    "has_location": bool(matching and matching[0]["location"]),
                    "within_budget": bool(matching and matching[0]["t"] - onset <= budget_s),
                })

        channel_totals = {
            "offered": sum(s.offered for s in stats.values()),
            "delivered": sum(s.delivered for s in stats.values()),
            "lost": sum(s.lost for s in stats.values()),
            "violations": sum(s.violation for s in stats.values()),
            "collisions": sum(s.collision for s in stats.values()),
        }
        return {
            "scenario": script.to_dict(),
            "budget": {"superframe_s": schedule.superframe_duration_s,
                       "upload_rtt_s": rtt_s,
                       "alert_latency_budget_s": budget_s},
            "channel": {
                **channel_totals,
                "superseded_before_tx": superseded,
                "max_frame_wait_s": max_wait_s,
                "per_node": {str(n): vars(s) for n, s in sorted(stats.items())},
            },
            "patients": patients,
            "uploads_total": sum(p["uploads"] for p in patients.values()),
            "stored_on_server_total": stored_total,
            "alerts": alerts,
            "fall_events": fall_events,
        }

    def _dump(self, dump_dir: Path, rigs, events) -> None:
        dump_dir.mkdir(parents=True, exist_ok=True)
        for rig in rigs:
            pid = rig.script.patient_id
            acc = rig.accel_samples
            with open(dump_dir / f"accel_{pid}.csv", "w") as fh:
                fh.write("t,x,y,z\n")
                for row in acc:
                    fh.write(f"{row[0]:.6f},{row[1]:.6f},{row[2]:.6f},{row[3]:.6f}\n")
            ppg = rig.ppg_samples
            with open(dump_dir / f"ppg_{pid}.csv", "w") as fh:
                fh.write("t,red,ir\n")
                for row in ppg:
                    fh.write(f"{row[0]:.6f},{row[1]:.6f},{row[2]:.6f}\n")
        with open(dump_dir / "channel_events.csv", "w") as fh:
            fh.write(events_to_csv(events))


def run_scenario(script: ScenarioScript, server_url: str | None = None,
                 dump_dir: str | None = None, data_dir: str | None = None) -> dict:
    """One-call entry point; returns the run report as a plain dict."""
    return ScenarioRunner(script, server_url=server_url, data_dir=data_dir).run(dump_dir)


def report_to_json(report: dict) -> str:
    """Canonical serialization: stable key order so identical runs give
    identical bytes."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
