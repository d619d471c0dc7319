"""Sensor-side processing: activity classification, vitals extraction,
and the binary frame format spoken over the TDMA link.

The activity classifier is a fixed-priority threshold rule over one
window of accelerometer samples; the vitals pipeline recovers SpO2 from
the AC/DC ratio-of-ratios of the two PPG channels and heart rate from
peak spacing on the infrared channel.
"""

from __future__ import annotations

import math
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import (
    BadMagic,
    CrcMismatch,
    InvalidConfig,
    NegativeRatio,
    NoPeaksFound,
    NonPositiveSignal,
    RejectedInvalid,
    TruncatedFrame,
    UnknownFrameType,
    WindowSizeMismatch,
    WindowTooShort,
)
from .synth import FALLING, RESTING, RUNNING, WALKING, AccelTrace, PpgTrace

QUALITY_OK = "ok"
QUALITY_LOW = "low_confidence"

SPO2_CEIL = 97
HR_BAND = (30, 245)
# Widest heart rate the one-byte offset encoding can carry (offset 255).
HR_ENCODABLE_MAX = 285

MIN_VITALS_WINDOW_S = 4.0
MIN_PEAK_DISTANCE_S = 60.0 / 245.0
PEAK_PROMINENCE_FRACTION = 0.2


# ---------------------------------------------------------------------------
# activity classification


@dataclass
class ClassifierConfig:
    """Window length and decision thresholds for the activity rule."""

    window_len: int = 50
    rest_var_max: float = 0.01
    walk_xy_var_min: float = 0.02
    run_z_var_min: float = 0.15
    fall_z_peak_min: float = 2.5

    def __post_init__(self) -> None:
        if self.window_len < 10:
            raise InvalidConfig(f"window_len must be >= 10, got {self.window_len}")
        for name in ("rest_var_max", "walk_xy_var_min", "run_z_var_min", "fall_z_peak_min"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        # rest_var_max is the sanity ceiling below the walking floor.
        if self.rest_var_max >= self.walk_xy_var_min:
            raise InvalidConfig("rest_var_max must be < walk_xy_var_min")


def classify_activity(window: AccelTrace, cfg: ClassifierConfig) -> int:
    """Map one accelerometer window to a motion-state id 1..4.

    Rules fire in priority order: fall spike, running, walking, resting.
    A z spike always wins so an impact is never masked by oscillation.
    """
    if len(window) != cfg.window_len:
        raise WindowSizeMismatch(
            f"window has {len(window)} samples, classifier expects {cfg.window_len}"
        )
    if np.max(np.abs(window.z)) >= cfg.fall_z_peak_min:
        return FALLING
    var_z = float(np.var(window.z))
    var_xy = float(np.var(window.x) + np.var(window.y))
    if var_z >= cfg.run_z_var_min and var_z > var_xy:
        return RUNNING
    if var_xy >= cfg.walk_xy_var_min:
        return WALKING
    return RESTING


# ---------------------------------------------------------------------------
# vitals extraction


@dataclass
class AcDc:
    ac_red: float
    dc_red: float
    ac_ir: float
    dc_ir: float


def _check_window_span(t: np.ndarray) -> float:
    """Return the sample interval, enforcing the 4 s minimum window."""
    if len(t) < 2:
        raise WindowTooShort("need at least 2 samples")
    dt = float(np.median(np.diff(t)))
    if dt <= 0:
        raise WindowTooShort("timestamps must strictly increase")
    if len(t) < round(MIN_VITALS_WINDOW_S / dt):
        raise WindowTooShort(
            f"window spans {len(t) * dt:.2f} s, need {MIN_VITALS_WINDOW_S:.0f} s"
        )
    return dt


def ac_dc_decompose(window: PpgTrace) -> AcDc:
    """Split each PPG channel into steady (mean) and pulsatile components.

    AC is half the peak-to-peak swing after mean removal, which is exact
    for sinusoidal pulses and avoids any filter-design choices.
    """
    _check_window_span(window.t)
    if np.any(window.red <= 0) or np.any(window.ir <= 0):
        raise NonPositiveSignal("PPG intensities must be positive")
    dc_red = float(np.mean(window.red))
    dc_ir = float(np.mean(window.ir))
    ac_red = float((np.max(window.red) - np.min(window.red)) / 2.0)
    ac_ir = float((np.max(window.ir) - np.min(window.ir)) / 2.0)
    return AcDc(ac_red=ac_red, dc_red=dc_red, ac_ir=ac_ir, dc_ir=dc_ir)


def ratio_to_spo2(r: float) -> int:
    """Empirical calibration line SpO2 = 110 - 25*R, clamped to [0, 97]."""
    if r < 0:
        raise NegativeRatio(f"ratio must be >= 0, got {r}")
    raw = 110.0 - 25.0 * r
    return int(min(max(math.floor(raw + 0.5), 0), SPO2_CEIL))


def estimate_hr(window: PpgTrace) -> float:
    """Estimate heart rate in bpm from peak spacing on the IR channel."""
    dt = _check_window_span(window.t)
    fs = 1.0 / dt
    ir = window.ir - np.mean(window.ir)
    ac_ir = float((np.max(ir) - np.min(ir)) / 2.0)
    # floor keeps the distance filter from discarding legitimate peaks
    # whose spacing quantizes to one sample below the nominal minimum.
    distance = max(1, math.floor(MIN_PEAK_DISTANCE_S * fs))
    peaks, _ = find_peaks(ir, distance=distance, prominence=PEAK_PROMINENCE_FRACTION * ac_ir)
    if len(peaks) < 2:
        raise NoPeaksFound(f"found {len(peaks)} peaks, need at least 2")
    span = float(window.t[peaks[-1]] - window.t[peaks[0]])
    return 60.0 * (len(peaks) - 1) / span


def derive_quality(spo2: int, hr: int, ratio_r: float) -> str:
    """Quality flag as a pure function of the transmitted vitals fields,
    so base node and sensor agree without a flag bit on the wire."""
    if ratio_r <= 0:
        return QUALITY_LOW
    if not HR_BAND[0] <= hr <= HR_BAND[1]:
        return QUALITY_LOW
    return QUALITY_OK


# ---------------------------------------------------------------------------
# readings


def quantize_ratio(r: float) -> float:
    """Snap a ratio to the Q16.16 grid used on the wire."""
    return round(r * 65536.0) / 65536.0


@dataclass(frozen=True)
class VitalsReading:
    """Derived oximeter state. ``ratio_r`` is stored at Q16.16 resolution;
    ``hr`` saturates to the wire-encodable band [30, 285]."""

    t: float
    spo2: int
    hr: int
    ratio_r: float
    quality: str = QUALITY_OK


@dataclass(frozen=True)
class ActivityReading:
    t: float
    activity: int


# ---------------------------------------------------------------------------
# wire frames

FRAME_MAGIC = b"\x57\x48"
FRAME_ACTIVITY = 0x01
FRAME_VITALS = 0x02

_HEADER = struct.Struct(">2sHBHI")  # magic, node_id, frame_type, seq, t_ms
ACTIVITY_FRAME_LEN = _HEADER.size + 1 + 2
VITALS_FRAME_LEN = _HEADER.size + 6 + 2
_MIN_FRAME_LEN = ACTIVITY_FRAME_LEN


def _crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021 if crc & 0x8000 else crc << 1) & 0xFFFF
        table.append(crc)
    return table


_CRC16_TABLE = _crc_table()


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC16_TABLE[(crc >> 8) ^ b]
    return crc


@dataclass(frozen=True)
class SensorFrame:
    """One wire frame. Activity frames carry the motion-state id; vitals
    frames carry spo2, offset-encoded hr, and the Q16.16 ratio."""

    node_id: int
    frame_type: int
    seq: int
    t_ms: int
    activity: int | None = None
    spo2: int | None = None
    hr: int | None = None
    ratio_r: float | None = None

    @classmethod
    def for_activity(cls, node_id: int, seq: int, t: float, activity: int) -> "SensorFrame":
        return cls(node_id=node_id, frame_type=FRAME_ACTIVITY, seq=seq,
                   t_ms=round(t * 1000.0), activity=activity)

    @classmethod
    def for_vitals(cls, node_id: int, seq: int, reading: VitalsReading) -> "SensorFrame":
        return cls(node_id=node_id, frame_type=FRAME_VITALS, seq=seq,
                   t_ms=round(reading.t * 1000.0), spo2=reading.spo2,
                   hr=reading.hr, ratio_r=reading.ratio_r)

    @property
    def t(self) -> float:
        return self.t_ms / 1000.0


def _check_u(value: int, bits: int, name: str) -> None:
    if not isinstance(value, int) or not 0 <= value < (1 << bits):
        raise RejectedInvalid(f"{name} must be a u{bits}, got {value!r}")


def pack_frame(frame: SensorFrame) -> bytes:
    """Serialize a frame, big-endian, with a trailing CRC-16/CCITT-FALSE."""
    _check_u(frame.node_id, 16, "node_id")
    _check_u(frame.seq, 16, "seq")
    _check_u(frame.t_ms, 32, "t_ms")
    head = _HEADER.pack(FRAME_MAGIC, frame.node_id, frame.frame_type, frame.seq, frame.t_ms)
    if frame.frame_type == FRAME_ACTIVITY:
        if frame.activity not in (RESTING, WALKING, RUNNING, FALLING):
            raise RejectedInvalid(f"activity id must be 1..4, got {frame.activity}")
        body = head + struct.pack(">B", frame.activity)
    elif frame.frame_type == FRAME_VITALS:
        if frame.spo2 is None or not 0 <= frame.spo2 <= SPO2_CEIL:
            raise RejectedInvalid(f"spo2 must be in [0, {SPO2_CEIL}], got {frame.spo2}")
        if frame.hr is None or not HR_BAND[0] <= frame.hr <= HR_ENCODABLE_MAX:
            raise RejectedInvalid(
                f"hr must be in [{HR_BAND[0]}, {HR_ENCODABLE_MAX}], got {frame.hr}"
            )
        ratio_raw = round((frame.ratio_r or 0.0) * 65536.0)
        if not 0 <= ratio_raw <= 0xFFFFFFFF:
            raise RejectedInvalid(f"ratio {frame.ratio_r} not representable in Q16.16")
        body = head + struct.pack(">BBI", frame.spo2, frame.hr - HR_BAND[0], ratio_raw)
    else:
        raise UnknownFrameType(f"frame_type 0x{frame.frame_type:02x}")
    return body + struct.pack(">H", crc16_ccitt_false(body))


def peek_frame_header(data: bytes) -> tuple[int, int, int, int]:
    """Read (node_id, frame_type, seq, t_ms) without validating the CRC.
    For log/display use only; real ingestion goes through unpack_frame."""
    if len(data) < _HEADER.size:
        raise TruncatedFrame(f"{len(data)} bytes, header is {_HEADER.size}")
    _, node_id, frame_type, seq, t_ms = _HEADER.unpack(data[: _HEADER.size])
    return node_id, frame_type, seq, t_ms


def unpack_frame(data: bytes) -> SensorFrame:
    """Parse and validate a wire frame.

    The CRC is checked before any field is interpreted, so a corrupted
    type or length byte surfaces as CrcMismatch rather than misrouting
    the decode.
    """
    if len(data) < _MIN_FRAME_LEN:
        raise TruncatedFrame(f"{len(data)} bytes, minimum frame is {_MIN_FRAME_LEN}")
    body, crc_bytes = data[:-2], data[-2:]
    if crc16_ccitt_false(body) != struct.unpack(">H", crc_bytes)[0]:
        raise CrcMismatch("frame checksum does not validate")
    magic, node_id, frame_type, seq, t_ms = _HEADER.unpack(body[: _HEADER.size])
    if magic != FRAME_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    payload = body[_HEADER.size:]
    if frame_type == FRAME_ACTIVITY:
        if len(data) != ACTIVITY_FRAME_LEN:
            raise TruncatedFrame(f"activity frame must be {ACTIVITY_FRAME_LEN} bytes")
        activity = payload[0]
        if activity not in (RESTING, WALKING, RUNNING, FALLING):
            raise RejectedInvalid(f"activity id must be 1..4, got {activity}")
        return SensorFrame(node_id=node_id, frame_type=frame_type, seq=seq,
                           t_ms=t_ms, activity=activity)
    if frame_type == FRAME_VITALS:
        if len(data) != VITALS_FRAME_LEN:
            raise TruncatedFrame(f"vitals frame must be {VITALS_FRAME_LEN} bytes")
        spo2, hr_off, ratio_raw = struct.unpack(">BBI", payload)
        return SensorFrame(node_id=node_id, frame_type=frame_type, seq=seq, t_ms=t_ms,
                           spo2=spo2, hr=hr_off + HR_BAND[0], ratio_r=ratio_raw / 65536.0)
    raise UnknownFrameType(f"frame_type 0x{frame_type:02x}")


# ---------------------------------------------------------------------------
# streaming sensor instances (single-owner; one per simulated device)


@dataclass
class AccelSensorNode:
    """Streams accelerometer samples through a sliding classifier window.

    Evaluating the rule at every sample means a fall spike is flagged the
    moment its sample lands, instead of waiting for a window boundary.
    Emits a frame on every state change plus a periodic refresh.
    """

    node_id: int
    cfg: ClassifierConfig = field(default_factory=ClassifierConfig)
    refresh_s: float = 1.0
    _buf: deque = field(init=False)
    _seq: int = field(default=0, init=False)
    _last_id: int | None = field(default=None, init=False)
    _last_emit_t: float = field(default=-math.inf, init=False)

    def __post_init__(self) -> None:
        self._buf = deque(maxlen=self.cfg.window_len)

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) & 0xFFFF
        return seq

    def ingest(self, t: float, x: float, y: float, z: float) -> list[SensorFrame]:
        self._buf.append((t, x, y, z))
        if len(self._buf) < self.cfg.window_len:
            return []
        arr = np.asarray(self._buf)
        window = AccelTrace(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
        activity = classify_activity(window, self.cfg)
        if activity != self._last_id or t - self._last_emit_t >= self.refresh_s:
            self._last_id = activity
            self._last_emit_t = t
            return [SensorFrame.for_activity(self.node_id, self._next_seq(), t, activity)]
        return []


@dataclass
class PpgSensorNode:
    """Streams PPG samples and emits one vitals frame per interval, computed
    over the trailing 4 s window. The oximeter does all the math on-device
    and transmits only the derived reading."""

    node_id: int
    fs: float = 50.0
    interval_s: float = 2.0
    _buf: deque = field(init=False)
    _seq: int = field(default=0, init=False)
    _last_emit_t: float = field(default=-math.inf, init=False)

    def __post_init__(self) -> None:
        self._buf = deque(maxlen=max(2, round(MIN_VITALS_WINDOW_S * self.fs)))

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) & 0xFFFF
        return seq

    def ingest(self, t: float, red: float, ir: float) -> list[SensorFrame]:
        self._buf.append((t, red, ir))
        if len(self._buf) < self._buf.maxlen or t - self._last_emit_t < self.interval_s:
            return []
        arr = np.asarray(self._buf)
        window = PpgTrace(arr[:, 0], arr[:, 1], arr[:, 2])
        reading = compute_vitals(window)
        if reading is None:
            return []
        self._last_emit_t = t
        return [SensorFrame.for_vitals(self.node_id, self._next_seq(), reading)]


def compute_vitals(window: PpgTrace) -> VitalsReading | None:
    """Full oximeter pipeline over one window; None when the signal has no
    usable pulse (flat IR channel)."""
    comps = ac_dc_decompose(window)
    if comps.ac_ir <= 0:
        return None
    try:
        hr_raw = estimate_hr(window)
    except NoPeaksFound:
        return None
    ratio = quantize_ratio((comps.ac_red / comps.dc_red) / (comps.ac_ir / comps.dc_ir))
    spo2 = ratio_to_spo2(ratio)
    hr = int(min(max(math.floor(hr_raw + 0.5), HR_BAND[0]), HR_ENCODABLE_MAX))
    quality = derive_quality(spo2, hr, ratio)
    return VitalsReading(t=float(window.t[-1]), spo2=spo2, hr=hr,
                         ratio_r=ratio, quality=quality)
