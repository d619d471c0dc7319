"""Deterministic generators for wearable-sensor test signals.

Two families of traces stand in for physical hardware:

* tri-axial accelerometer traces shaped by a motion state
  (1 resting, 2 walking, 3 running, 4 falling), sampled at ``fs`` Hz
  with gravity (+1 g) on the vertical axis while upright;
* two-wavelength PPG traces (red ~660 nm, infrared ~940 nm) whose
  pulsatile/steady amplitude ratio encodes a known SpO2 target and
  whose fundamental frequency encodes a known heart rate.

Every generator is a pure function of its config: the same seed yields
a byte-identical trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, InvalidState

RESTING, WALKING, RUNNING, FALLING = 1, 2, 3, 4
ACTIVITY_NAMES = {1: "resting", 2: "walking", 3: "running", 4: "falling"}

SPO2_MAX = 97
HR_MIN, HR_MAX = 30, 245

# Motion-state waveform conventions. Chosen for clean threshold
# separation; amplitudes are in g-units.
WALK_FREQ_HZ = 2.0
WALK_AMP_G = 0.3
WALK_Z_RIPPLE_G = 0.05
RUN_FREQ_HZ = 3.0
RUN_AMP_G = 0.8
RUN_XY_AMP_G = 0.2
# Fall: impact spike peaking at the first sample of the segment, then a
# blend from upright (z=+1 g) to lying (x=+1 g) between 0.3 s and 1.0 s.
FALL_SPIKE_EXTRA_G = 2.0
FALL_SPIKE_WIDTH_S = 0.05
FALL_SETTLE_START_S = 0.3
FALL_SETTLE_END_S = 1.0

G_CLAMP = 16.0

# PPG carrier: both channels share one DC level and one cardiac phase so
# the AC/DC ratio-of-ratios depends only on the modulation depths.
PPG_DC = 100.0
PPG_IR_MODULATION = 0.04


def spo2_to_ratio(spo2: float) -> float:
    """Inverse of the sensor calibration line: R = (110 - spo2) / 25."""
    return (110.0 - spo2) / 25.0


@dataclass
class SynthConfig:
    """Parameters for one synthetic trace.

    Exactly one of ``activity`` or the (``spo2``, ``hr``) pair selects
    what gets generated. ``noise_sigma`` is in g-units for accelerometer
    traces and intensity units for PPG traces.
    """

    duration_s: float
    fs: float = 50.0
    seed: int = 0
    noise_sigma: float = 0.0
    activity: int | None = None
    spo2: int | None = None
    hr: float | None = None
    t0: float = 0.0

    def validate_common(self) -> None:
        if self.fs <= 0:
            raise InvalidConfig(f"fs must be positive, got {self.fs}")
        if self.duration_s <= 0:
            raise InvalidConfig(f"duration_s must be positive, got {self.duration_s}")
        if self.noise_sigma < 0:
            raise InvalidConfig(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    def validate_activity(self) -> None:
        self.validate_common()
        if self.activity not in (RESTING, WALKING, RUNNING, FALLING):
            raise InvalidState(f"activity id must be 1..4, got {self.activity}")

    def validate_vitals(self) -> None:
        self.validate_common()
        if self.spo2 is None or self.hr is None:
            raise InvalidConfig("vitals synthesis needs both spo2 and hr targets")
        if not 0 <= self.spo2 <= SPO2_MAX:
            raise InvalidConfig(f"spo2 target must be in [0, {SPO2_MAX}], got {self.spo2}")
        if not HR_MIN <= self.hr <= HR_MAX:
            raise InvalidConfig(f"hr target must be in [{HR_MIN}, {HR_MAX}], got {self.hr}")

    @property
    def n_samples(self) -> int:
        return math.floor(self.fs * self.duration_s)


@dataclass
class AccelTrace:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def slice(self, i: int, j: int) -> "AccelTrace":
        return AccelTrace(self.t[i:j], self.x[i:j], self.y[i:j], self.z[i:j])

    def to_csv(self) -> str:
        lines = ["t,x,y,z"]
        for k in range(len(self.t)):
            lines.append(f"{self.t[k]:.6f},{self.x[k]:.6f},{self.y[k]:.6f},{self.z[k]:.6f}")
        return "\n".join(lines) + "\n"


@dataclass
class PpgTrace:
    t: np.ndarray
    red: np.ndarray
    ir: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def slice(self, i: int, j: int) -> "PpgTrace":
        return PpgTrace(self.t[i:j], self.red[i:j], self.ir[i:j])

    def to_csv(self) -> str:
        lines = ["t,red,ir"]
        for k in range(len(self.t)):
            lines.append(f"{self.t[k]:.6f},{self.red[k]:.6f},{self.ir[k]:.6f}")
        return "\n".join(lines) + "\n"


def synth_accel(cfg: SynthConfig) -> AccelTrace:
    """Generate an accelerometer trace for the configured motion state.

    Shape contract per state:
      1  z ~ +1 g, x and y ~ 0 (gravity only)
      2  ~2 Hz, ~0.3 g oscillation dominantly on x/y
      3  ~3 Hz, ~0.8 g oscillation dominantly on z
      4  z spike >= 2.5 g at the segment start, then orientation change
         (z settles near 0 g, x near +1 g)
    """
    cfg.validate_activity()
    n = cfg.n_samples
    rng = np.random.default_rng(cfg.seed)
    tau = np.arange(n) / cfg.fs
    t = cfg.t0 + tau

    if cfg.activity == RESTING:
        x = np.zeros(n)
        y = np.zeros(n)
        z = np.ones(n)
    elif cfg.activity == WALKING:
        w = 2 * np.pi * WALK_FREQ_HZ * tau
        x = WALK_AMP_G * np.sin(w)
        y = WALK_AMP_G * np.sin(w + np.pi / 2)
        z = 1.0 + WALK_Z_RIPPLE_G * np.sin(w)
    elif cfg.activity == RUNNING:
        w = 2 * np.pi * RUN_FREQ_HZ * tau
        x = RUN_XY_AMP_G * np.sin(w)
        y = RUN_XY_AMP_G * np.sin(w + np.pi / 2)
        z = 1.0 + RUN_AMP_G * np.sin(w)
    else:
        spike = FALL_SPIKE_EXTRA_G * np.exp(-(tau**2) / (2 * FALL_SPIKE_WIDTH_S**2))
        settle = np.clip(
            (tau - FALL_SETTLE_START_S) / (FALL_SETTLE_END_S - FALL_SETTLE_START_S), 0.0, 1.0
        )
        z = (1.0 - settle) + spike
        x = settle.copy()
        y = np.zeros(n)

    if cfg.noise_sigma > 0:
        x = x + rng.normal(0.0, cfg.noise_sigma, n)
        y = y + rng.normal(0.0, cfg.noise_sigma, n)
        z = z + rng.normal(0.0, cfg.noise_sigma, n)

    x = np.clip(x, -G_CLAMP, G_CLAMP)
    y = np.clip(y, -G_CLAMP, G_CLAMP)
    z = np.clip(z, -G_CLAMP, G_CLAMP)
    return AccelTrace(t, x, y, z)


def synth_ppg(cfg: SynthConfig) -> PpgTrace:
    """Generate a two-channel PPG trace with a known embedded SpO2/HR.

    Each channel is DC * (1 + m * sin(2*pi*hr/60 * t)) plus noise. The
    modulation depths satisfy m_red / m_ir = (110 - spo2) / 25, so at
    zero noise an AC/DC decomposition recovers the target ratio exactly.
    """
    cfg.validate_vitals()
    n = cfg.n_samples
    rng = np.random.default_rng(cfg.seed)
    tau = np.arange(n) / cfg.fs
    t = cfg.t0 + tau

    f_hz = cfg.hr / 60.0
    m_ir = PPG_IR_MODULATION
    m_red = spo2_to_ratio(cfg.spo2) * m_ir
    carrier = np.sin(2 * np.pi * f_hz * tau)
    red = PPG_DC * (1.0 + m_red * carrier)
    ir = PPG_DC * (1.0 + m_ir * carrier)

    if cfg.noise_sigma > 0:
        red = red + rng.normal(0.0, cfg.noise_sigma, n)
        ir = ir + rng.normal(0.0, cfg.noise_sigma, n)

    # Light intensities are strictly positive by construction; keep the
    # invariant even under absurd noise settings.
    tiny = np.finfo(float).tiny
    red = np.maximum(red, tiny)
    ir = np.maximum(ir, tiny)
    return PpgTrace(t, red, ir)
