"""Tunable-lens drive waveforms, the waveform database, and projector
illumination scheduling.

The lens is driven with a 60 Hz sinusoid between two grid voltages.  A
synthetic response model (static voltage-to-power map, first-order lag,
small fixed harmonic distortion) stands in for a photodiode measurement of
the real device: the stored database format, the narrowest-covering-wave
search, the phase-window lookup, and the trigger-delay compensation are
identical whether the samples come from this model or from hardware.

Times inside a schedule are integer microseconds end to end, so the
0.46 ms trigger lead is exact and the JSON export is lossless.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .blur_range import min_blur_power
from .errors import (DomainError, RangeUnachievableError, ValidationError,
                     WindowTooNarrowError)
from .optics import EyeModel
from .units import from_diopters, to_diopters

SWEEP_FREQUENCY_HZ = 60.0
PROJECTOR_FRAME_US = 1000
TRIGGER_DELAY_US = 460
VOLTAGE_LIMIT = 0.07
VOLTAGE_STEP_MV = 2

#: default half-width (mm^-1) of a usable power window; 5e-5 = 0.05 D
DEFAULT_WINDOW_TOL = 5e-5

#: default sweep-range headroom above the largest required power (0.2 D)
DEFAULT_ALPHA = 2e-4

SCHEDULE_FORMAT_VERSION = 1
DB_MAGIC = b"FSWAVEDB"
DB_FORMAT_VERSION = 1


def voltage_grid() -> np.ndarray:
    """The 71 drive voltages: -0.07 V to 0.07 V in 0.002 V steps."""
    return np.arange(-70, 71, VOLTAGE_STEP_MV) / 1000.0


@dataclass(frozen=True)
class EtlModel:
    """Synthetic tunable-lens response parameters.

    ``full_scale_voltage`` drives ``full_scale_power`` through the static
    map; the dynamic response is a first-order lag of time constant
    ``time_constant`` plus bounded second/third-harmonic distortion
    proportional to the drive amplitude, which keeps the periodic output
    visibly non-sinusoidal like a real polymer lens.
    """

    full_scale_voltage: float = VOLTAGE_LIMIT
    full_scale_power: float = 0.01          # mm^-1 (10 D) at +0.07 V
    time_constant: float = 0.0015           # s
    second_harmonic: float = 0.035
    second_harmonic_phase: float = 0.0
    third_harmonic: float = 0.015
    third_harmonic_phase: float = 1.1
    sample_resolution: float = 1e-5         # s, nominal
    frequency: float = SWEEP_FREQUENCY_HZ

    def static_power(self, volts: float) -> float:
        """Steady-state power (mm^-1) for a DC drive voltage."""
        return (volts / self.full_scale_voltage) * self.full_scale_power

    @property
    def n_samples(self) -> int:
        return round(1.0 / (self.frequency * self.sample_resolution))


@dataclass(frozen=True)
class InputWave:
    """One drive wave: a sinusoid spanning [v_min, v_max] volts at 60 Hz.

    v_min == v_max is the degenerate flat drive (no sweep).
    """

    v_min: float
    v_max: float
    frequency: float = SWEEP_FREQUENCY_HZ

    def __post_init__(self):
        if not (math.isfinite(self.v_min) and math.isfinite(self.v_max)):
            raise ValidationError("drive voltages must be finite")
        if self.v_min > self.v_max:
            raise ValidationError(f"v_min {self.v_min} > v_max {self.v_max}")
        lim = VOLTAGE_LIMIT + 1e-12
        if abs(self.v_min) > lim or abs(self.v_max) > lim:
            raise ValidationError(
                f"drive voltages must lie in [-{VOLTAGE_LIMIT}, {VOLTAGE_LIMIT}] V")

    @property
    def key(self) -> tuple[int, int]:
        """Integer-millivolt key, exact for grid voltages."""
        return (round(self.v_min * 1000), round(self.v_max * 1000))

    @property
    def is_flat(self) -> bool:
        return self.v_min == self.v_max


class OutputWaveform:
    """One period of the lens's optical-power response, uniformly sampled.

    ``n_samples * sample_period`` equals the period exactly by
    construction (the nominal 10 us resolution is rounded to make the
    sample count integral).
    """

    def __init__(self, powers: np.ndarray, sample_period: float):
        powers = np.asarray(powers, dtype=np.float64)
        if powers.ndim != 1 or powers.size < 2:
            raise ValidationError("waveform needs a 1-D sample array")
        if not math.isfinite(sample_period) or sample_period <= 0:
            raise ValidationError(f"bad sample period {sample_period}")
        self.powers = powers
        self.sample_period = float(sample_period)

    @property
    def n_samples(self) -> int:
        return self.powers.size

    @property
    def period(self) -> float:
        return self.n_samples * self.sample_period

    @property
    def sample_times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.sample_period

    @property
    def phases(self) -> np.ndarray:
        """Sample phases in [0, 1)."""
        return np.arange(self.n_samples) / self.n_samples

    def power_min(self) -> float:
        return float(self.powers.min())

    def power_max(self) -> float:
        return float(self.powers.max())

    def value_at(self, t) -> np.ndarray | float:
        """Power at time(s) ``t`` (s), periodic linear interpolation."""
        t = np.asarray(t, dtype=np.float64)
        pos = np.mod(t, self.period) / self.sample_period
        i0 = np.floor(pos).astype(np.int64) % self.n_samples
        i1 = (i0 + 1) % self.n_samples
        frac = pos - np.floor(pos)
        out = self.powers[i0] * (1.0 - frac) + self.powers[i1] * frac
        return float(out) if out.ndim == 0 else out


def synth_etl_response(wave: InputWave, model: EtlModel | None = None) -> OutputWaveform:
    """Deterministic synthetic periodic steady-state response to a drive wave.

    The static map is applied to the sinusoid, fixed-phase harmonic terms
    are added in proportion to the drive amplitude, and the first-order
    lag is applied per harmonic in the frequency domain (exact for the
    periodic steady state; DC passes unchanged, so a flat drive yields a
    flat response with no transient).
    """
    model = model or EtlModel()
    n = model.n_samples
    period = 1.0 / model.frequency
    dt = period / n

    if wave.is_flat:
        powers = np.full(n, model.static_power(wave.v_min))
        return OutputWaveform(powers, dt)

    t = np.arange(n) * dt
    omega = 2.0 * math.pi * model.frequency
    offset = 0.5 * (wave.v_max + wave.v_min)
    amp_v = 0.5 * (wave.v_max - wave.v_min)
    drive = offset - amp_v * np.cos(omega * t)

    p = (drive / model.full_scale_voltage) * model.full_scale_power
    amp_p = (amp_v / model.full_scale_voltage) * model.full_scale_power
    p = p + amp_p * (
        model.second_harmonic * np.cos(2 * omega * t - model.second_harmonic_phase)
        + model.third_harmonic * np.cos(3 * omega * t - model.third_harmonic_phase))

    freqs = np.fft.rfftfreq(n, d=dt)
    lag = 1.0 / (1.0 + 1j * 2.0 * math.pi * freqs * model.time_constant)
    powers = np.fft.irfft(np.fft.rfft(p) * lag, n)
    return OutputWaveform(powers, dt)


class WaveformDb:
    """Measured (here: synthesized) one-period responses keyed by drive wave."""

    def __init__(self, model: EtlModel, entries: list[tuple[InputWave, OutputWaveform]],
                 grid: np.ndarray | None = None):
        self.model = model
        self.entries = entries
        self.grid = voltage_grid() if grid is None else np.asarray(grid, dtype=np.float64)
        self._by_key = {wave.key: (wave, wf) for wave, wf in entries}
        if len(self._by_key) != len(entries):
            raise ValidationError("duplicate (v_min, v_max) entries in waveform db")

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, v_min: float, v_max: float) -> tuple[InputWave, OutputWaveform]:
        key = (round(v_min * 1000), round(v_max * 1000))
        try:
            return self._by_key[key]
        except KeyError:
            raise ValidationError(f"no waveform for drive ({v_min} V, {v_max} V)") from None


def build_db(grid: np.ndarray | None = None, model: EtlModel | None = None) -> WaveformDb:
    """Synthesize one response per unordered voltage pair (v_min <= v_max).

    The default 71-point grid yields 2556 entries.  Construction is
    deterministic; entries are ordered by (v_min, v_max).
    """
    model = model or EtlModel()
    grid = voltage_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    entries = []
    for i, v_min in enumerate(grid):
        for v_max in grid[i:]:
            wave = InputWave(float(v_min), float(v_max), model.frequency)
            entries.append((wave, synth_etl_response(wave, model)))
    return WaveformDb(model, entries, grid)


def select_wave(db: WaveformDb, target: tuple[float, float]) -> tuple[InputWave, OutputWaveform]:
    """Narrowest-output-range wave whose response covers ``target``.

    Among covering entries the output span is minimized; ties break on the
    smaller drive span |v_max - v_min|, then lexicographically on
    (v_min, v_max).  The degenerate target (p, p) is allowed and is served
    by a flat drive when one lands on the power exactly.
    """
    p_low, p_high = target
    if not (math.isfinite(p_low) and math.isfinite(p_high)):
        raise DomainError("target powers must be finite")
    if p_low > p_high:
        raise DomainError(f"target range is inverted: [{p_low}, {p_high}]")
    if not db.entries:
        raise RangeUnachievableError("waveform database is empty")

    best = None
    best_rank = None
    for wave, wf in db.entries:
        lo, hi = wf.power_min(), wf.power_max()
        if lo <= p_low and hi >= p_high:
            rank = (hi - lo, wave.v_max - wave.v_min, wave.v_min, wave.v_max)
            if best_rank is None or rank < best_rank:
                best_rank = rank
                best = (wave, wf)
    if best is None:
        raise RangeUnachievableError(
            f"no stored wave covers [{to_diopters(p_low):.3f}, "
            f"{to_diopters(p_high):.3f}] D")
    return best


def phase_windows(wf: OutputWaveform, target_power: float, tol: float) -> list[tuple[float, float]]:
    """Maximal time intervals in one period where |power - target| <= tol.

    Intervals are sample-grid aligned, returned as (start, end) seconds
    with 0 <= start < period and end <= start + period; a run that crosses
    the period boundary is merged into a single interval whose end exceeds
    the period.  ``tol`` may be zero, in which case only exact sample
    matches survive (possibly zero-length intervals).
    """
    if tol < 0:
        raise DomainError(f"tolerance must be >= 0, got {tol}")
    ok = np.abs(wf.powers - target_power) <= tol
    if not ok.any():
        return []
    if ok.all():
        return [(0.0, wf.period)]

    padded = np.concatenate(([False], ok, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0] - 1  # inclusive sample index
    dt = wf.sample_period
    runs = [(int(s), int(e)) for s, e in zip(starts, ends)]

    if ok[0] and ok[-1] and len(runs) > 1:
        # wrap the final run around into the first
        first = runs.pop(0)
        last = runs.pop()
        merged = (last[0], first[1] + wf.n_samples)
        runs.append(merged)
        runs.sort()
    return [(s * dt, e * dt) for s, e in runs]


@dataclass(frozen=True)
class SweepPlan:
    """Sweep range plus the drive wave chosen to realize it.

    ``p_s`` is the largest of the per-object minimum blur powers; the
    sweep spans [0, p_s + alpha].
    """

    p_s: float
    alpha: float
    chosen_wave: InputWave
    waveform: OutputWaveform
    min_powers: dict[str, float] = field(default_factory=dict)
    p_low: float = 0.0

    @property
    def p_high(self) -> float:
        return self.p_s + self.alpha


def plan_sweep(scene, eye: EyeModel, vertex_distance: float, alpha: float,
               db: WaveformDb) -> SweepPlan:
    """Pick the sweep range for a scene and select its drive wave.

    For every blur-labeled layer the minimum power that guarantees blur at
    its distance is computed; the largest of those, plus the headroom
    ``alpha``, caps the sweep.  Focus-labeled layers need no power: they
    are lit at zero.
    """
    targets = scene.blur_targets()
    if not targets:
        raise DomainError("nothing to blur: no blur-labeled layer in the scene")
    min_powers = {layer_id: min_blur_power(eye, vertex_distance, distance)
                  for layer_id, distance in targets}
    p_s = max(min_powers.values())
    wave, wf = select_wave(db, (0.0, p_s + alpha))
    return SweepPlan(p_s=p_s, alpha=alpha, chosen_wave=wave, waveform=wf,
                     min_powers=min_powers)


@dataclass(frozen=True)
class Slot:
    """One triggered projector frame: mask ``mask_id`` is lit during
    [t_start_us, t_end_us] while the lens is near ``target_power``."""

    slot_id: str
    mask_id: str
    target_power: float       # mm^-1
    t_start_us: int
    t_end_us: int
    trigger_us: int

    @property
    def t_start(self) -> float:
        return self.t_start_us * 1e-6

    @property
    def t_end(self) -> float:
        return self.t_end_us * 1e-6

    @property
    def trigger_time(self) -> float:
        return self.trigger_us * 1e-6

    @property
    def t_mid(self) -> float:
        return 0.5 * (self.t_start_us + self.t_end_us) * 1e-6

    @property
    def duration_us(self) -> int:
        return self.t_end_us - self.t_start_us


@dataclass(frozen=True)
class IlluminationSchedule:
    """Per-period projector slots synchronized to the sweep.

    Slots never overlap in time; each spans whole projector frames and its
    trigger leads the photon window by exactly the measured projector
    delay.
    """

    slots: tuple[Slot, ...]
    wave: InputWave
    frequency: float = SWEEP_FREQUENCY_HZ
    projector_frame_us: int = PROJECTOR_FRAME_US
    trigger_delay_us: int = TRIGGER_DELAY_US
    waveform: OutputWaveform | None = None

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    def to_json_dict(self) -> dict:
        return {
            "version": SCHEDULE_FORMAT_VERSION,
            "frequency_hz": self.frequency,
            "projector_frame_us": self.projector_frame_us,
            "trigger_delay_us": self.trigger_delay_us,
            "wave": {"v_min": self.wave.v_min, "v_max": self.wave.v_max},
            "slots": [
                {
                    "slot_id": s.slot_id,
                    "mask_id": s.mask_id,
                    "target_power_diopters": to_diopters(s.target_power),
                    "t_start_us": s.t_start_us,
                    "t_end_us": s.t_end_us,
                    "trigger_us": s.trigger_us,
                }
                for s in self.slots
            ],
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, doc: dict, waveform: OutputWaveform | None = None) -> "IlluminationSchedule":
        try:
            if doc["version"] != SCHEDULE_FORMAT_VERSION:
                raise ValidationError(f"unsupported schedule version {doc['version']}")
            wave = InputWave(doc["wave"]["v_min"], doc["wave"]["v_max"], doc["frequency_hz"])
            slots = tuple(
                Slot(
                    slot_id=s["slot_id"],
                    mask_id=s["mask_id"],
                    target_power=from_diopters(s["target_power_diopters"]),
                    t_start_us=int(s["t_start_us"]),
                    t_end_us=int(s["t_end_us"]),
                    trigger_us=int(s["trigger_us"]),
                )
                for s in doc["slots"]
            )
            return cls(slots=slots, wave=wave, frequency=doc["frequency_hz"],
                       projector_frame_us=int(doc["projector_frame_us"]),
                       trigger_delay_us=int(doc["trigger_delay_us"]),
                       waveform=waveform)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed schedule document: {exc}") from exc

    @classmethod
    def load_json(cls, path, waveform: OutputWaveform | None = None) -> "IlluminationSchedule":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh), waveform=waveform)


def _window_pieces_us(windows: list[tuple[float, float]], period: float) -> list[tuple[int, int]]:
    """Normalize (possibly wrapped) windows to integer-us pieces inside one
    period.  The fractional last microsecond of the period is dropped."""
    period_us = int(period * 1e6)  # 16666 for 60 Hz
    pieces = []
    for w0, w1 in windows:
        if w1 > period:
            pieces.append((0, min(int(math.floor((w1 - period) * 1e6)), period_us)))
            pieces.append((int(math.ceil(w0 * 1e6)), period_us))
        else:
            pieces.append((int(math.ceil(w0 * 1e6)), int(math.floor(w1 * 1e6))))
    return sorted(p for p in pieces if p[1] > p[0])


def build_schedule(plan: SweepPlan, focus_masks: list[str], blur_masks: list[str],
                   tol: float = DEFAULT_WINDOW_TOL) -> IlluminationSchedule:
    """Assign each target group one whole projector frame inside a power
    window.

    Focus masks are lit where the lens power is within ``tol`` of zero,
    blur masks within ``tol`` of the sweep top.  All masks of a group
    share the frame (the projector shows their union as one image), so
    slots for the same target are exactly co-timed while frames for
    distinct targets never overlap.  Within the admissible
    integer-microsecond start times the frame minimizes its mid-frame
    power error, ties resolving to the earliest start, so scheduling is
    deterministic.
    """
    wf = plan.waveform
    frame = PROJECTOR_FRAME_US
    groups = [(0.0, list(focus_masks)), (plan.p_high, list(blur_masks))]

    slots: list[Slot] = []
    occupied: list[tuple[int, int]] = []
    index = 0
    for target, masks in groups:
        if not masks:
            continue
        windows = phase_windows(wf, target, tol)
        if not windows:
            raise WindowTooNarrowError(
                f"waveform never comes within {to_diopters(tol):.3f} D of "
                f"{to_diopters(target):.3f} D; increase the tolerance or use "
                "a staircase drive")
        best = None  # (abs mid-frame error, start_us)
        for lo, hi in _window_pieces_us(windows, wf.period):
            if hi - lo < frame:
                continue
            starts = np.arange(lo, hi - frame + 1, dtype=np.int64)
            free = np.ones(starts.size, dtype=bool)
            for o0, o1 in occupied:
                free &= (starts + frame <= o0) | (starts >= o1)
            if not free.any():
                continue
            starts = starts[free]
            mids = (starts + frame / 2.0) * 1e-6
            err = np.abs(np.asarray(wf.value_at(mids)) - target)
            k = int(np.argmin(err))
            cand = (float(err[k]), int(starts[k]))
            if best is None or cand < best:
                best = cand
        if best is None:
            raise WindowTooNarrowError(
                f"no whole {frame} us frame fits inside a "
                f"{to_diopters(tol):.3f} D window around "
                f"{to_diopters(target):.3f} D; increase the tolerance or use "
                "a staircase drive")
        start = best[1]
        occupied.append((start, start + frame))
        for mask_id in masks:
            slots.append(Slot(
                slot_id=f"slot{index:02d}",
                mask_id=mask_id,
                target_power=target,
                t_start_us=start,
                t_end_us=start + frame,
                trigger_us=start - TRIGGER_DELAY_US,
            ))
            index += 1

    return IlluminationSchedule(slots=tuple(slots), wave=plan.chosen_wave,
                                frequency=plan.chosen_wave.frequency, waveform=wf)


def save_db(db: WaveformDb, path) -> None:
    """Write the database as a flat binary file.

    Layout: magic, u32 header length, UTF-8 JSON header (grid in
    millivolts, sample period, model parameters, entry/sample counts),
    then per entry: float64 v_min, float64 v_max, float64 power samples.
    All little-endian; round-trips bit-exactly.
    """
    if not db.entries:
        raise ValidationError("refusing to save an empty waveform db")
    n_samples = db.entries[0][1].n_samples
    sample_period = db.entries[0][1].sample_period
    header = {
        "version": DB_FORMAT_VERSION,
        "grid_mv": [int(round(v * 1000)) for v in db.grid],
        "sample_period": sample_period,
        "n_samples": n_samples,
        "n_entries": len(db.entries),
        "model": asdict(db.model),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DB_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for wave, wf in db.entries:
            if wf.n_samples != n_samples:
                raise ValidationError("inconsistent sample counts in db")
            fh.write(struct.pack("<dd", wave.v_min, wave.v_max))
            fh.write(wf.powers.astype("<f8", copy=False).tobytes())


def load_db(path) -> WaveformDb:
    """Read a database written by :func:`save_db` (bit-exact)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(DB_MAGIC))
        if magic != DB_MAGIC:
            raise ValidationError(f"{path}: not a waveform db file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header["version"] != DB_FORMAT_VERSION:
            raise ValidationError(f"unsupported db version {header['version']}")
        model = EtlModel(**header["model"])
        n_samples = header["n_samples"]
        sample_period = header["sample_period"]
        entries = []
        for _ in range(header["n_entries"]):
            v_min, v_max = struct.unpack("<dd", fh.read(16))
            powers = np.frombuffer(fh.read(8 * n_samples), dtype="<f8")
            wave = InputWave(v_min, v_max, model.frequency)
            entries.append((wave, OutputWaveform(powers.copy(), sample_period)))
        grid = np.asarray(header["grid_mv"], dtype=np.float64) / 1000.0
    return WaveformDb(model, entries, grid)
