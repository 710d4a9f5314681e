"""Pulse frames, canonical preprocessing and the synthetic pulse generator.

A :class:`Frame` is an immutable window of pressure samples.  Pipelines use
two canonical layouts: 69 samples at 12 Hz (the "high-rate" frame) and its
even-index subsampling, 35 samples at 6 Hz (the "low-rate" frame).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateFrame, InvalidFactor, OutOfBand

HIGH_RATE_HZ = 12.0
LOW_RATE_HZ = 6.0
SOURCE_RATE_HZ = 126.0
HIGH_LEN = 69
LOW_LEN = 35
WINDOW_S = (HIGH_LEN - 1) / HIGH_RATE_HZ

HR_TRUTH_RANGE = (30.0, 220.0)
SYNTH_HR_RANGE = (40.0, 180.0)

# Noise level above which a synthetic frame is labelled abnormal.
ABNORMAL_NOISE_SIGMA = 0.15
GAUSSIAN_PULSE_SIGMA_S = 0.08
# Weights keep one maximum per period: d/dphi of sum w_h cos(h phi) vanishes only
# at 0 and pi because 1 + 4*w2*c + 3*w3*(4c^2 - 1) has no real root for these.
HARMONIC_WEIGHTS = (1.0, 0.4, 0.1)


class Label(enum.IntEnum):
    NORMAL = 0
    ABNORMAL = 1
    UNLABELED = 2


class BeatShape(enum.Enum):
    GAUSSIAN_PULSE = "gaussian"
    HARMONIC_SUM = "harmonic"


class Artifact(enum.Enum):
    NONE = "none"
    DROPOUT = "dropout"
    SPIKE = "spike"
    SATURATION = "saturation"
    DRIFT = "drift"


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Frame:
    """Fixed-length sample window.

    Attributes:
        samples: 1-D float64 array (read-only).
        rate_hz: sampling rate in samples per second.
        label: signal-quality label.
        hr_truth: reference heart rate in BPM, if known.
    """

    samples: np.ndarray
    rate_hz: float
    label: Label = Label.UNLABELED
    hr_truth: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))
        if self.samples.ndim != 1:
            raise DegenerateFrame("frame samples must be one-dimensional")
        if not self.rate_hz > 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        object.__setattr__(self, "label", Label(self.label))
        if self.hr_truth is not None:
            lo, hi = HR_TRUTH_RANGE
            if not lo <= self.hr_truth <= hi:
                raise OutOfBand(f"hr_truth {self.hr_truth} outside [{lo}, {hi}] BPM")

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.rate_hz == other.rate_hz
            and self.label == other.label
            and self.hr_truth == other.hr_truth
            and np.array_equal(self.samples, other.samples)
        )

    def with_samples(self, samples, rate_hz=None) -> "Frame":
        return replace(self, samples=samples, rate_hz=self.rate_hz if rate_hz is None else rate_hz)


# -- array kernels ---------------------------------------------------------

def detrend(x: np.ndarray) -> np.ndarray:
    """Subtract the least-squares line from ``x``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise DegenerateFrame(f"need at least 2 samples to detrend, got {n}")
    t = np.arange(n, dtype=np.float64)
    t -= t.mean()
    xm = x.mean(axis=-1, keepdims=True)
    slope = ((x - xm) @ t) / (t @ t)
    return x - xm - np.multiply.outer(slope, t) if x.ndim > 1 else x - xm - slope * t


def minmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    lo = x.min()
    span = x.max() - lo
    if span == 0.0:
        return np.zeros_like(x)
    return (x - lo) / span


# -- frame operations ------------------------------------------------------

def baseline_correct(frame: Frame) -> Frame:
    return frame.with_samples(detrend(frame.samples))


def normalize(frame: Frame) -> Frame:
    """Min-max scale to [0, 1]; a constant frame becomes all zeros."""
    return frame.with_samples(minmax(frame.samples))


def downsample(frame: Frame, factor: int) -> Frame:
    """Keep every ``factor``-th sample starting at index 0."""
    if int(factor) != factor or factor < 1:
        raise InvalidFactor(f"downsample factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    return frame.with_samples(frame.samples[::factor], rate_hz=frame.rate_hz / factor)


def preprocess(frame: Frame) -> Frame:
    """Canonical per-frame conditioning: linear detrend, then min-max."""
    return normalize(baseline_correct(frame))


def low_rate_view(frame12: Frame) -> Frame:
    """6 Hz network input derived from a 12 Hz frame (renormalized)."""
    return normalize(downsample(frame12, 2))


# -- synthetic generator ---------------------------------------------------

@dataclass(frozen=True)
class SynthParams:
    hr_bpm: float
    beat_shape: BeatShape = BeatShape.GAUSSIAN_PULSE
    baseline_wander_hz: float = 0.25
    baseline_wander_amp: float = 0.0
    noise_sigma: float = 0.0
    artifact: Artifact = Artifact.NONE
    seed: int = 0

    def __post_init__(self):
        lo, hi = SYNTH_HR_RANGE
        if not lo <= self.hr_bpm <= hi:
            raise OutOfBand(f"hr_bpm {self.hr_bpm} outside generator band [{lo}, {hi}]")
        if self.noise_sigma < 0 or self.baseline_wander_amp < 0:
            raise ValueError("noise_sigma and baseline_wander_amp must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")
        object.__setattr__(self, "beat_shape", BeatShape(self.beat_shape))
        object.__setattr__(self, "artifact", Artifact(self.artifact))

    @property
    def label(self) -> Label:
        if self.artifact is not Artifact.NONE or self.noise_sigma > ABNORMAL_NOISE_SIGMA:
            return Label.ABNORMAL
        return Label.NORMAL


@dataclass(frozen=True)
class _Draws:
    """Random quantities for one frame, drawn in a fixed order."""

    beat_phase: float
    wander_phase: float
    noise: np.ndarray = field(repr=False)
    artifact_u: np.ndarray = field(repr=False)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def _draw(params: SynthParams) -> _Draws:
    rng = _rng(params.seed)
    beat_phase = rng.random()
    wander_phase = rng.random() * 2 * np.pi
    noise = rng.standard_normal(HIGH_LEN)
    artifact_u = rng.random(8)
    return _Draws(beat_phase, wander_phase, noise, artifact_u)


def beat_times(params: SynthParams, draws: _Draws | None = None, margin_beats: int = 2) -> np.ndarray:
    """Beat centres (seconds) of the pulse train, padded past both window edges."""
    if draws is None:
        draws = _draw(params)
    period = 60.0 / params.hr_bpm
    t0 = -draws.beat_phase * period
    n = int(np.ceil((WINDOW_S - t0) / period)) + 2 * margin_beats
    return t0 + period * (np.arange(n) - margin_beats)


def _clean_wave(t: np.ndarray, params: SynthParams, draws: _Draws) -> np.ndarray:
    beats = beat_times(params, draws)
    if params.beat_shape is BeatShape.GAUSSIAN_PULSE:
        d = t[:, None] - beats[None, :]
        wave = np.exp(-0.5 * (d / GAUSSIAN_PULSE_SIGMA_S) ** 2).sum(axis=1)
    else:
        period = 60.0 / params.hr_bpm
        phi = 2 * np.pi * (t - beats[0]) / period
        w = np.asarray(HARMONIC_WEIGHTS)
        h = np.arange(1, len(w) + 1)
        wave = (np.cos(np.multiply.outer(phi, h)) @ w) / w.sum()
    wander = params.baseline_wander_amp * np.sin(
        2 * np.pi * params.baseline_wander_hz * t + draws.wander_phase
    )
    return wave + wander


def synth_waveform(params: SynthParams, rate_hz: float = SOURCE_RATE_HZ) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free waveform over the frame window at an arbitrary rate.

    Returns ``(t, wave)``.  The 12 Hz frame from :func:`synth_frame` samples
    the same underlying function, so this is the reference used to check
    beat placement at the 126 Hz acquisition rate.
    """
    draws = _draw(params)
    n = int(np.floor(WINDOW_S * rate_hz + 1e-9)) + 1
    t = np.arange(n) / rate_hz
    return t, _clean_wave(t, params, draws)


def _apply_artifact(x: np.ndarray, kind: Artifact, u: np.ndarray) -> np.ndarray:
    x = x.copy()
    n = x.shape[0]
    if kind is Artifact.DROPOUT:
        # contact loss: a 1.0-2.5 s flat segment below the pulse floor, where
        # the sensor reads ambient light instead of tissue
        length = 12 + int(u[0] * 19)
        start = int(u[1] * (n - length))
        lo = x.min()
        x[start:start + length] = lo - (0.5 + 0.5 * u[2]) * (x.max() - lo)
    elif kind is Artifact.SPIKE:
        # motion transients: 1-3 triangular bumps lasting three samples (~0.25 s)
        count = 1 + int(u[0] * 3)
        idx = (u[1:1 + count] * n).astype(int)
        sign = np.where(u[4:4 + count] < 0.5, -1.0, 1.0)
        amp = 3.0 + 3.0 * u[7]
        for i, s in zip(idx, sign):
            for j, w in ((i - 1, 0.5), (i, 1.0), (i + 1, 0.5)):
                if 0 <= j < n:
                    x[j] += s * amp * w
    elif kind is Artifact.SATURATION:
        lo = x.min()
        level = lo + (0.25 + 0.2 * u[0]) * (x.max() - lo)
        x = np.minimum(x, level)
    elif kind is Artifact.DRIFT:
        # abrupt baseline shift; survives linear detrending
        t = np.arange(n) / HIGH_RATE_HZ
        t_step = WINDOW_S * (0.25 + 0.5 * u[0])
        amp = (2.0 + 2.0 * u[1]) * (1.0 if u[2] < 0.5 else -1.0)
        x += amp / (1.0 + np.exp(-(t - t_step) / 0.15))
    return x


def synth_frame(params: SynthParams) -> Frame:
    """Generate a raw 69-sample 12 Hz frame.

    The samples are not preprocessed; apply :func:`preprocess` to obtain the
    canonical frame.  ``hr_truth`` is 60 over the mean spacing of the beats
    whose centres fall inside the window.
    """
    draws = _draw(params)
    t = np.arange(HIGH_LEN) / HIGH_RATE_HZ
    x = _clean_wave(t, params, draws)
    if params.noise_sigma > 0:
        x = x + params.noise_sigma * draws.noise
    if params.artifact is not Artifact.NONE:
        x = _apply_artifact(x, params.artifact, draws.artifact_u)

    beats = beat_times(params, draws)
    inside = beats[(beats >= 0.0) & (beats <= WINDOW_S)]
    hr_truth = 60.0 / float(np.mean(np.diff(inside)))
    return Frame(x, HIGH_RATE_HZ, params.label, hr_truth)
