"""Filtering kernels and peak-based heart-rate estimation.

All kernels are length preserving and use replicate (edge) padding, so a
constant input passes through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateFrame, InsufficientPeaks, InvalidTaps, InvalidWindow, NotAPeak
from .signal import HIGH_RATE_HZ

MAX_HR_BPM = 220.0
DEFAULT_MIN_DISTANCE_S = 60.0 / MAX_HR_BPM
DEFAULT_MIN_PROMINENCE = 0.2


def design_fir(num_taps: int = 7, cutoff_hz: float = 3.0, rate_hz: float = HIGH_RATE_HZ) -> np.ndarray:
    """Hamming-windowed sinc low-pass, scaled to unity DC gain."""
    if num_taps < 1:
        raise InvalidTaps("num_taps must be positive")
    m = np.arange(num_taps) - (num_taps - 1) / 2.0
    h = np.sinc(2.0 * cutoff_hz / rate_hz * m) * np.hamming(num_taps)
    return h / h.sum()


@dataclass(frozen=True)
class FilterSpec:
    """Parameters of the classical conditioning and peak-detection chain."""

    median_window: int = 3
    fir_taps: tuple = field(default_factory=lambda: tuple(design_fir().tolist()))
    ma_window: int = 31
    interp_factor: int = 10
    min_prominence: float = DEFAULT_MIN_PROMINENCE
    min_distance_s: float = DEFAULT_MIN_DISTANCE_S

    def __post_init__(self):
        object.__setattr__(self, "fir_taps", tuple(float(v) for v in self.fir_taps))
        _check_window(self.median_window)
        _check_window(self.ma_window)
        if not self.fir_taps:
            raise InvalidTaps("fir_taps must not be empty")
        if abs(sum(self.fir_taps) - 1.0) > 1e-9:
            raise InvalidTaps(f"fir_taps must sum to 1 (unity DC gain), got {sum(self.fir_taps)!r}")
        if int(self.interp_factor) != self.interp_factor or self.interp_factor < 1:
            raise ValueError("interp_factor must be a positive integer")
        if self.min_prominence < 0 or self.min_distance_s < 0:
            raise ValueError("min_prominence and min_distance_s must be non-negative")

    def to_dict(self) -> dict:
        return {
            "median_window": self.median_window,
            "fir_taps": list(self.fir_taps),
            "ma_window": self.ma_window,
            "interp_factor": self.interp_factor,
            "min_prominence": self.min_prominence,
            "min_distance_s": self.min_distance_s,
        }


def _check_window(window):
    if int(window) != window or window < 3 or window % 2 == 0:
        raise InvalidWindow(f"window must be an odd integer >= 3, got {window!r}")


def _pad(x, left, right):
    return np.concatenate((np.full(left, x[0]), x, np.full(right, x[-1])))


def median_filter(x, window: int) -> np.ndarray:
    _check_window(window)
    x = np.asarray(x, dtype=np.float64)
    h = window // 2
    return np.median(sliding_window_view(_pad(x, h, h), window), axis=-1)


def fir_filter(x, taps) -> np.ndarray:
    """Centered convolution with ``taps``; no group delay for odd-length taps."""
    taps = np.asarray(taps, dtype=np.float64)
    if taps.ndim != 1 or taps.size == 0:
        raise InvalidTaps("taps must be a non-empty 1-D sequence")
    x = np.asarray(x, dtype=np.float64)
    k = taps.size
    left = (k - 1) // 2
    return np.convolve(_pad(x, left, k - 1 - left), taps, mode="valid")


def moving_average(x, window: int) -> np.ndarray:
    _check_window(window)
    return fir_filter(x, np.full(window, 1.0 / window))


def linear_interp(x, factor: int) -> np.ndarray:
    """Insert ``factor - 1`` linearly spaced points between samples."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise DegenerateFrame(f"need at least 2 samples to interpolate, got {n}")
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return x.copy()
    grid = np.arange(factor * (n - 1) + 1) / factor
    return np.interp(grid, np.arange(n), x)


def parabolic_refine(y_prev: float, y_peak: float, y_next: float) -> float:
    """Sub-sample offset of the vertex of the parabola through three points."""
    if y_peak < y_prev or y_peak < y_next:
        raise NotAPeak(f"({y_prev}, {y_peak}, {y_next}) is not a local maximum")
    denom = y_prev - 2.0 * y_peak + y_next
    if abs(denom) < 1e-12:
        return 0.0
    return 0.5 * (y_prev - y_next) / denom


@dataclass(frozen=True, eq=False)
class PeakSet:
    positions: np.ndarray
    rate_hz: float

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1)
        if pos.size > 1 and not np.all(np.diff(pos) > 0):
            raise ValueError("peak positions must be strictly increasing")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return self.positions.size

    @property
    def times_s(self) -> np.ndarray:
        return self.positions / self.rate_hz


def local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices of interior local maxima; flat tops report their middle sample."""
    d = np.diff(x)
    nz = np.flatnonzero(d)
    if nz.size < 2:
        return np.empty(0, dtype=np.intp)
    s = d[nz] > 0
    k = np.flatnonzero(s[:-1] & ~s[1:])
    return (nz[k] + 1 + nz[k + 1]) // 2


def prominences(x: np.ndarray, peaks: np.ndarray) -> np.ndarray:
    """Height of each peak above the higher of its two bounding valleys."""
    if peaks.size == 0:
        return np.empty(0)
    n = x.shape[0]
    idx = np.arange(n)
    h = x[peaks][:, None]
    p = peaks[:, None]
    higher = x[None, :] > h
    left_stop = np.where(higher & (idx < p), idx, -1).max(axis=1)[:, None]
    right_stop = np.where(higher & (idx > p), idx, n).min(axis=1)[:, None]
    left_min = np.where((idx > left_stop) & (idx <= p), x, np.inf).min(axis=1)
    right_min = np.where((idx >= p) & (idx < right_stop), x, np.inf).min(axis=1)
    return x[peaks] - np.maximum(left_min, right_min)


def detect_peaks(
    x,
    rate_hz: float,
    min_prominence: float = DEFAULT_MIN_PROMINENCE,
    min_distance_s: float = DEFAULT_MIN_DISTANCE_S,
) -> PeakSet:
    """Prominent local maxima, thinned greedily by height and refined to sub-sample.

    Candidates are visited tallest first (ties go to the lower index); a
    candidate is kept only if its refined position is at least
    ``min_distance_s`` away from every peak already kept.
    """
    x = np.asarray(x, dtype=np.float64)
    cand = local_maxima(x)
    if cand.size:
        cand = cand[prominences(x, cand) >= min_prominence]
    if cand.size == 0:
        return PeakSet(np.empty(0), rate_hz)

    yp, y0, yn = x[cand - 1], x[cand], x[cand + 1]
    denom = yp - 2.0 * y0 + yn
    safe = np.abs(denom) >= 1e-12
    delta = np.where(safe, 0.5 * (yp - yn) / np.where(safe, denom, 1.0), 0.0)
    refined = cand + delta

    min_gap = min_distance_s * rate_hz
    kept = []
    for i in np.argsort(-y0, kind="stable"):
        r = refined[i]
        if all(abs(r - k) >= min_gap for k in kept):
            kept.append(r)
    return PeakSet(np.sort(np.array(kept)), rate_hz)


def hr_from_peaks(peaks: PeakSet) -> float:
    """Mean heart rate (BPM) from peak-to-peak spacing."""
    pos = peaks.positions
    if pos.size < 3:
        raise InsufficientPeaks(f"need at least 3 peaks, got {pos.size}")
    mean_interval_s = (pos[-1] - pos[0]) / (pos.size - 1) / peaks.rate_hz
    return 60.0 / mean_interval_s
