"""End-to-end heart-rate pipelines.

* ``sp``: classical conditioning and peak detection on the 12 Hz frame.
* ``ml``: upsampler -> quality gate -> HR regressor on the 6 Hz frame.
* ``hybrid``: upsampler -> quality gate -> peak detection on the 6 Hz frame.

A rejection (gate, too few peaks, implausible estimate) is a normal result,
never an exception.  Every stage is timed with ``perf_counter_ns``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from time import perf_counter_ns

import numpy as np

from . import dsp
from .errors import InsufficientPeaks, ShapeError
from .models import GATE_THRESHOLD, TrainedBundle
from .signal import HIGH_LEN, LOW_LEN, Frame, detrend, minmax, low_rate_view

HR_BOUNDS = (30.0, 220.0)


class Pipeline(enum.Enum):
    SP = "sp"
    ML = "ml"
    HYBRID = "hybrid"


class Reason(str, enum.Enum):
    GATE = "gate"
    INSUFFICIENT_PEAKS = "insufficient_peaks"
    OUT_OF_RANGE = "out_of_range"


@dataclass
class PipelineResult:
    pipeline: Pipeline
    estimate: float | None
    rejected: bool
    reason: Reason | None = None
    stage_times: dict = field(default_factory=dict)
    p_abnormal: float | None = None

    def __post_init__(self):
        if (self.estimate is None) != self.rejected:
            raise ValueError("a result carries an estimate xor a rejection")

    @property
    def total_ns(self) -> int:
        return sum(self.stage_times.values())

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "pipeline": self.pipeline.value,
            "estimate": self.estimate,
            "rejected": self.rejected,
            "reason": None if self.reason is None else self.reason.value,
            "p_abnormal": self.p_abnormal,
        }
        if timing:
            d["timing"] = {"stage_ns": dict(self.stage_times), "total_ns": self.total_ns}
        return d


def _finish(pipeline, hr, stage_times, p_abnormal=None) -> PipelineResult:
    lo, hi = HR_BOUNDS
    if not lo <= hr <= hi:
        return PipelineResult(pipeline, None, True, Reason.OUT_OF_RANGE, stage_times, p_abnormal)
    return PipelineResult(pipeline, float(hr), False, None, stage_times, p_abnormal)


def _samples(frame, n, what):
    x = frame.samples if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
    if x.shape != (n,):
        raise ShapeError(f"{what} pipeline expects a {n}-sample frame, got shape {x.shape}")
    return x


def _peak_tail(pipeline, x12, spec, times, p_abnormal=None) -> PipelineResult:
    """Interpolate, smooth, find peaks and convert to BPM, timing each step."""
    rate = 12.0 * spec.interp_factor
    t = perf_counter_ns()
    y = dsp.linear_interp(x12, spec.interp_factor)
    t1 = perf_counter_ns()
    y = dsp.moving_average(y, spec.ma_window)
    t2 = perf_counter_ns()
    peaks = dsp.detect_peaks(y, rate, spec.min_prominence, spec.min_distance_s)
    t3 = perf_counter_ns()
    try:
        hr = dsp.hr_from_peaks(peaks)
    except InsufficientPeaks:
        hr = None
    t4 = perf_counter_ns()
    times.update(interp=t1 - t, moving_average=t2 - t1, detect_peaks=t3 - t2, hr=t4 - t3)
    if hr is None:
        return PipelineResult(pipeline, None, True, Reason.INSUFFICIENT_PEAKS, times, p_abnormal)
    return _finish(pipeline, hr, times, p_abnormal)


def run_sp(frame12, spec: dsp.FilterSpec | None = None) -> PipelineResult:
    """Median, FIR, detrend, normalize, then the shared peak tail."""
    spec = spec or dsp.FilterSpec()
    x = _samples(frame12, HIGH_LEN, "sp")
    t0 = perf_counter_ns()
    x = dsp.median_filter(x, spec.median_window)
    t1 = perf_counter_ns()
    x = dsp.fir_filter(x, spec.fir_taps)
    t2 = perf_counter_ns()
    x = detrend(x)
    t3 = perf_counter_ns()
    x = minmax(x)
    t4 = perf_counter_ns()
    times = {"median": t1 - t0, "fir": t2 - t1, "baseline": t3 - t2, "normalize": t4 - t3}
    return _peak_tail(Pipeline.SP, x, spec, times)


def _gate(x6, bundle: TrainedBundle, threshold: float, times: dict):
    t0 = perf_counter_ns()
    x12 = bundle.compiled["upsampler"](x6)
    t1 = perf_counter_ns()
    p = float(bundle.compiled["classifier"](x12)[0])
    t2 = perf_counter_ns()
    times.update(upsampler=t1 - t0, classifier=t2 - t1)
    return x12, p, p > threshold


def run_ml(frame6, bundle: TrainedBundle, gate_threshold: float = GATE_THRESHOLD) -> PipelineResult:
    """Upsample, gate, and regress; the regressor never runs on a rejected frame."""
    x = _samples(frame6, LOW_LEN, "ml")
    times = {}
    x12, p, reject = _gate(x, bundle, gate_threshold, times)
    if reject:
        return PipelineResult(Pipeline.ML, None, True, Reason.GATE, times, p)
    t0 = perf_counter_ns()
    hr = float(bundle.compiled["regressor"](x12)[0])
    times["regressor"] = perf_counter_ns() - t0
    return _finish(Pipeline.ML, hr, times, p)


def run_hybrid(frame6, bundle: TrainedBundle, spec: dsp.FilterSpec | None = None,
               gate_threshold: float = GATE_THRESHOLD) -> PipelineResult:
    spec = spec or bundle.spec
    x = _samples(frame6, LOW_LEN, "hybrid")
    times = {}
    x12, p, reject = _gate(x, bundle, gate_threshold, times)
    if reject:
        return PipelineResult(Pipeline.HYBRID, None, True, Reason.GATE, times, p)
    return _peak_tail(Pipeline.HYBRID, x12, spec, times, p)


def run(pipeline, frame12: Frame, bundle: TrainedBundle | None = None, spec: dsp.FilterSpec | None = None,
        gate_threshold: float = GATE_THRESHOLD) -> PipelineResult:
    """Dispatch on ``pipeline`` given the canonical 12 Hz frame."""
    pipeline = Pipeline(pipeline)
    if pipeline is Pipeline.SP:
        return run_sp(frame12, spec or (bundle.spec if bundle else None))
    frame6 = low_rate_view(frame12)
    if pipeline is Pipeline.ML:
        return run_ml(frame6, bundle, gate_threshold)
    return run_hybrid(frame6, bundle, spec, gate_threshold)


def run_batch(pipeline, frames, bundle=None, spec=None, gate_threshold=GATE_THRESHOLD) -> list[PipelineResult]:
    return [run(pipeline, f, bundle, spec, gate_threshold) for f in frames]


BATCH_COLUMNS = ["frame_id", "pipeline", "estimate", "rejected", "truth", "abs_error", "total_ns"]


def write_batch_csv(path, results, frames, frame_ids=None) -> None:
    """One row per (frame, result) in the documented batch schema."""
    frame_ids = range(len(frames)) if frame_ids is None else frame_ids
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BATCH_COLUMNS)
        for fid, r, f in zip(frame_ids, results, frames):
            truth = f.hr_truth
            err = "" if r.rejected or truth is None else repr(abs(r.estimate - truth))
            w.writerow([
                fid,
                r.pipeline.value,
                "" if r.estimate is None else repr(r.estimate),
                int(r.rejected),
                "" if truth is None else repr(truth),
                err,
                r.total_ns,
            ])
