"""Evaluation metrics, latency measurement and the pipeline comparison report.

Latency is wall-clock time around the pipeline call alone, measured with a
monotonic nanosecond clock in a single thread after a few discarded warm-up
calls.  Energy is never measured; :func:`energy_estimate` multiplies the mean
latency by a configurable active power and is labelled an estimate wherever
it appears.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from time import perf_counter_ns

import numpy as np

from . import pipelines
from .dsp import FilterSpec
from .errors import DataError, MetricError
from .metrics import f1_accuracy, mae, rmse
from .models import GATE_THRESHOLD, TrainedBundle
from .pipelines import Pipeline
from .signal import Label, low_rate_view

__all__ = [
    "EvalReport",
    "PowerModel",
    "bench_pipeline",
    "energy_estimate",
    "evaluate",
    "comparison_table",
    "mae",
    "rmse",
    "f1_accuracy",
]

WARMUP = 5
# Placeholder only: roughly what an ESP32-class MCU draws while computing.
DEFAULT_ACTIVE_POWER_MW = 240.0

SP_SIZE_NOTE = (
    "sp has no learned parameters; 0 model bytes (its FilterSpec is configuration, "
    "and library code is not counted)"
)


TIMING_FIELDS = ("mean_latency_ns", "p50_latency_ns", "p95_latency_ns", "max_latency_ns", "repeats", "warmup")


@dataclass
class EvalReport:
    """Accuracy, acceptance and latency summary of one pipeline on one frame set.

    ``mae_bpm``/``rmse_bpm`` cover accepted frames labelled normal;
    ``mae_all_bpm``/``rmse_all_bpm`` cover every accepted frame with a
    known heart rate.  ``accuracy``/``f1`` score the accept/reject decision
    against the abnormal label (positive class = abnormal).
    """

    pipeline: str
    n_frames: int
    n_accepted: int
    mae_bpm: float
    rmse_bpm: float
    mae_all_bpm: float
    rmse_all_bpm: float
    accuracy: float
    f1: float
    acceptance_rate: float
    mean_latency_ns: int
    p50_latency_ns: int
    p95_latency_ns: int
    max_latency_ns: int
    model_bytes: int
    repeats: int = 0
    warmup: int = WARMUP
    note: str = ""
    seed_std: dict | None = None

    def __post_init__(self):
        for name in ("accuracy", "f1", "acceptance_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise MetricError(f"{name} = {v} outside [0, 1]")
        for a, b in (("mae_bpm", "rmse_bpm"), ("mae_all_bpm", "rmse_all_bpm")):
            lo, hi = getattr(self, a), getattr(self, b)
            if np.isfinite(lo) and not 0.0 <= lo <= hi * (1 + 1e-12):
                raise MetricError(f"expected 0 <= {a} <= {b}, got {lo} and {hi}")
        if not self.p50_latency_ns <= self.p95_latency_ns <= self.max_latency_ns:
            raise MetricError("latency percentiles must be monotone")

    def to_dict(self) -> dict:
        """JSON-ready dict; timing lives under ``"timing"`` so it can be ignored wholesale."""
        d = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in asdict(self).items()}
        d["timing"] = {k: d.pop(k) for k in TIMING_FIELDS}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d.update(d.pop("timing", {}))
        for k in ("mae_bpm", "rmse_bpm", "mae_all_bpm", "rmse_all_bpm"):
            if d.get(k) is None:
                d[k] = float("nan")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class PowerModel:
    active_power_mw: float = DEFAULT_ACTIVE_POWER_MW

    def __post_init__(self):
        if not self.active_power_mw > 0:
            raise ValueError("active_power_mw must be positive")


def energy_estimate(report: EvalReport, power: PowerModel = PowerModel()) -> float:
    """Estimated energy per inference in millijoules: mean latency (s) x power (mW)."""
    return report.mean_latency_ns * 1e-9 * power.active_power_mw


def _inputs(pipeline: Pipeline, frames):
    if pipeline is Pipeline.SP:
        return [f.samples for f in frames]
    return [low_rate_view(f).samples for f in frames]


def _callable(pipeline: Pipeline, bundle, spec, gate_threshold):
    if pipeline is Pipeline.SP:
        return lambda x: pipelines.run_sp(x, spec)
    if pipeline is Pipeline.ML:
        return lambda x: pipelines.run_ml(x, bundle, gate_threshold)
    return lambda x: pipelines.run_hybrid(x, bundle, spec, gate_threshold)


def _error_stats(results, frames, clean_only):
    err = [
        r.estimate - f.hr_truth
        for r, f in zip(results, frames)
        if not r.rejected and f.hr_truth is not None and (f.label is Label.NORMAL or not clean_only)
    ]
    if not err:
        return float("nan"), float("nan")
    err = np.asarray(err)
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err**2)))


def _model_bytes(pipeline: Pipeline, bundle: TrainedBundle | None) -> tuple[int, str]:
    if pipeline is Pipeline.SP:
        return 0, SP_SIZE_NOTE
    names = ("upsampler", "classifier", "regressor") if pipeline is Pipeline.ML else ("upsampler", "classifier")
    return bundle.model_bytes(names), "serialized THR1 bytes of " + ", ".join(names)


def evaluate(pipeline, frames, bundle: TrainedBundle | None = None, spec: FilterSpec | None = None,
             gate_threshold: float = GATE_THRESHOLD, repeats: int = 10, warmup: int = WARMUP) -> EvalReport:
    """Run ``pipeline`` over ``frames`` and summarize accuracy and latency.

    Every frame is timed ``repeats`` times after ``warmup`` untimed calls; the
    latency distribution is over all timed calls.  Estimates come from the
    first timed call (pipelines are deterministic, so any call would do).
    """
    pipeline = Pipeline(pipeline)
    frames = list(frames)
    if not frames:
        raise DataError("no frames to evaluate")
    if int(repeats) != repeats or repeats < 1:
        raise ValueError("repeats must be a positive integer")
    if pipeline is not Pipeline.SP and not isinstance(bundle, TrainedBundle):
        raise DataError(f"the {pipeline.value} pipeline needs a trained bundle")
    spec = spec or (bundle.spec if bundle is not None else FilterSpec())
    fn = _callable(pipeline, bundle, spec, gate_threshold)
    inputs = _inputs(pipeline, frames)

    for i in range(warmup):
        fn(inputs[i % len(inputs)])
    latencies = np.empty((repeats, len(inputs)), dtype=np.int64)
    results = []
    for rep in range(repeats):
        for j, x in enumerate(inputs):
            t0 = perf_counter_ns()
            r = fn(x)
            latencies[rep, j] = perf_counter_ns() - t0
            if rep == 0:
                results.append(r)

    mae_clean, rmse_clean = _error_stats(results, frames, clean_only=True)
    mae_all, rmse_all = _error_stats(results, frames, clean_only=False)
    labelled = [(r.rejected, f.label is Label.ABNORMAL) for r, f in zip(results, frames)
                if f.label is not Label.UNLABELED]
    if labelled:
        f1, acc = f1_accuracy([p for p, _ in labelled], [t for _, t in labelled])
    else:
        f1, acc = 0.0, 0.0
    n_acc = sum(not r.rejected for r in results)
    size, note = _model_bytes(pipeline, bundle)
    lat = latencies.reshape(-1)
    return EvalReport(
        pipeline=pipeline.value,
        n_frames=len(frames),
        n_accepted=n_acc,
        mae_bpm=mae_clean,
        rmse_bpm=rmse_clean,
        mae_all_bpm=mae_all,
        rmse_all_bpm=rmse_all,
        accuracy=float(acc),
        f1=float(f1),
        acceptance_rate=n_acc / len(frames),
        mean_latency_ns=int(round(lat.mean())),
        p50_latency_ns=int(np.percentile(lat, 50)),
        p95_latency_ns=int(np.percentile(lat, 95)),
        max_latency_ns=int(lat.max()),
        model_bytes=size,
        repeats=int(repeats),
        warmup=int(warmup),
        note=note,
    )


def bench_pipeline(pipeline, frames, bundle: TrainedBundle | None = None, spec: FilterSpec | None = None,
                   repeats: int = 10, gate_threshold: float = GATE_THRESHOLD, warmup: int = WARMUP) -> EvalReport:
    """:func:`evaluate` with the benchmark's minimum of 10 timed repeats."""
    if repeats < 10:
        raise ValueError("benchmarks need at least 10 repeats")
    if warmup < WARMUP:
        raise ValueError(f"benchmarks need at least {WARMUP} warm-up calls")
    return evaluate(pipeline, frames, bundle, spec, gate_threshold, repeats, warmup)


def seed_spread(reports: list[EvalReport]) -> dict:
    """Per-metric population standard deviation across reports from different seeds."""
    keys = ("mae_bpm", "rmse_bpm", "mae_all_bpm", "rmse_all_bpm", "accuracy", "f1", "acceptance_rate")
    return {k: float(np.std([getattr(r, k) for r in reports])) for k in keys}


def _fmt(v, spec):
    return "n/a" if v is None or (isinstance(v, float) and not np.isfinite(v)) else format(v, spec)


def comparison_table(test_reports: dict, entire_reports: dict | None = None,
                     power: PowerModel = PowerModel()) -> str:
    """Markdown table with one column per pipeline.

    Rows: model size, inference time, estimated energy, and MAE over the
    entire dataset (when ``entire_reports`` is given) and the test split.
    """
    names = list(test_reports)
    head = "| | " + " | ".join(n.upper() for n in names) + " |"
    rule = "|---|" + "---|" * len(names)
    rows = [
        ("Model size (bytes)", [str(test_reports[n].model_bytes) for n in names]),
        ("Inference time (ms, mean)", [_fmt(test_reports[n].mean_latency_ns / 1e6, ".4f") for n in names]),
        (f"Estimated energy (mJ @ {power.active_power_mw:g} mW, estimate)",
         [_fmt(energy_estimate(test_reports[n], power), ".5f") for n in names]),
    ]
    if entire_reports:
        rows.append(("MAE entire (BPM)", [_fmt(entire_reports[n].mae_bpm, ".2f") for n in names]))
    rows.append(("MAE test (BPM)", [_fmt(test_reports[n].mae_bpm, ".2f") for n in names]))
    rows.append(("Acceptance rate (test)", [_fmt(test_reports[n].acceptance_rate, ".3f") for n in names]))
    lines = [head, rule] + ["| " + label + " | " + " | ".join(vals) + " |" for label, vals in rows]
    return "\n".join(lines) + "\n"
