"""Synthetic dataset assembly, the shared 70/15/15 split and CSV I/O."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError
from .signal import (
    HIGH_RATE_HZ,
    Artifact,
    BeatShape,
    Frame,
    Label,
    SynthParams,
    preprocess,
    synth_frame,
)

DEFAULT_N = 5687
DEFAULT_ABNORMAL_FRACTION = 0.2
# Upper bound kept where the 12 Hz conditioning chain and the 6 Hz input still
# resolve individual beats; the generator itself accepts up to 180 BPM.
DEFAULT_HR_RANGE = (40.0, 100.0)

NORMAL_NOISE_MAX = 0.08
ABNORMAL_NOISE_RANGE = (0.25, 0.5)
WANDER_AMP_MAX = 0.3

SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


class Split(enum.IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2


def split_sizes(n: int) -> tuple[int, int, int]:
    """Rounded validation/test sizes; the remainder goes to training."""
    n_val = int(np.floor(SPLIT_FRACTIONS[1] * n + 0.5))
    n_test = int(np.floor(SPLIT_FRACTIONS[2] * n + 0.5))
    return n - n_val - n_test, n_val, n_test


def assign_splits(n: int, seed: int) -> np.ndarray:
    """Split label per frame index, a pure function of ``(n, seed)``."""
    n_train, n_val, _ = split_sizes(n)
    order = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, 1])).permutation(n)
    out = np.empty(n, dtype=np.int8)
    out[order[:n_train]] = Split.TRAIN
    out[order[n_train:n_train + n_val]] = Split.VAL
    out[order[n_train + n_val:]] = Split.TEST
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    frames: tuple
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        assignment = assign_splits(len(self.frames), self.seed)
        assignment.setflags(write=False)
        object.__setattr__(self, "split_assignment", assignment)

    def __len__(self):
        return len(self.frames)

    def indices(self, which: Split) -> np.ndarray:
        return np.flatnonzero(self.split_assignment == which)

    def subset(self, which: Split) -> list[Frame]:
        return [self.frames[i] for i in self.indices(which)]


def split(dataset: Dataset) -> tuple[list[Frame], list[Frame], list[Frame]]:
    return tuple(dataset.subset(s) for s in Split)


def normal_only(frames) -> list[Frame]:
    return [f for f in frames if f.label is Label.NORMAL]


_ABNORMAL_KINDS = (Artifact.DROPOUT, Artifact.SPIKE, Artifact.SATURATION, Artifact.DRIFT, "noise")


def _f32(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def make_dataset(
    n: int = DEFAULT_N,
    abnormal_fraction: float = DEFAULT_ABNORMAL_FRACTION,
    seed: int = 0,
    hr_range: tuple[float, float] = DEFAULT_HR_RANGE,
) -> Dataset:
    """Generate ``n`` preprocessed 12 Hz frames.

    Exactly ``round(abnormal_fraction * n)`` frames are abnormal; each of
    those carries one artifact kind or heavy noise, chosen uniformly.
    Samples are stored at float32 precision so a CSV round trip is exact.
    """
    if n < 10:
        raise DataError(f"dataset needs at least 10 frames, got {n}")
    if not 0.0 <= abnormal_fraction <= 1.0:
        raise DataError(f"abnormal_fraction must lie in [0, 1], got {abnormal_fraction}")
    lo, hi = hr_range
    if not 40.0 <= lo <= hi <= 180.0:
        raise DataError(f"hr_range {hr_range} must lie within [40, 180]")

    rng = np.random.Generator(np.random.Philox(key=seed))
    n_abnormal = int(np.floor(abnormal_fraction * n + 0.5))
    abnormal = np.zeros(n, dtype=bool)
    abnormal[rng.permutation(n)[:n_abnormal]] = True

    frames = []
    for i in range(n):
        hr = rng.uniform(lo, hi)
        shape = BeatShape.GAUSSIAN_PULSE if rng.random() < 0.5 else BeatShape.HARMONIC_SUM
        wander = rng.uniform(0.0, WANDER_AMP_MAX)
        noise = rng.uniform(0.0, NORMAL_NOISE_MAX)
        kind = _ABNORMAL_KINDS[rng.integers(len(_ABNORMAL_KINDS))]
        heavy_noise = rng.uniform(*ABNORMAL_NOISE_RANGE)
        frame_seed = int(rng.integers(2**63))

        artifact = Artifact.NONE
        if abnormal[i]:
            if kind == "noise":
                noise = heavy_noise
            else:
                artifact = kind
        params = SynthParams(hr, shape, 0.25, wander, noise, artifact, frame_seed)
        f = preprocess(synth_frame(params))
        frames.append(Frame(_f32(f.samples), f.rate_hz, f.label, f.hr_truth))

    meta = {
        "n": n,
        "abnormal_fraction": abnormal_fraction,
        "seed": seed,
        "hr_range": [lo, hi],
    }
    return Dataset(frames, seed, meta)


# -- CSV -------------------------------------------------------------------

_FIXED_COLUMNS = ["label", "hr_truth", "rate_hz"]


def save_csv(dataset_or_frames, path) -> None:
    frames = dataset_or_frames.frames if isinstance(dataset_or_frames, Dataset) else list(dataset_or_frames)
    if not frames:
        raise DataError("nothing to write")
    n = len(frames[0])
    if any(len(f) != n for f in frames):
        raise DataError("all frames in a CSV must have the same length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_FIXED_COLUMNS + [f"s{i}" for i in range(n)])
        for f in frames:
            label = "" if f.label is Label.UNLABELED else str(int(f.label))
            truth = "" if f.hr_truth is None else repr(float(f.hr_truth))
            w.writerow([label, truth, repr(float(f.rate_hz))] + [f"{v:.9g}" for v in f.samples])


def parse_row(row: list[str], n_samples: int, line: int | None = None) -> Frame:
    """Decode one CSV data row (already split into fields)."""
    if len(row) != len(_FIXED_COLUMNS) + n_samples:
        raise ParseError(f"expected {len(_FIXED_COLUMNS) + n_samples} fields, got {len(row)}", line)
    label_s, truth_s, rate_s = row[:3]
    try:
        label = Label.UNLABELED if label_s == "" else Label(int(label_s))
        if label is Label.UNLABELED and label_s != "":
            raise ValueError(label_s)
        truth = None if truth_s == "" else float(truth_s)
        rate = float(rate_s)
        samples = _f32([float(v) for v in row[3:]])
        return Frame(samples, rate, label, truth)
    except (ValueError, TypeError) as exc:
        raise ParseError(str(exc), line) from exc


def _check_header(header: list[str]) -> int:
    if header[:3] != _FIXED_COLUMNS:
        raise ParseError(f"header must start with {','.join(_FIXED_COLUMNS)}", 1)
    cols = header[3:]
    if not cols or cols != [f"s{i}" for i in range(len(cols))]:
        raise ParseError("sample columns must be s0..s{N-1}", 1)
    return len(cols)


def read_frames(path) -> list[Frame]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: header row required", 1) from None
        n = _check_header(header)
        return [parse_row(row, n, reader.line_num) for row in reader]


def load_csv(path, seed: int | None = None) -> Dataset:
    """Read a dataset CSV.

    The split seed comes from ``seed`` if given, else from a sibling
    ``<name>.manifest.json`` written by :func:`save_manifest`, else 0.
    """
    frames = read_frames(path)
    meta = {}
    mpath = manifest_path(path)
    if mpath.exists():
        meta = json.loads(mpath.read_text(encoding="utf-8"))
    if seed is None:
        seed = int(meta.get("seed", 0))
    return Dataset(frames, seed, meta)


def manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def save_manifest(dataset: Dataset, csv_path) -> Path:
    meta = dict(dataset.meta)
    meta.setdefault("n", len(dataset))
    meta["seed"] = dataset.seed
    meta["split_sizes"] = [int(np.sum(dataset.split_assignment == s)) for s in Split]
    path = manifest_path(csv_path)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def frame_matrix(frames) -> np.ndarray:
    return np.stack([f.samples for f in frames]) if frames else np.empty((0, 0))


def unit_rate_check(frames, rate_hz=HIGH_RATE_HZ):
    bad = [i for i, f in enumerate(frames) if f.rate_hz != rate_hz]
    if bad:
        raise DataError(f"frames {bad[:5]} are not sampled at {rate_hz} Hz")
