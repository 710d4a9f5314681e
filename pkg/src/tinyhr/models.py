"""The three published networks and how each one is trained.

Defaults mirror the published hyperparameters:

========== ========= ====== ============ ====== =====================
model      optimizer lr     weight decay epochs checkpoint
========== ========= ====== ============ ====== =====================
upsampler  SGD       0.9    0            2000   lowest val RMSE
classifier Adam      0.003  0            1000   highest val F1
regressor  Adam      0.05   0.05         1000   lowest val RMSE
========== ========= ====== ============ ====== =====================
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dsp, nn
from .data import Dataset, Split, normal_only
from .errors import DataError, ShapeError, TrainingDiverged
from .metrics import f1_accuracy, mae, rmse
from .nn import Activation, CheckpointMetric, Loss, Optimizer, TrainConfig, conv1d, dense
from .signal import HIGH_LEN, LOW_LEN, Label, detrend, downsample, minmax

UPSAMPLER_CONFIG = TrainConfig(
    optimizer=Optimizer.SGD,
    learning_rate=0.9,
    epochs=2000,
    loss=Loss.MSE,
    checkpoint_metric=CheckpointMetric.VAL_RMSE,
)
CLASSIFIER_CONFIG = TrainConfig(
    optimizer=Optimizer.ADAM,
    learning_rate=0.003,
    epochs=1000,
    loss=Loss.BCE,
    checkpoint_metric=CheckpointMetric.VAL_F1,
    batch_size=32,
)
REGRESSOR_CONFIG = TrainConfig(
    optimizer=Optimizer.ADAM,
    learning_rate=0.05,
    weight_decay=0.05,
    epochs=1000,
    loss=Loss.MSE,
    checkpoint_metric=CheckpointMetric.VAL_RMSE,
    batch_size=32,
)
DEFAULT_CONFIGS = {
    "upsampler": UPSAMPLER_CONFIG,
    "classifier": CLASSIFIER_CONFIG,
    "regressor": REGRESSOR_CONFIG,
}

GATE_THRESHOLD = 0.5


# -- builders --------------------------------------------------------------

def build_upsampler(hidden: int = 55, in_len: int = LOW_LEN, out_len: int = HIGH_LEN, seed: int = 0) -> nn.Model:
    """Two dense layers, ``in_len -> hidden (ReLU) -> out_len``.

    ``in_len=23`` gives the 4 Hz variant.
    """
    return nn.init_model([dense(in_len, hidden, Activation.RELU), dense(hidden, out_len)], seed)


def _cnn_layers(act: Activation, head: Activation):
    c1 = conv1d(1, 5, 5, HIGH_LEN, act)
    c2 = conv1d(5, 5, 5, c1.out_length, act)
    return [c1, c2, dense(5 * c2.out_length, 1, head)]


def build_classifier(seed: int = 0) -> nn.Model:
    """1-D CNN whose sigmoid output is P(abnormal)."""
    return nn.init_model(_cnn_layers(Activation.RELU, Activation.SIGMOID), seed)


def build_regressor(variant: str = "cnn", seed: int = 0) -> nn.Model:
    variant = variant.lower()
    if variant == "cnn":
        return nn.init_model(_cnn_layers(Activation.SINE, Activation.NONE), seed)
    if variant == "fcn":
        layers = [dense(HIGH_LEN, 8, Activation.SINE), dense(8, 8, Activation.SINE), dense(8, 1)]
        return nn.init_model(layers, seed)
    raise ValueError(f"unknown regressor variant {variant!r}")


# -- data views ------------------------------------------------------------

def condition(x12: np.ndarray, spec: dsp.FilterSpec) -> np.ndarray:
    """12 Hz conditioning: median, FIR, detrend, min-max."""
    y = dsp.median_filter(x12, spec.median_window)
    y = dsp.fir_filter(y, spec.fir_taps)
    return minmax(detrend(y))


def low_rate_inputs(frames, factor: int = 2) -> np.ndarray:
    """Network inputs: each 12 Hz frame decimated by ``factor`` and renormalized."""
    if not frames:
        return np.empty((0, LOW_LEN))
    return np.stack([minmax(downsample(f, factor).samples) for f in frames])


def _require(frames, what):
    if not frames:
        raise DataError(f"empty {what} split")
    bad = [i for i, f in enumerate(frames) if len(f) != HIGH_LEN]
    if bad:
        raise DataError(f"{what} frames {bad[:5]} are not {HIGH_LEN} samples long")


def _truths(frames) -> np.ndarray:
    if any(f.hr_truth is None for f in frames):
        raise DataError("regressor training needs hr_truth on every normal frame")
    return np.array([f.hr_truth for f in frames])


def _labels(frames) -> np.ndarray:
    return np.array([1.0 if f.label is Label.ABNORMAL else 0.0 for f in frames])


# -- training --------------------------------------------------------------

@dataclass
class Trained:
    model: nn.Model
    metrics: dict
    best_epoch: int


def train_upsampler(dataset: Dataset, config: TrainConfig = UPSAMPLER_CONFIG,
                    spec: dsp.FilterSpec | None = None, hidden: int = 55, factor: int = 2) -> Trained:
    """Fit the upsampler on normal frames: low-rate input, conditioned 12 Hz target."""
    spec = spec or dsp.FilterSpec()
    tr, va, te = (normal_only(dataset.subset(s)) for s in Split)
    _require(tr, "train")

    def xy(frames):
        x = low_rate_inputs(frames, factor)
        y = np.stack([condition(f.samples, spec) for f in frames]) if frames else np.empty((0, HIGH_LEN))
        return x, y

    (xt, yt), (xv, yv), (xe, ye) = xy(tr), xy(va), xy(te)
    model = build_upsampler(hidden, in_len=xt.shape[1], seed=config.seed)
    res = nn.train(model, xt, yt, config, xv, yv)
    model = nn.quantize(res.model)
    metrics = {"val_rmse": rmse(model(xv), yv) if len(xv) else None}
    if len(xe):
        pred = model(xe)
        metrics["test_rmse"] = rmse(pred, ye)
        metrics["test_rmse_observed"] = rmse(pred[:, ::factor], xe)
    return Trained(model, metrics, res.best_epoch)


def upsample(upsampler: nn.Model, frames, factor: int = 2) -> np.ndarray:
    return upsampler(low_rate_inputs(frames, factor)) if frames else np.empty((0, HIGH_LEN))


def train_classifier(dataset: Dataset, upsampler: nn.Model, config: TrainConfig = CLASSIFIER_CONFIG) -> Trained:
    """Fit the quality gate on upsampler outputs plus raw abnormal 12 Hz frames."""
    tr, va, te = (dataset.subset(s) for s in Split)
    _require(tr, "train")
    raw_abnormal = [f for f in tr if f.label is Label.ABNORMAL]
    xt = np.concatenate([upsample(upsampler, tr), np.stack([f.samples for f in raw_abnormal]) if raw_abnormal
                         else np.empty((0, HIGH_LEN))])
    yt = np.concatenate([_labels(tr), np.ones(len(raw_abnormal))])
    xv, yv = upsample(upsampler, va), _labels(va)

    model = build_classifier(seed=config.seed)
    res = nn.train(model, xt, yt, config, xv, yv)
    model = nn.quantize(res.model)
    metrics = {}
    for name, frames in (("val", va), ("test", te)):
        if frames:
            p = model(upsample(upsampler, frames)).reshape(-1)
            f1, acc = f1_accuracy(p > GATE_THRESHOLD, _labels(frames) > 0.5)
            metrics[f"{name}_f1"], metrics[f"{name}_accuracy"] = f1, acc
    return Trained(model, metrics, res.best_epoch)


def train_regressor(dataset: Dataset, upsampler: nn.Model, config: TrainConfig = REGRESSOR_CONFIG,
                    variant: str = "cnn") -> Trained:
    """Fit the HR regressor on upsampled normal frames; targets in BPM."""
    tr, va, te = (normal_only(dataset.subset(s)) for s in Split)
    _require(tr, "train")
    xt, yt = upsample(upsampler, tr), _truths(tr)
    xv, yv = upsample(upsampler, va), _truths(va) if va else np.empty(0)

    model = build_regressor(variant, seed=config.seed)
    res = nn.train(model, xt, yt, config, xv, yv)
    model = nn.quantize(res.model)
    metrics = {}
    for name, x, y in (("val", xv, yv), ("test", upsample(upsampler, te), _truths(te) if te else np.empty(0))):
        if len(y):
            pred = model(x).reshape(-1)
            metrics[f"{name}_rmse"], metrics[f"{name}_mae"] = rmse(pred, y), mae(pred, y)
    return Trained(model, metrics, res.best_epoch)


# -- bundle ----------------------------------------------------------------

MODEL_FILES = {"upsampler": "upsampler.thr", "classifier": "classifier.thr", "regressor": "regressor.thr"}
MANIFEST = "manifest.json"


@dataclass
class TrainedBundle:
    upsampler: nn.Model
    classifier: nn.Model
    regressor: nn.Model
    configs: dict = field(default_factory=lambda: dict(DEFAULT_CONFIGS))
    metrics: dict = field(default_factory=dict)
    spec: dsp.FilterSpec = field(default_factory=dsp.FilterSpec)

    def __post_init__(self):
        if self.upsampler.input_size != LOW_LEN or self.upsampler.output_size != HIGH_LEN:
            raise ShapeError("upsampler must map 35 -> 69")
        for name in ("classifier", "regressor"):
            m = getattr(self, name)
            if m.input_size != HIGH_LEN or m.output_size != 1:
                raise ShapeError(f"{name} must map 69 -> 1")
        if self.classifier.layers[-1].activation is not Activation.SIGMOID:
            raise ShapeError("classifier must end in a sigmoid")
        self.compiled = {name: nn.compile_model(m) for name, m in self.models().items()}

    def models(self) -> dict:
        return {"upsampler": self.upsampler, "classifier": self.classifier, "regressor": self.regressor}

    def model_bytes(self, names=("upsampler", "classifier", "regressor")) -> int:
        return sum(len(nn.model_to_bytes(getattr(self, n))) for n in names)


def train_bundle(dataset: Dataset, configs: dict | None = None, spec: dsp.FilterSpec | None = None,
                 seed: int | None = None, regressor_variant: str = "cnn", log=None) -> TrainedBundle:
    """Train upsampler, then classifier and regressor on its outputs.

    ``seed``, when given, overrides the seed of all three configs.
    """
    configs = {**DEFAULT_CONFIGS, **(configs or {})}
    if seed is not None:
        configs = {k: replace(c, seed=seed) for k, c in configs.items()}
    spec = spec or dsp.FilterSpec()
    log = log or (lambda msg: None)

    def stage(name, fn, *args):
        log(f"training {name}")
        try:
            return fn(*args)
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"{name}: {exc}") from exc

    up = stage("upsampler", train_upsampler, dataset, configs["upsampler"], spec)
    cls = stage("classifier", train_classifier, dataset, up.model, configs["classifier"])
    reg = stage("regressor", train_regressor, dataset, up.model, configs["regressor"], regressor_variant)
    metrics = {
        "upsampler": {**up.metrics, "best_epoch": up.best_epoch, "params": nn.param_count(up.model)},
        "classifier": {**cls.metrics, "best_epoch": cls.best_epoch, "params": nn.param_count(cls.model)},
        "regressor": {**reg.metrics, "best_epoch": reg.best_epoch, "params": nn.param_count(reg.model)},
    }
    return TrainedBundle(up.model, cls.model, reg.model, configs, metrics, spec)


def save_bundle(bundle: TrainedBundle, out_dir, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, model in bundle.models().items():
        data = nn.model_to_bytes(model)
        (out / MODEL_FILES[name]).write_bytes(data)
        files[name] = {"file": MODEL_FILES[name], "bytes": len(data), "crc32": f"{zlib.crc32(data):08x}"}
    manifest = {
        "files": files,
        "metrics": bundle.metrics,
        "configs": {k: c.to_dict() for k, c in bundle.configs.items()},
        "filters": bundle.spec.to_dict(),
    }
    if extra:
        manifest.update(extra)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def load_bundle(bundle_dir) -> TrainedBundle:
    """Load the three model files; each file's CRC32 is checked on load."""
    d = Path(bundle_dir)
    manifest = {}
    if (d / MANIFEST).exists():
        manifest = json.loads((d / MANIFEST).read_text(encoding="utf-8"))
    models = {name: nn.load_model(d / fname) for name, fname in MODEL_FILES.items()}
    configs = {k: TrainConfig.from_dict(v) for k, v in manifest.get("configs", {}).items()} or dict(DEFAULT_CONFIGS)
    spec = dsp.FilterSpec(**manifest["filters"]) if "filters" in manifest else dsp.FilterSpec()
    return TrainedBundle(**models, configs=configs, metrics=manifest.get("metrics", {}), spec=spec)
