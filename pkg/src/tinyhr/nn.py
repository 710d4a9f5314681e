"""A small numpy neural-network engine: dense and 1-D conv layers.

Conv weights are ``(out, in, k)`` and a conv layer consumes a
``(channels, length)`` input; a dense layer after a conv sees the
channel-major flatten of its output, so ``5x61 -> 305`` needs no extra layer.
Internally conv activations are held channels-last for speed.

Training runs in float64; files store float32.
"""

from __future__ import annotations

import enum
import functools
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import (
    BadMagic,
    ChecksumMismatch,
    DataError,
    ShapeError,
    ShapeInconsistency,
    TrainingDiverged,
    TruncatedPayload,
)
from .metrics import f1_accuracy


class Kind(enum.IntEnum):
    DENSE = 0
    CONV1D = 1


class Activation(enum.IntEnum):
    NONE = 0
    RELU = 1
    SINE = 2
    SIGMOID = 3


@dataclass(frozen=True)
class LayerSpec:
    """One layer.  For ``CONV1D`` ``in_dim``/``out_dim`` count channels."""

    kind: Kind
    in_dim: int
    out_dim: int
    activation: Activation = Activation.NONE
    kernel: int = 0
    in_length: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.in_dim < 1 or self.out_dim < 1:
            raise ShapeError(f"layer dimensions must be positive: {self}")
        if self.kind is Kind.CONV1D:
            if self.kernel < 1 or self.in_length < 1:
                raise ShapeError(f"conv layer needs kernel and in_length: {self}")
            if self.in_length - self.kernel + 1 <= 0:
                raise ShapeError(f"kernel {self.kernel} longer than input {self.in_length}")

    @property
    def out_length(self) -> int:
        return self.in_length - self.kernel + 1

    @property
    def input_shape(self) -> tuple:
        if self.kind is Kind.DENSE:
            return (self.in_dim,)
        return (self.in_dim, self.in_length)

    @property
    def output_shape(self) -> tuple:
        if self.kind is Kind.DENSE:
            return (self.out_dim,)
        return (self.out_dim, self.out_length)

    @property
    def weight_shape(self) -> tuple:
        if self.kind is Kind.DENSE:
            return (self.out_dim, self.in_dim)
        return (self.out_dim, self.in_dim, self.kernel)

    @property
    def fans(self) -> tuple[int, int]:
        if self.kind is Kind.DENSE:
            return self.in_dim, self.out_dim
        return self.in_dim * self.kernel, self.out_dim * self.kernel


def dense(in_dim, out_dim, activation=Activation.NONE) -> LayerSpec:
    return LayerSpec(Kind.DENSE, in_dim, out_dim, activation)


def conv1d(in_channels, out_channels, kernel, in_length, activation=Activation.NONE) -> LayerSpec:
    return LayerSpec(Kind.CONV1D, in_channels, out_channels, activation, kernel, in_length)


def _size(shape):
    return int(np.prod(shape))


@dataclass(eq=False)
class Model:
    layers: tuple
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def __post_init__(self):
        self.layers = tuple(self.layers)
        if not self.layers:
            raise ShapeError("a model needs at least one layer")
        for i in range(1, len(self.layers)):
            prev, cur = self.layers[i - 1], self.layers[i]
            if _size(prev.output_shape) != _size(cur.input_shape):
                raise ShapeError(
                    f"layer {i} expects {cur.input_shape} but layer {i - 1} produces {prev.output_shape}"
                )
        if not self.weights:
            self.weights = [np.zeros(l.weight_shape) for l in self.layers]
            self.biases = [np.zeros(l.out_dim) for l in self.layers]
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for i, (l, w, b) in enumerate(zip(self.layers, self.weights, self.biases)):
            if w.shape != l.weight_shape or b.shape != (l.out_dim,):
                raise ShapeError(f"layer {i}: parameter shapes {w.shape}/{b.shape} do not match {l}")

    @property
    def input_size(self) -> int:
        return _size(self.layers[0].input_shape)

    @property
    def output_size(self) -> int:
        return _size(self.layers[-1].output_shape)

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "Model":
        return Model(self.layers, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __call__(self, x):
        return forward(self, x)


def param_count(model: Model) -> int:
    return sum(w.size for w in model.weights) + sum(b.size for b in model.biases)


def init_model(layers, seed: int = 0) -> Model:
    """Glorot-uniform weights, zero biases, from a seeded Philox stream."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    model = Model(layers)
    for l, w in zip(model.layers, model.weights):
        fan_in, fan_out = l.fans
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return model


# -- activations and losses ------------------------------------------------

def activation_apply(kind: Activation, x):
    kind = Activation(kind)
    if kind is Activation.NONE:
        return x
    if kind is Activation.RELU:
        return np.maximum(x, 0.0)
    if kind is Activation.SINE:
        return np.sin(x)
    return expit(x)


_ACT_FUNCS = {
    Activation.NONE: None,
    Activation.RELU: lambda z: np.maximum(z, 0.0),
    Activation.SINE: np.sin,
    Activation.SIGMOID: expit,
}


def _activation_grad(kind: Activation, z, a):
    if kind is Activation.NONE:
        return 1.0
    if kind is Activation.RELU:
        return (z > 0).astype(z.dtype)
    if kind is Activation.SINE:
        return np.cos(z)
    return a * (1.0 - a)


class Loss(enum.Enum):
    MSE = "mse"
    BCE = "bce"


BCE_CLAMP = 1e-7


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return pred, target


def loss_eval(loss: Loss, pred, target) -> float:
    pred, target = _check_pair(pred, target)
    if Loss(loss) is Loss.MSE:
        return float(np.mean((pred - target) ** 2))
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(np.mean(-(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))))


def _loss_grad(loss: Loss, pred, target):
    n = pred.size
    if loss is Loss.MSE:
        return 2.0 * (pred - target) / n
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    g = (p - target) / (p * (1.0 - p)) / n
    # the clamp is flat outside its range
    return np.where((pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP), g, 0.0)


# -- forward / backward ----------------------------------------------------

def _as_batch(model: Model, x):
    x = np.asarray(x, dtype=np.float64)
    n_in = model.input_size
    if x.ndim >= 1 and x.size == n_in and (x.ndim == 1 or x.shape == model.layers[0].input_shape):
        return x.reshape(1, n_in), True
    if x.ndim >= 2 and _size(x.shape[1:]) == n_in:
        return x.reshape(x.shape[0], n_in), False
    raise ShapeError(f"layer 0 expects input of size {n_in}, got array of shape {x.shape}")


@functools.lru_cache(maxsize=64)
def _window_index(l: LayerSpec, channel_major: bool = False) -> np.ndarray:
    """Flat gather index ``(out_length, k*C)`` for the im2col windows of ``l``.

    Column ``j*C + c`` of row ``t`` addresses sample ``t + j`` of channel ``c``
    in a flattened ``(length, channels)`` input, or ``(channels, length)``
    when ``channel_major``.
    """
    t = np.arange(l.out_length)[:, None, None]
    j = np.arange(l.kernel)[None, :, None]
    c = np.arange(l.in_dim)[None, None, :]
    if channel_major:
        idx = c * l.in_length + t + j
    else:
        idx = (t + j) * l.in_dim + c
    return idx.reshape(l.out_length, -1)


def _conv_matrix(w):
    """``(O, C, k)`` kernel as a ``(k*C, O)`` matrix matching the gathered windows."""
    return w.transpose(2, 1, 0).reshape(-1, w.shape[0])


def _to_channels_last(l: LayerSpec, a):
    if a.ndim == 3:
        return a
    return a.reshape(a.shape[0], l.in_dim, l.in_length).transpose(0, 2, 1)


def _flat(a):
    """Channel-major flatten of a batch, whatever its layout."""
    if a.ndim == 3:
        return a.transpose(0, 2, 1).reshape(a.shape[0], -1)
    return a


def _layer_forward(l: LayerSpec, w, b, a):
    """Pre-activation of one layer.

    Conv activations are held channels-last, ``(batch, length, channels)``,
    so the im2col gather needs no transposes.  Returns ``(z, layer_input, cols)``.
    """
    if l.kind is Kind.DENSE:
        a = _flat(a)
        return a @ w.T + b, a, None
    a = _to_channels_last(l, a)
    bsz, lo = a.shape[0], l.out_length
    cols = a.reshape(bsz, -1).take(_window_index(l), axis=1).reshape(bsz * lo, -1)
    z = (cols @ _conv_matrix(w)).reshape(bsz, lo, l.out_dim) + b
    return z, a, cols


def forward(model: Model, x) -> np.ndarray:
    """Run the network.  A single sample in gives a 1-D output back."""
    a, single = _as_batch(model, x)
    for l, w, b in zip(model.layers, model.weights, model.biases):
        z, _, _ = _layer_forward(l, w, b, a)
        a = activation_apply(l.activation, z)
    out = _flat(a)
    return out[0] if single else out


def forward_trace(model: Model, x) -> list[tuple]:
    """Per-layer output shapes for one sample, as observed while running it.

    Conv outputs are reported channel-first, ``(channels, length)``; the
    implicit flatten in front of a dense layer shows up as its own entry.
    """
    a, _ = _as_batch(model, x)
    shapes = [model.layers[0].input_shape]
    for l, w, b in zip(model.layers, model.weights, model.biases):
        if l.kind is Kind.DENSE and a.ndim == 3:
            a = _flat(a)
            shapes.append(a.shape[1:])
        z, _, _ = _layer_forward(l, w, b, a)
        a = activation_apply(l.activation, z)
        shape = a.shape[1:] if a.ndim == 2 else (a.shape[2], a.shape[1])
        if shape != l.output_shape:
            raise ShapeError(f"layer produced {shape}, declared {l.output_shape}")
        shapes.append(shape)
    return shapes


def backward(model: Model, x, target, loss: Loss):
    """Loss value and exact gradients for every weight and bias.

    Returns ``(loss_value, weight_grads, bias_grads)``.
    """
    loss = Loss(loss)
    a, _ = _as_batch(model, x)
    target = np.asarray(target, dtype=np.float64).reshape(a.shape[0], model.output_size)

    cache = []
    for l, w, b in zip(model.layers, model.weights, model.biases):
        z, a_in, cols = _layer_forward(l, w, b, a)
        a = activation_apply(l.activation, z)
        cache.append((z, a, a_in, cols))
    pred = _flat(a)
    value = loss_eval(loss, pred, target)

    n_layers = len(model.layers)
    gw = [None] * n_layers
    gb = [None] * n_layers
    delta = _loss_grad(loss, pred, target)
    if a.ndim == 3:
        delta = delta.reshape(a.shape[0], a.shape[2], a.shape[1]).transpose(0, 2, 1)
    for i in range(n_layers - 1, -1, -1):
        l, w = model.layers[i], model.weights[i]
        z, out, a_in, cols = cache[i]
        dz = delta if l.activation is Activation.NONE else delta * _activation_grad(l.activation, z, out)
        if l.kind is Kind.DENSE:
            gw[i] = dz.T @ a_in
            gb[i] = dz.sum(axis=0)
            if i:
                delta = dz @ w
        else:
            bsz, lo = dz.shape[0], l.out_length
            dz2 = dz.reshape(bsz * lo, l.out_dim)
            gw[i] = (cols.T @ dz2).reshape(l.kernel, l.in_dim, l.out_dim).transpose(2, 1, 0)
            gb[i] = dz2.sum(axis=0)
            if i:
                dcols = (dz2 @ _conv_matrix(w).T).reshape(bsz, lo, l.kernel, l.in_dim)
                delta = np.zeros((bsz, l.in_length, l.in_dim))
                for j in range(l.kernel):
                    delta[:, j:j + lo, :] += dcols[:, :, j, :]
        if i:
            prev = cache[i - 1][1]
            if prev.ndim == 3 and delta.ndim == 2:
                delta = delta.reshape(prev.shape[0], prev.shape[2], prev.shape[1]).transpose(0, 2, 1)
            elif prev.ndim == 2 and delta.ndim == 3:
                delta = delta.transpose(0, 2, 1).reshape(prev.shape)
    return value, gw, [np.ascontiguousarray(g) for g in gb]


class CompiledModel:
    """Single-frame inference with weights pre-packed for the hot path.

    Numerically the same network as :func:`forward`; it only skips the
    batch bookkeeping, which dominates at one 69-sample frame.
    """

    def __init__(self, model: Model):
        self.model = model
        steps = []
        prev_conv = None
        for l, w, b in zip(model.layers, model.weights, model.biases):
            act = _ACT_FUNCS[l.activation]
            if l.kind is Kind.DENSE:
                if prev_conv is not None:
                    # consume the channels-last activation without a transpose
                    c, n = prev_conv.out_dim, prev_conv.out_length
                    w = w.reshape(l.out_dim, c, n).transpose(0, 2, 1).reshape(l.out_dim, -1)
                steps.append((None, np.ascontiguousarray(w.T), b.copy(), act))
            else:
                # flat input from a dense layer (or the caller) is channel-major
                idx = _window_index(l, channel_major=prev_conv is None)
                steps.append((idx, np.ascontiguousarray(_conv_matrix(w)), b.copy(), act))
            prev_conv = l if l.kind is Kind.CONV1D else None
        self._steps = tuple(steps)
        self._ends_in_conv = prev_conv is not None

    def __call__(self, x) -> np.ndarray:
        a = x
        for idx, w, b, act in self._steps:
            if idx is None:
                a = a.reshape(-1) @ w + b
            else:
                a = a.reshape(-1).take(idx) @ w + b
            if act is not None:
                a = act(a)
        return a.T.reshape(-1) if self._ends_in_conv else a


def compile_model(model: Model) -> CompiledModel:
    return CompiledModel(model)


# -- optimizers ------------------------------------------------------------

class Optimizer(enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


class CheckpointMetric(enum.Enum):
    VAL_RMSE = "val_rmse"
    VAL_F1 = "val_f1"
    VAL_LOSS = "val_loss"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Optimizer = Optimizer.ADAM
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    epochs: int = 100
    loss: Loss = Loss.MSE
    checkpoint_metric: CheckpointMetric = CheckpointMetric.VAL_LOSS
    seed: int = 0
    batch_size: int | None = None  # None: full batch
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        object.__setattr__(self, "loss", Loss(self.loss))
        object.__setattr__(self, "checkpoint_metric", CheckpointMetric(self.checkpoint_metric))
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.weight_decay < 1:
            raise ValueError("weight_decay must lie in [0, 1)")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError("epochs must be a positive integer")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    def to_dict(self) -> dict:
        return {
            "optimizer": self.optimizer.value,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "loss": self.loss.value,
            "checkpoint_metric": self.checkpoint_metric.value,
            "seed": self.seed,
            "batch_size": self.batch_size,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def _decay_factor(decay_mask, i):
    """1.0, 0.0 or an elementwise 0/1 array saying where weight decay applies."""
    if decay_mask is None:
        return 1.0
    m = decay_mask[i]
    return m if isinstance(m, np.ndarray) else float(bool(m))


class SGD:
    """Plain gradient descent; weight decay enters as an L2 gradient term."""

    def __init__(self, config: TrainConfig):
        self.lr = config.learning_rate
        self.wd = config.weight_decay

    def step(self, params, grads, decay_mask=None):
        for i, (p, g) in enumerate(zip(params, grads)):
            if self.wd:
                g = g + self.wd * _decay_factor(decay_mask, i) * p
            p -= self.lr * g


class Adam:
    """Bias-corrected Adam with decoupled weight decay."""

    def __init__(self, config: TrainConfig):
        self.lr = config.learning_rate
        self.wd = config.weight_decay
        self.b1 = config.adam_beta1
        self.b2 = config.adam_beta2
        self.eps = config.adam_eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads, decay_mask=None):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            m, v = self.m[i], self.v[i]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            step = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            if self.wd:
                step += (self.lr * self.wd * _decay_factor(decay_mask, i)) * p
            p -= step


def make_optimizer(config: TrainConfig):
    return SGD(config) if config.optimizer is Optimizer.SGD else Adam(config)


def optimizer_step(params, grads, config: TrainConfig, state=None):
    """Functional form of one update: returns ``(new_params, state)``."""
    if state is None:
        state = make_optimizer(config)
    new = [np.array(p, dtype=np.float64, copy=True) for p in params]
    state.step(new, [np.asarray(g, dtype=np.float64) for g in grads])
    return new, state


# -- training --------------------------------------------------------------

@dataclass
class TrainResult:
    model: Model
    best_epoch: int
    best_score: float
    history: list = field(default_factory=list)


def _val_score(model: Model, metric: CheckpointMetric, loss: Loss, xv, yv) -> float:
    """Validation score, oriented so that lower is better."""
    pred = forward(model, xv).reshape(yv.shape)
    if metric is CheckpointMetric.VAL_RMSE:
        return float(np.sqrt(np.mean((pred - yv) ** 2)))
    if metric is CheckpointMetric.VAL_F1:
        f1, _ = f1_accuracy(pred.reshape(-1) > 0.5, yv.reshape(-1) > 0.5)
        return -f1
    return loss_eval(loss, pred, yv)


def _flat_copy(model: Model):
    """Copy of ``model`` whose parameters are views into one flat buffer."""
    params = model.params()
    flat = np.concatenate([p.reshape(-1) for p in params])
    views, offset = [], 0
    for p in params:
        views.append(flat[offset:offset + p.size].reshape(p.shape))
        offset += p.size
    return Model(model.layers, views[0::2], views[1::2]), flat


def train(model: Model, x, y, config: TrainConfig, x_val=None, y_val=None, *, decay_biases=False) -> TrainResult:
    """Fit ``model`` (a copy is trained) and return the best validation checkpoint.

    Without validation data the final epoch is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise DataError("empty training set")
    y = np.asarray(y, dtype=np.float64).reshape(len(x), -1)
    has_val = x_val is not None and len(x_val) > 0
    if has_val:
        x_val = np.asarray(x_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.float64).reshape(len(x_val), -1)

    model, flat = _flat_copy(model)
    decay = np.concatenate([
        np.full(p.size, 1.0 if (j % 2 == 0 or decay_biases) else 0.0) for j, p in enumerate(model.params())
    ])
    opt = make_optimizer(config)
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    n = len(x)
    bs = n if config.batch_size is None else min(config.batch_size, n)

    best, best_score, best_epoch = model.copy(), np.inf, 0
    history = []
    # divergence is detected explicitly below, so overflow warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(n) if bs < n else np.arange(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                value, gw, gb = backward(model, x[idx], y[idx], config.loss)
                if not np.isfinite(value):
                    raise TrainingDiverged(f"loss became {value} at epoch {epoch}")
                total += value * len(idx)
                grad = np.concatenate([g.reshape(-1) for pair in zip(gw, gb) for g in pair])
                opt.step([flat], [grad], [decay])
            train_loss = total / n
            if has_val:
                score = _val_score(model, config.checkpoint_metric, config.loss, x_val, y_val)
            else:
                score = train_loss
            if not np.isfinite(score) and config.checkpoint_metric is not CheckpointMetric.VAL_F1:
                raise TrainingDiverged(f"validation score became {score} at epoch {epoch}")
            history.append((train_loss, score))
            if score < best_score:
                best, best_score, best_epoch = model.copy(), score, epoch
    return TrainResult(best, best_epoch, float(best_score), history)


# -- model files -----------------------------------------------------------

MAGIC = b"THR1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBB")
_LAYER = struct.Struct("<BBIIII")
_CRC = struct.Struct("<I")


def model_to_bytes(model: Model) -> bytes:
    """Encode ``model`` in the THR1 binary layout (little-endian, float32)."""
    if len(model.layers) > 255:
        raise ShapeError("at most 255 layers can be serialized")
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(model.layers))]
    for l, w, b in zip(model.layers, model.weights, model.biases):
        if l.kind is Kind.DENSE:
            dims = (l.in_dim, l.out_dim, 0, 0)
        else:
            dims = (l.in_dim, l.out_dim, l.kernel, l.in_length)
        parts.append(_LAYER.pack(int(l.kind), int(l.activation), *dims))
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def model_from_bytes(data: bytes) -> Model:
    data = bytes(data)
    if len(data) < _HEADER.size + _CRC.size:
        raise TruncatedPayload(f"{len(data)} bytes is shorter than the file header")
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {magic!r}")

    # walk the layer table first so that a short file is reported as such
    specs, offset = [], _HEADER.size
    for i in range(count):
        if offset + _LAYER.size > len(data) - _CRC.size:
            raise TruncatedPayload(f"layer {i} header runs past end of file")
        kind, act, d0, d1, d2, d3 = _LAYER.unpack_from(data, offset)
        offset += _LAYER.size
        specs.append((i, kind, act, d0, d1, d2, d3, offset))
        if kind == Kind.DENSE:
            n_w = d0 * d1
        elif kind == Kind.CONV1D:
            n_w = d1 * d0 * d2
        else:
            n_w = 0
        offset += 4 * (n_w + d1)
    expected = offset + _CRC.size
    if len(data) < expected:
        raise TruncatedPayload(f"file has {len(data)} bytes, layer table implies {expected}")

    body, (stored,) = data[:-_CRC.size], _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(body) != stored:
        raise ChecksumMismatch(f"CRC32 {zlib.crc32(body):#010x} != stored {stored:#010x}")
    if version != FORMAT_VERSION:
        raise ShapeInconsistency(f"unsupported format version {version}")
    if len(data) != expected:
        raise ShapeInconsistency(f"{len(data) - expected} unexpected trailing bytes")

    layers, weights, biases = [], [], []
    try:
        for i, kind, act, d0, d1, d2, d3, pos in specs:
            if kind == Kind.DENSE:
                if d2 or d3:
                    raise ShapeInconsistency(f"dense layer {i} has non-zero conv dims")
                l = dense(d0, d1, Activation(act))
            elif kind == Kind.CONV1D:
                l = conv1d(d0, d1, d2, d3, Activation(act))
            else:
                raise ShapeInconsistency(f"layer {i}: unknown kind {kind}")
            n_w = _size(l.weight_shape)
            w = np.frombuffer(data, dtype="<f4", count=n_w, offset=pos).reshape(l.weight_shape)
            b = np.frombuffer(data, dtype="<f4", count=l.out_dim, offset=pos + 4 * n_w)
            layers.append(l)
            weights.append(w.astype(np.float64))
            biases.append(b.astype(np.float64))
        return Model(layers, weights, biases)
    except (ShapeError, ValueError) as exc:
        raise ShapeInconsistency(str(exc)) from exc


def save_model(model: Model, path) -> int:
    """Write ``model`` to ``path``; returns the number of bytes written."""
    data = model_to_bytes(model)
    Path(path).write_bytes(data)
    return len(data)


def load_model(path) -> Model:
    return model_from_bytes(Path(path).read_bytes())


def quantize(model: Model) -> Model:
    """Round parameters to float32, as they would be after a save/load."""
    return Model(
        model.layers,
        [w.astype(np.float32).astype(np.float64) for w in model.weights],
        [b.astype(np.float32).astype(np.float64) for b in model.biases],
    )
