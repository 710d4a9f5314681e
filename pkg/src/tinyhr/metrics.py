"""Error and classification metrics."""

from __future__ import annotations

import numpy as np

from .errors import MetricError


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.size == 0:
        raise MetricError("metric of an empty sequence")
    if pred.shape != truth.shape:
        raise MetricError(f"length mismatch: {pred.size} predictions, {truth.size} truths")
    return pred, truth


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def f1_accuracy(pred_labels, truth_labels) -> tuple[float, float]:
    """F1 of the positive (abnormal) class, and accuracy.

    F1 is defined as 0 when there are no true positives.
    """
    pred = np.asarray(pred_labels).astype(bool).reshape(-1)
    truth = np.asarray(truth_labels).astype(bool).reshape(-1)
    if pred.size == 0:
        raise MetricError("metric of an empty sequence")
    if pred.shape != truth.shape:
        raise MetricError(f"length mismatch: {pred.size} vs {truth.size}")
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    accuracy = float(np.mean(pred == truth))
    f1 = 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
    return f1, accuracy
