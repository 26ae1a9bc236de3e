"""Voxel IoU from a confusion matrix."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


def confusion_matrix(pred, target, n_labels: int) -> np.ndarray:
    """``cm[i, j]`` counts voxels with true label ``i`` predicted as ``j``."""
    pred = np.asarray(pred, dtype=np.int64).ravel()
    target = np.asarray(target, dtype=np.int64).ravel()
    if pred.shape != target.shape:
        raise ConfigError("prediction and target sizes differ")
    if len(pred) and (min(pred.min(), target.min()) < 0 or max(pred.max(), target.max()) >= n_labels):
        raise ConfigError(f"labels must lie in [0, {n_labels})")
    return np.bincount(target * n_labels + pred, minlength=n_labels * n_labels).reshape(n_labels, n_labels)


def iou_from_confusion(cm: np.ndarray) -> np.ndarray:
    """Per-label IoU; NaN where a label occurs in neither prediction nor target."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, tp / np.where(union > 0, union, 1), np.nan)


def mean_foreground_iou(iou: np.ndarray) -> float:
    """Macro mean over foreground labels (1..K), skipping NaN entries; NaN if none remain."""
    fg = np.asarray(iou[1:], dtype=np.float64)
    fg = fg[~np.isnan(fg)]
    return float(fg.mean()) if len(fg) else float("nan")
