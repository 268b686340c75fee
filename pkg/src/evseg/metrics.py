"""Confusion-matrix based segmentation metrics.

``counts[g, p]`` holds the number of pixels with ground truth ``g`` predicted
as ``p``; pixels whose ground truth is the ignore id are never counted.

Two MIoU policies are exposed because they disagree whenever a class is
absent from both truth and prediction:

* ``literal_eq9`` -- IoU_c = TP / max(1, TP + FP + FN), averaged over all C
  classes, so an absent class contributes 0.
* ``exclude_absent`` -- average only over classes seen in truth or prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import LabelMap
from .errors import BadClassId, EmptyEvaluation, GeometryMismatch

MIOU_POLICIES = ("literal_eq9", "exclude_absent")


@dataclass
class ConfusionMatrix:
    num_classes: int
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (self.num_classes, self.num_classes):
                raise ValueError("counts must be C x C")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("class count mismatch")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return self + other


def confusion_from_arrays(truth: np.ndarray, pred: np.ndarray, num_classes: int,
                          ignore_id: int = 255) -> ConfusionMatrix:
    truth = np.asarray(truth).reshape(-1).astype(np.int64)
    pred = np.asarray(pred).reshape(-1).astype(np.int64)
    if truth.shape != pred.shape:
        raise GeometryMismatch(f"{truth.shape} vs {pred.shape}")
    if ((pred < 0) | (pred >= num_classes)).any():
        bad = pred[(pred < 0) | (pred >= num_classes)][0]
        raise BadClassId(f"prediction contains class {bad} (num_classes={num_classes})")
    keep = truth != ignore_id
    t, p = truth[keep], pred[keep]
    if ((t < 0) | (t >= num_classes)).any():
        raise BadClassId(f"truth contains class {t[(t < 0) | (t >= num_classes)][0]}")
    counts = np.bincount(t * num_classes + p, minlength=num_classes * num_classes)
    return ConfusionMatrix(num_classes, counts.reshape(num_classes, num_classes))


def accumulate_confusion(cm: ConfusionMatrix, truth: LabelMap, pred: LabelMap) -> ConfusionMatrix:
    if truth.geometry != pred.geometry:
        raise GeometryMismatch(f"truth {truth.geometry} vs prediction {pred.geometry}")
    if (pred.data == pred.ignore_id).any():
        raise BadClassId("prediction contains the ignore id")
    return cm + confusion_from_arrays(truth.data, pred.data, cm.num_classes, truth.ignore_id)


def accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total
    if total == 0:
        raise EmptyEvaluation("no labeled pixels evaluated")
    return float(np.trace(cm.counts)) / total


def iou_per_class(cm: ConfusionMatrix) -> np.ndarray:
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - np.diag(cm.counts)
    return tp / np.maximum(1, union)


def miou(cm: ConfusionMatrix, absent_class_policy: str = "literal_eq9") -> tuple[list[float], float]:
    if cm.total == 0:
        raise EmptyEvaluation("no labeled pixels evaluated")
    ious = iou_per_class(cm)
    if absent_class_policy == "literal_eq9":
        mean = float(ious.mean())
    elif absent_class_policy == "exclude_absent":
        present = (cm.counts.sum(axis=0) + cm.counts.sum(axis=1)) > 0
        mean = float(ious[present].mean())
    else:
        raise ValueError(f"unknown policy {absent_class_policy!r}")
    return ious.tolist(), mean


def report(cm: ConfusionMatrix, class_names=None) -> dict[str, float | int]:
    """Flat key/value summary used by the ``eval`` command."""
    names = class_names or [f"class{c}" for c in range(cm.num_classes)]
    ious, m_lit = miou(cm, "literal_eq9")
    _, m_exc = miou(cm, "exclude_absent")
    out: dict[str, float | int] = {
        "pixels": cm.total,
        "correct": int(np.trace(cm.counts)),
        "accuracy": accuracy(cm),
        "miou_literal_eq9": m_lit,
        "miou_exclude_absent": m_exc,
    }
    for c, name in enumerate(names):
        out[f"iou.{name}"] = ious[c]
        out[f"pixels_truth.{name}"] = int(cm.counts[c].sum())
    return out
