"""Confusion counts and accuracy / precision / recall / F1.

Positive class is 1 (attack). Any ratio whose denominator is zero is reported
as 0.0 and its name is listed in ``MetricsReport.zero_division``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError, LabelError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def swapped(self) -> "ConfusionMatrix":
        """The same counts seen with class 0 as the positive class."""
        return ConfusionMatrix(tp=self.tn, tn=self.tp, fp=self.fn, fn=self.fp)


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass
class MetricsReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict[int, ClassScores] = field(default_factory=dict)
    macro: ClassScores | None = None
    threshold: float | None = None
    zero_division: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        cm = self.confusion
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": cm.tp,
            "tn": cm.tn,
            "fp": cm.fp,
            "fn": cm.fn,
            "threshold": self.threshold,
            "per_class": {str(c): asdict(s) for c, s in self.per_class.items()},
            "macro": asdict(self.macro) if self.macro else None,
            "zero_division": list(self.zero_division),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def _binary(v, name: str) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be a 1-D vector")
    if not np.isin(arr, (0, 1)).all():
        raise LabelError(f"{name} must contain only 0 and 1")
    return arr.astype(bool)


def confusion(predictions, labels) -> ConfusionMatrix:
    pred = _binary(predictions, "predictions")
    lab = _binary(labels, "labels")
    if pred.shape != lab.shape:
        raise ContractError(f"predictions ({pred.size}) and labels ({lab.size}) differ in length")
    if pred.size == 0:
        raise ContractError("cannot count an empty prediction vector")
    return ConfusionMatrix(
        tp=int(np.count_nonzero(pred & lab)),
        tn=int(np.count_nonzero(~pred & ~lab)),
        fp=int(np.count_nonzero(pred & ~lab)),
        fn=int(np.count_nonzero(~pred & lab)),
    )


def _ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def f1_from(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def class_scores(cm: ConfusionMatrix, flags: list[str] | None = None, tag: str = "") -> ClassScores:
    flags = [] if flags is None else flags
    p = _ratio(cm.tp, cm.tp + cm.fp, "precision" + tag, flags)
    r = _ratio(cm.tp, cm.tp + cm.fn, "recall" + tag, flags)
    if p + r == 0:
        flags.append("f1" + tag)
    return ClassScores(p, r, f1_from(p, r))


def compute_metrics(cm: ConfusionMatrix, threshold: float | None = None) -> MetricsReport:
    if cm.total <= 0:
        raise ContractError("confusion matrix is empty")
    flags: list[str] = []
    pos = class_scores(cm, flags)
    neg = class_scores(cm.swapped(), flags, tag="[0]")
    macro = ClassScores(
        (pos.precision + neg.precision) / 2,
        (pos.recall + neg.recall) / 2,
        (pos.f1 + neg.f1) / 2,
    )
    return MetricsReport(
        confusion=cm,
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=pos.precision,
        recall=pos.recall,
        f1=pos.f1,
        per_class={0: neg, 1: pos},
        macro=macro,
        threshold=threshold,
        zero_division=flags,
    )


def predict(scores, threshold: float) -> np.ndarray:
    """Attack verdict: score strictly greater than the threshold."""
    return (np.asarray(scores) > threshold).astype(np.int64)


def evaluate_scores(scores, labels, threshold: float) -> MetricsReport:
    return compute_metrics(confusion(predict(scores, threshold), labels), threshold)
