"""Binary classification metrics with explicit confusion counts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1_macro: float
    f1_fake: float
    f1_true: float
    counts_fake: ClassCounts
    counts_true: ClassCounts
    n: int


def _class_counts(y_true: np.ndarray, y_pred: np.ndarray, positive: int) -> ClassCounts:
    t = y_true == positive
    p = y_pred == positive
    return ClassCounts(
        tp=int(np.sum(t & p)),
        fp=int(np.sum(~t & p)),
        tn=int(np.sum(~t & ~p)),
        fn=int(np.sum(t & ~p)),
    )


def metrics_from_predictions(y_true, y_pred) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValidationError("y_true and y_pred must be 1-D and equally long")
    if y_true.size == 0:
        raise ValidationError("metrics need at least one prediction")
    if np.any((y_true != 0) & (y_true != 1)):
        raise ValidationError("metrics require binary ground-truth labels")
    fake = _class_counts(y_true, y_pred, positive=0)
    true = _class_counts(y_true, y_pred, positive=1)
    return Metrics(
        accuracy=float(np.mean(y_true == y_pred)),
        f1_macro=(fake.f1 + true.f1) / 2.0,
        f1_fake=fake.f1,
        f1_true=true.f1,
        counts_fake=fake,
        counts_true=true,
        n=int(y_true.size),
    )
