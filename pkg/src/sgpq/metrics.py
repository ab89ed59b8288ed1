"""Pointwise confusion counts and F1."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class EvalReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float

    def to_dict(self):
        return asdict(self)


def _ratio(a, b):
    return a / b if b > 0 else 0.0


def report_from_counts(tp: int, fp: int, fn: int) -> EvalReport:
    """Undefined precision, recall or F1 are reported as 0."""
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return EvalReport(int(tp), int(fp), int(fn), precision, recall, f1)


def confusion_report(predicted, labels) -> EvalReport:
    pred = np.asarray(predicted).astype(bool).ravel()
    lab = np.asarray(labels).astype(bool).ravel()
    if pred.shape != lab.shape:
        raise InputError(f"{pred.size} predictions but {lab.size} labels")
    tp = int(np.sum(pred & lab))
    fp = int(np.sum(pred & ~lab))
    fn = int(np.sum(~pred & lab))
    return report_from_counts(tp, fp, fn)
