"""Confusion-matrix based classification metrics.

Zero denominators never produce NaN: the metric is reported as 0 and the
matching ``*_undefined`` flag is raised instead.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ShapeError
from .nn import predict

CSV_FIELDS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


def confusion(preds, truth, classes: int) -> np.ndarray:
    """``cm[i, j]`` counts samples of true class ``i`` predicted as ``j``."""
    preds = np.asarray(preds, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if preds.shape != truth.shape:
        raise ValueError(f"{preds.size} predictions vs {truth.size} labels")
    for name, v in (("prediction", preds), ("label", truth)):
        if v.size and (v.min() < 0 or v.max() >= classes):
            raise ValueError(f"{name} outside [0, {classes})")
    return np.bincount(truth * classes + preds, minlength=classes * classes).reshape(classes, classes)


def _ratio(num, den) -> tuple[float, bool]:
    return (float(num) / float(den), False) if den else (0.0, True)


def precision(cm: np.ndarray, c: int) -> float:
    return _ratio(cm[c, c], cm[:, c].sum())[0]


def recall(cm: np.ndarray, c: int) -> float:
    return _ratio(cm[c, c], cm[c, :].sum())[0]


def f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False
    recall_undefined: bool = False


@dataclass
class MetricsReport:
    accuracy: float
    per_class: list[ClassScores]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray = field(repr=False)
    average: str = "macro"

    def csv_row(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in CSV_FIELDS}

    def to_json(self) -> str:
        record = {
            "average": self.average,
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": [asdict(s) for s in self.per_class],
            "confusion": self.confusion.tolist(),
        }
        return json.dumps(record, indent=2)


def report_from_confusion(cm: np.ndarray, average: str = "macro") -> MetricsReport:
    """Build a report from a confusion matrix.

    ``average`` picks what the headline ``macro_*`` fields hold: ``"macro"``
    (unweighted class mean, the default), ``"micro"`` or ``"weighted"``
    (support-weighted class mean).
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    per_class = []
    for c in range(cm.shape[0]):
        p, p_undef = _ratio(cm[c, c], cm[:, c].sum())
        r, r_undef = _ratio(cm[c, c], cm[c, :].sum())
        per_class.append(ClassScores(p, r, f1(p, r), p_undef, r_undef))
    accuracy = float(np.trace(cm)) / total if total else 0.0

    if average == "macro":
        mp = float(np.mean([s.precision for s in per_class]))
        mr = float(np.mean([s.recall for s in per_class]))
        mf = float(np.mean([s.f1 for s in per_class]))
    elif average == "micro":
        # single-label multiclass: micro precision == micro recall == accuracy
        mp = mr = mf = accuracy
    elif average == "weighted":
        support = cm.sum(axis=1)
        w = support / total if total else np.zeros(len(per_class))
        mp = float(np.dot(w, [s.precision for s in per_class]))
        mr = float(np.dot(w, [s.recall for s in per_class]))
        mf = float(np.dot(w, [s.f1 for s in per_class]))
    else:
        raise ValueError(f"unknown averaging {average!r}")
    return MetricsReport(accuracy, per_class, mp, mr, mf, cm, average)


def evaluate(model, test, average: str = "macro") -> MetricsReport:
    """Score ``model`` on ``test`` using argmax predictions."""
    if test.x.shape[1] != model.layers[0].fan_in:
        raise ShapeError(
            f"test set has {test.x.shape[1]} features, model expects {model.layers[0].fan_in}"
        )
    preds = predict(model, test.x)
    return report_from_confusion(confusion(preds, test.y, model.n_classes), average)
