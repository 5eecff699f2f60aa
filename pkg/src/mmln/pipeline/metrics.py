"""Binary classification metrics and ROC curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..errors import MetricsError


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    auc: float
    f1: float
    precision: float
    recall: float
    roc: tuple[tuple[float, float], ...]
    threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    precision_defined: bool = True
    recall_defined: bool = True

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy, "auc": self.auc, "f1": self.f1,
            "precision": self.precision, "recall": self.recall,
            "threshold": self.threshold,
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
            "n": self.n,
        }


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, True) if den else (0.0, False)


def confusion_metrics(tp: int, fp: int, fn: int, tn: int) -> dict:
    """Accuracy, precision, recall and F1 from a confusion matrix.

    An empty denominator yields 0 and a ``*_defined=False`` flag.
    """
    precision, p_ok = _ratio(tp, tp + fp)
    recall, r_ok = _ratio(tp, tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"accuracy": (tp + tn) / (tp + fp + fn + tn), "precision": precision, "recall": recall,
            "f1": f1, "precision_defined": p_ok, "recall_defined": r_ok}


def roc_curve(scores: Sequence[tuple[float, bool]]) -> list[tuple[float, float]]:
    """(fpr, tpr) at every distinct score cut-point, from (0, 0) to (1, 1).

    Equal scores are grouped into a single step.
    """
    pos = sum(1 for _, y in scores if y)
    neg = len(scores) - pos
    if pos == 0 or neg == 0:
        raise MetricsError("ROC/AUC needs both positive and negative cases")
    ranked = sorted(scores, key=lambda s: -s[0])
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(ranked):
        score = ranked[i][0]
        while i < len(ranked) and ranked[i][0] == score:
            if ranked[i][1]:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / neg, tp / pos))
    return points


def auc_trapezoid(roc: Iterable[tuple[float, float]]) -> float:
    roc = list(roc)
    return math.fsum((x1 - x0) * (y0 + y1) / 2.0 for (x0, y0), (x1, y1) in zip(roc, roc[1:]))


def compute_metrics(scores: Sequence[tuple[float, bool]], threshold: float = 0.5) -> MetricsReport:
    """Confusion at ``probability >= threshold`` plus trapezoidal ROC AUC."""
    scores = [(float(p), bool(y)) for p, y in scores]
    if not scores:
        raise MetricsError("no scores to evaluate")
    for p, _ in scores:
        if not math.isfinite(p):
            raise MetricsError(f"non-finite score {p}")
    tp = sum(1 for p, y in scores if p >= threshold and y)
    fp = sum(1 for p, y in scores if p >= threshold and not y)
    fn = sum(1 for p, y in scores if p < threshold and y)
    tn = len(scores) - tp - fp - fn
    roc = roc_curve(scores)
    m = confusion_metrics(tp, fp, fn, tn)
    return MetricsReport(m["accuracy"], auc_trapezoid(roc), m["f1"], m["precision"], m["recall"],
                         tuple(roc), threshold, tp, fp, fn, tn,
                         m["precision_defined"], m["recall_defined"])


def roc_csv(report: MetricsReport) -> str:
    return "fpr,tpr\n" + "".join(f"{x!r},{y!r}\n" for x, y in report.roc)
