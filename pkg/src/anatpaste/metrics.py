"""ROC/AUC, best-F1 threshold search, and confusion-based metrics.

Conventions fixed across the module: abnormal is the positive class, a point
is predicted abnormal iff score > threshold (strict), AUC gives half credit
to ties, and the F1 search breaks ties toward the lowest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingleClassError, UndefinedF1Error

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class LabeledScores:
    """(id, score, label) triples; labels are 0 (normal) / 1 (abnormal)."""

    ids: list
    scores: np.ndarray
    labels: np.ndarray
    groups: list | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.ids) != len(self.scores) or len(self.scores) != len(self.labels):
            raise InvalidArgumentError("ids, scores and labels must align")
        if not np.isfinite(self.scores).all():
            raise InvalidArgumentError("scores must be finite")
        if not np.isin(self.labels, (0, 1)).all():
            raise InvalidArgumentError("labels must be 0 or 1")


@dataclass
class MetricsReport:
    auc: float
    accuracy: float
    f1: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def confusion(self):
        return (self.tp, self.fp, self.tn, self.fn)


def _cumulative_counts(ls: LabeledScores):
    """Distinct scores (descending) with cumulative TP/FP after each group."""
    order = np.argsort(-ls.scores, kind="stable")
    s = ls.scores[order]
    y = ls.labels[order]
    boundaries = np.flatnonzero(np.diff(s)) if len(s) > 1 else np.array([], dtype=np.int64)
    last = np.concatenate([boundaries, [len(s) - 1]])
    tp = np.cumsum(y)[last]
    fp = np.cumsum(1 - y)[last]
    return s[last], tp, fp


def roc_curve(ls: LabeledScores):
    """(fpr, tpr, thresholds) swept from predict-none to predict-all.

    Thresholds are +inf, the midpoints between consecutive distinct scores,
    then -inf; both (0, 0) and (1, 1) are always present.
    """
    pos = int(ls.labels.sum())
    neg = len(ls.labels) - pos
    if pos == 0 or neg == 0:
        raise SingleClassError("ROC requires both classes")
    distinct, tp, fp = _cumulative_counts(ls)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    thresholds = np.concatenate([[np.inf], mids, [-np.inf]])
    fpr = np.concatenate([[0.0], fp / neg])
    tpr = np.concatenate([[0.0], tp / pos])
    return fpr, tpr, thresholds


def auc(ls: LabeledScores) -> float:
    """Trapezoidal area under the ROC curve."""
    fpr, tpr, _ = roc_curve(ls)
    return float(_trapezoid(tpr, fpr))


def best_f1_threshold(ls: LabeledScores):
    """(threshold, f1) maximising F1 for the abnormal class.

    Candidates are the midpoints between consecutive distinct sorted scores
    plus -inf (predict everything abnormal); ties resolve to the lowest
    threshold.
    """
    pos = int(ls.labels.sum())
    if pos == 0:
        raise UndefinedF1Error("F1 is undefined without abnormal examples")
    distinct, tp, fp = _cumulative_counts(ls)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    candidates = np.concatenate([mids, [-np.inf]])
    fn = pos - tp
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1), 0.0)
    best_t, best_f = np.inf, -1.0
    for t, f in zip(candidates, f1):
        if f >= best_f:
            best_t, best_f = float(t), float(f)
    return best_t, best_f


def metrics_at(ls: LabeledScores, threshold: float) -> MetricsReport:
    """Accuracy/F1/confusion at a threshold (abnormal iff score > threshold).

    AUC is included when both classes are present, NaN otherwise.
    """
    pred = ls.scores > threshold
    actual = ls.labels == 1
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    tn = int(np.sum(~pred & ~actual))
    fn = int(np.sum(~pred & actual))
    n = len(ls.labels)
    accuracy = (tp + tn) / n if n else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    pos = int(ls.labels.sum())
    auc_value = auc(ls) if 0 < pos < n else float("nan")
    return MetricsReport(auc=auc_value, accuracy=accuracy, f1=f1,
                         threshold=float(threshold), tp=tp, fp=fp, tn=tn, fn=fn)


def metrics_by_group(ls: LabeledScores, threshold: float) -> dict:
    """Per-group reports for labeled scores carrying a group tag."""
    if ls.groups is None:
        raise InvalidArgumentError("labeled scores carry no group tags")
    groups = np.asarray(ls.groups)
    out = {}
    for g in sorted(set(ls.groups)):
        sel = groups == g
        sub = LabeledScores(ids=[i for i, keep in zip(ls.ids, sel) if keep],
                            scores=ls.scores[sel], labels=ls.labels[sel])
        out[g] = metrics_at(sub, threshold)
    return out
