"""Binary classification metrics with label 1 (theft) as the positive class."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1_weighted: float
    auc: float
    roc_points: list[tuple[float, float]]
    roc_thresholds: list[float] = field(default_factory=list)
    precision_degenerate: bool = False
    recall_degenerate: bool = False


def _binary(v, name: str) -> np.ndarray:
    a = np.asarray(v)
    if a.ndim != 1:
        raise MetricError(f"{name} must be 1-D")
    if a.size and not np.isin(a, (0, 1)).all():
        raise MetricError(f"{name} must contain only 0 and 1")
    return a.astype(np.int64)


def confusion(pred_labels, true_labels) -> ConfusionCounts:
    p = _binary(pred_labels, "pred_labels")
    t = _binary(true_labels, "true_labels")
    if p.shape != t.shape:
        raise MetricError(f"length mismatch: {p.size} predictions, {t.size} labels")
    if p.size == 0:
        raise MetricError("no samples")
    return ConfusionCounts(
        tp=int(np.sum((p == 1) & (t == 1))),
        tn=int(np.sum((p == 0) & (t == 0))),
        fp=int(np.sum((p == 1) & (t == 0))),
        fn=int(np.sum((p == 0) & (t == 1))),
    )


def _nonempty(c: ConfusionCounts) -> None:
    if c.total == 0:
        raise MetricError("empty confusion counts")


def accuracy(c: ConfusionCounts) -> float:
    _nonempty(c)
    return (c.tp + c.tn) / c.total


def precision(c: ConfusionCounts) -> float:
    """TP / (TP + FP); 0 when nothing was predicted positive."""
    _nonempty(c)
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: ConfusionCounts) -> float:
    """TP / (TP + FN); 0 when there are no positives."""
    _nonempty(c)
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def _f1(tp: int, fp: int, fn: int) -> float:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def per_class_f1(pred_labels, true_labels) -> tuple[float, float]:
    c = confusion(pred_labels, true_labels)
    # class 0 as positive swaps the roles of tp/tn and fp/fn
    return _f1(c.tn, c.fn, c.fp), _f1(c.tp, c.fp, c.fn)


def f1_weighted(pred_labels, true_labels) -> float:
    """Support-weighted mean of the one-vs-rest F1 of both classes."""
    f0, f1 = per_class_f1(pred_labels, true_labels)
    t = _binary(true_labels, "true_labels")
    s1 = int(t.sum())
    s0 = t.size - s1
    return (s0 * f0 + s1 * f1) / (s0 + s1)


def _roc(scores, true_labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    t = _binary(true_labels, "true_labels")
    if s.shape != t.shape:
        raise MetricError(f"length mismatch: {s.size} scores, {t.size} labels")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC/AUC undefined: true labels contain a single class")
    order = np.argsort(-s, kind="mergesort")
    s, t = s[order], t[order]
    tps = np.cumsum(t)
    fps = np.cumsum(1 - t)
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tpr = np.r_[0.0, tps[ends] / n_pos]
    fpr = np.r_[0.0, fps[ends] / n_neg]
    thr = np.r_[np.inf, s[ends]]
    return fpr, tpr, thr


def roc_curve(scores, true_labels) -> list[tuple[float, float]]:
    """(fpr, tpr) at each distinct score threshold, from (0, 0) to (1, 1)."""
    fpr, tpr, _ = _roc(scores, true_labels)
    return list(zip(fpr.tolist(), tpr.tolist()))


def _trapezoid(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def auc(scores, true_labels) -> float:
    fpr, tpr, _ = _roc(scores, true_labels)
    return _trapezoid(fpr, tpr)


def predict_logits(params: nn.MlpParams, features: np.ndarray, chunk: int = 8192) -> np.ndarray:
    out = [nn.forward(params, features[i : i + chunk])[1].logits for i in range(0, features.shape[0], chunk)]
    return np.concatenate(out) if out else np.zeros((0, nn.N_CLASSES))


def predict_proba(params: nn.MlpParams, features: np.ndarray) -> np.ndarray:
    return nn.softmax(predict_logits(params, features))


def predict_labels(probs: np.ndarray) -> np.ndarray:
    # exact ties go to class 0
    return (probs[:, 1] > probs[:, 0]).astype(np.int64)


def metrics_from_predictions(scores, pred_labels, true_labels) -> Metrics:
    c = confusion(pred_labels, true_labels)
    fpr, tpr, thr = _roc(scores, true_labels)
    return Metrics(
        accuracy=accuracy(c),
        precision=precision(c),
        recall=recall(c),
        f1_weighted=f1_weighted(pred_labels, true_labels),
        auc=_trapezoid(fpr, tpr),
        roc_points=list(zip(fpr.tolist(), tpr.tolist())),
        roc_thresholds=thr.tolist(),
        precision_degenerate=c.tp + c.fp == 0,
        recall_degenerate=c.tp + c.fn == 0,
    )


def evaluate(params: nn.MlpParams, test) -> tuple[Metrics, float]:
    """Score the full test set; returns metrics and the mean cross-entropy."""
    if test.d != params.d:
        raise MetricError(f"model expects d={params.d}, test set has d={test.d}")
    logits = predict_logits(params, test.features)
    probs = nn.softmax(logits)
    loss = nn.loss_from_logits(logits, test.labels)
    return metrics_from_predictions(probs[:, 1], predict_labels(probs), test.labels), loss
