"""Binary and ordinal evaluation metrics.

The dangerous class is the positive class and a sample is predicted positive
when its score is strictly greater than the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    """Confusion cells, as integer tallies or as fractions of the total."""

    tp: float
    fp: float
    tn: float
    fn: float

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise MetricError("negative confusion cell")

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.tn + self.fn


def _pairs_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(pairs)
    if not pairs:
        raise MetricError("no (truth, score) pairs")
    truth = np.array([int(t) for t, _ in pairs])
    if not np.isin(truth, (0, 1)).all():
        raise MetricError("truth labels must be 0 or 1")
    score = np.array([float(s) for _, s in pairs], dtype=np.float64)
    return truth, score


def confusion_from_pairs(pairs: Iterable[tuple[int, float]], threshold: float = 0.5) -> ConfusionCounts:
    truth, score = _pairs_arrays(pairs)
    pred = score > threshold
    pos = truth == 1
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def recall(c: ConfusionCounts) -> float:
    if c.tp + c.fn <= 0:
        raise MetricError("recall undefined: no positive samples")
    return c.tp / (c.tp + c.fn)


def precision(c: ConfusionCounts) -> float:
    if c.tp + c.fp <= 0:
        raise MetricError("precision undefined: no predicted positives")
    return c.tp / (c.tp + c.fp)


def accuracy(c: ConfusionCounts) -> float:
    if c.total <= 0:
        raise MetricError("accuracy undefined: empty confusion counts")
    return (c.tp + c.tn) / c.total


def f1_from(p: float, r: float) -> float:
    if p + r <= 0:
        raise MetricError("F1 undefined: precision + recall = 0")
    return 2 * p * r / (p + r)


def f1(c: ConfusionCounts) -> float:
    return f1_from(precision(c), recall(c))


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    x: float
    y: float


def _sweep(pairs):
    """Cumulative (tp, fp) for "score > t" at t = -inf and at every distinct score."""
    truth, score = _pairs_arrays(pairs)
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("curve needs both classes present")
    thresholds = np.unique(score)
    # samples with score <= t are predicted negative
    pos_le = np.searchsorted(np.sort(score[truth == 1]), thresholds, side="right")
    neg_le = np.searchsorted(np.sort(score[truth == 0]), thresholds, side="right")
    tp = np.concatenate(([n_pos], n_pos - pos_le))
    fp = np.concatenate(([n_neg], n_neg - neg_le))
    thr = np.concatenate(([-math.inf], thresholds))
    return thr, tp, fp, n_pos, n_neg


def roc_curve(pairs) -> list[CurvePoint]:
    """(FPR, TPR) points sorted by threshold, from (1, 1) down to (0, 0)."""
    thr, tp, fp, n_pos, n_neg = _sweep(pairs)
    return [CurvePoint(float(t), fp_ / n_neg, tp_ / n_pos) for t, tp_, fp_ in zip(thr, tp, fp)]


def pr_curve(pairs) -> list[CurvePoint]:
    """(recall, precision) points sorted by threshold.

    When nothing is predicted positive the precision is taken as 1.
    """
    thr, tp, fp, n_pos, _ = _sweep(pairs)
    points = []
    for t, tp_, fp_ in zip(thr, tp, fp):
        prec = tp_ / (tp_ + fp_) if tp_ + fp_ > 0 else 1.0
        points.append(CurvePoint(float(t), tp_ / n_pos, float(prec)))
    return points


def auc(curve: Sequence[CurvePoint]) -> float:
    """Trapezoidal area under a curve, integrating over ascending x.

    Points sharing an x are visited from the highest threshold down, which is
    the order the sweep traces them in.
    """
    if len(curve) < 2:
        raise MetricError("AUC needs at least two curve points")
    pts = sorted(curve, key=lambda p: (p.x, -p.threshold))
    area = 0.0
    for a, b in zip(pts, pts[1:]):
        area += (b.x - a.x) * (a.y + b.y) / 2
    return area


def roc_auc(pairs) -> float:
    return auc(roc_curve(pairs))


def pr_auc(pairs) -> float:
    return auc(pr_curve(pairs))


def frank_hall_compose(binary_probs: Sequence) -> list:
    """Class probabilities from the K-1 cumulative estimates P(y > k).

    Negative intermediate values (non-monotone inputs) are clamped to zero and
    the vector renormalized. Arithmetic stays in the input number type, so
    Fraction inputs compose exactly.
    """
    p = list(binary_probs)
    if not p:
        raise MetricError("need at least one cumulative probability")
    for v in p:
        if not 0 <= v <= 1:
            raise MetricError(f"cumulative probability {v} outside [0, 1]")
    raw = [1 - p[0]] + [p[k - 1] - p[k] for k in range(1, len(p))] + [p[-1]]
    if all(r >= 0 for r in raw):
        return raw
    clamped = [r if r > 0 else 0 * r for r in raw]
    total = sum(clamped)
    return [r / total for r in clamped]


def ordinal_predict(class_probs: Sequence) -> int:
    """1-based class with the highest probability; ties go to the lower class."""
    best = max(range(len(class_probs)), key=lambda i: (class_probs[i], -i))
    return best + 1


def balanced_accuracy(truths: Sequence[int], predictions: Sequence[int],
                      classes: Sequence[int] | None = None) -> float:
    """Mean per-class recall over ``classes`` (default: the distinct truths)."""
    truths = [int(t) for t in truths]
    predictions = [int(p) for p in predictions]
    if len(truths) != len(predictions):
        raise MetricError(f"length mismatch: {len(truths)} truths vs {len(predictions)} predictions")
    if not truths:
        raise MetricError("balanced accuracy of an empty sample")
    classes = sorted(set(truths)) if classes is None else [int(c) for c in classes]
    recalls = []
    for c in classes:
        members = [p for t, p in zip(truths, predictions) if t == c]
        if not members:
            raise MetricError(f"class {c} absent from truths")
        recalls.append(sum(1 for p in members if p == c) / len(members))
    return sum(recalls) / len(recalls)
