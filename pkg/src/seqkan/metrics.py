"""Threshold-free ranking metrics and the optimal-F1 threshold search."""

from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import UndefinedMetricError


def _check(scores, labels, need_negatives):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).astype(bool).reshape(-1)
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores for {y.size} labels")
    if not y.any():
        raise UndefinedMetricError("no positive labels")
    if need_negatives and y.all():
        raise UndefinedMetricError("no negative labels")
    return s, y


def roc_auc(scores, labels):
    """P(score+ > score-) + P(tie)/2, via midranks."""
    s, y = _check(scores, labels, need_negatives=True)
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _sweep(s, y):
    """Cumulative (tp, fp) at each distinct score, descending; thresholds alongside."""
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return s[last], tp, fp


def pr_auc(scores, labels):
    """Average precision: sum of precision at each threshold times the recall gained there."""
    s, y = _check(scores, labels, need_negatives=False)
    _, tp, fp = _sweep(s, y)
    # exact rationals so the result is the correctly rounded average precision
    total = Fraction(0)
    prev = 0
    for t, f in zip(tp.tolist(), fp.tolist()):
        if t > prev:
            total += Fraction((t - prev) * t, t + f)
        prev = t
    return float(total / int(y.sum()))


def f1_optimal(scores, labels):
    """Best F1 over thresholds ``score >= t``; ties go to the higher threshold."""
    s, y = _check(scores, labels, need_negatives=False)
    thresholds, tp, fp = _sweep(s, y)
    n_pos = int(y.sum())
    f1 = [Fraction(2 * t, t + f + n_pos) for t, f in zip(tp.tolist(), fp.tolist())]
    best = f1.index(max(f1))  # thresholds descend, so the first maximum is the highest
    return float(f1[best]), float(thresholds[best])


@dataclass
class Metrics:
    roc_auc: float
    pr_auc: float
    f1_opt: float
    threshold_opt: float
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self):
        return asdict(self)


def compute_metrics(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    f1, thr = f1_optimal(s, y)
    pred = s >= thr
    return Metrics(
        roc_auc=roc_auc(s, y),
        pr_auc=pr_auc(s, y),
        f1_opt=f1,
        threshold_opt=thr,
        tp=int(np.sum(pred & y)),
        fp=int(np.sum(pred & ~y)),
        fn=int(np.sum(~pred & y)),
        tn=int(np.sum(~pred & ~y)),
    )
