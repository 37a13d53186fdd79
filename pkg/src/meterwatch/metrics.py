"""Ranking metrics and stratified cross-validation splits.

roc_auc is the Mann-Whitney concordance probability (tied pairs count 1/2),
computed from average ranks. pr_auc is average precision: the step-wise
integral of precision over recall across every distinct score threshold,
accumulated in descending-score order so it equals the exhaustive sweep
bit for bit.
"""

from __future__ import annotations

import numpy as np


class MetricsError(ValueError):
    pass


def _as_scored_labels(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricsError(f"scores {scores.shape} and labels {labels.shape} must be equal 1-d")
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricsError("labels must be binary 0/1")
    return scores, labels.astype(np.int64)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks, ties getting the mean rank of their run."""
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + P(equal)/2 over all positive-negative pairs."""
    scores, labels = _as_scored_labels(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("roc_auc needs both classes present")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(scores, labels) -> float:
    """Average precision over the distinct-score threshold sweep."""
    scores, labels = _as_scored_labels(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricsError("pr_auc needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tp_cum = np.cumsum(y)
    fp_cum = np.cumsum(1 - y)
    # threshold boundaries: last index of each run of equal scores
    last_of_run = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    ap = 0.0
    prev_recall = 0.0
    for idx in last_of_run:
        tp = int(tp_cum[idx])
        fp = int(fp_cum[idx])
        precision = tp / (tp + fp)
        recall = tp / n_pos
        ap += precision * (recall - prev_recall)
        prev_recall = recall
    return ap


def roc_points(scores, labels) -> np.ndarray:
    """(fpr, tpr) step points of the ROC curve, one per distinct score
    threshold, starting at (0, 0) and ending at (1, 1)."""
    scores, labels = _as_scored_labels(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("roc_points needs both classes present")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tp_cum = np.cumsum(y)
    fp_cum = np.cumsum(1 - y)
    last_of_run = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    points = [(0.0, 0.0)]
    for idx in last_of_run:
        points.append((fp_cum[idx] / n_neg, tp_cum[idx] / n_pos))
    return np.array(points)


def pr_points(scores, labels) -> np.ndarray:
    """(recall, precision) points at each distinct score threshold, in
    ascending-recall order; pr_auc is the step integral under these."""
    scores, labels = _as_scored_labels(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricsError("pr_points needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tp_cum = np.cumsum(y)
    fp_cum = np.cumsum(1 - y)
    last_of_run = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    points = []
    for idx in last_of_run:
        tp = int(tp_cum[idx])
        fp = int(fp_cum[idx])
        points.append((tp / n_pos, tp / (tp + fp)))
    return np.array(points)


def stratified_kfold(labels, k: int, seed: int = 0) -> np.ndarray:
    """Fold index per sample; per-class counts differ by at most 1 across folds.

    Deterministic given seed. Errors if any class has fewer than k members.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise MetricsError("labels must be a nonempty 1-d array")
    if k < 2:
        raise MetricsError("k must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence((seed, labels.size, k)))
    folds = np.empty(labels.size, dtype=np.int64)
    for value in np.unique(labels):
        members = np.nonzero(labels == value)[0]
        if members.size < k:
            raise MetricsError(f"class {value!r} has {members.size} samples, fewer than k={k}")
        members = rng.permutation(members)
        folds[members] = np.arange(members.size) % k
    return folds


def mean_std(values) -> tuple[float, float]:
    """Mean and population standard deviation, as floats."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def format_mean_std(values, digits: int = 2) -> str:
    m, s = mean_std(values)
    return f"{m:.{digits}f} ± {s:.{digits}f}"
