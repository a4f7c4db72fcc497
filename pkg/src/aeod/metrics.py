"""ROC-AUC in Mann-Whitney form and ROC curve points."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _check_labels(labels):
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValueError("labels must be 1-D")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one inlier (0) and one outlier (1)")
    return y.astype(bool), n_pos, n_neg


def auc(scores, labels) -> float:
    """Probability that a random outlier outscores a random inlier; ties count 1/2."""
    s = np.asarray(scores, dtype=float)
    y, n_pos, n_neg = _check_labels(labels)
    if s.shape != y.shape:
        raise ValueError(f"scores shape {s.shape} != labels shape {y.shape}")
    return float(auc_rows(s[None, :], y)[0])


def auc_rows(score_rows, labels) -> np.ndarray:
    """AUC of every row of a (K, N) score matrix against one label vector."""
    S = np.atleast_2d(np.asarray(score_rows, dtype=float))
    y, n_pos, n_neg = _check_labels(labels)
    if S.shape[1] != y.size:
        raise ValueError(f"score rows have length {S.shape[1]}, labels {y.size}")
    if np.isnan(S).any():
        raise ValueError("scores contain NaN")
    ranks = rankdata(S, method="average", axis=1)
    u = ranks[:, y].sum(axis=1) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_points(scores, labels):
    """(thresholds, fpr, tpr) including the (0, 0) and (1, 1) endpoints.

    A sample is flagged when its score is >= threshold; the leading
    threshold is +inf.
    """
    s = np.asarray(scores, dtype=float)
    y, n_pos, n_neg = _check_labels(labels)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    tps = np.cumsum(y_sorted)
    fps = np.cumsum(~y_sorted)
    # keep the last position of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s.size - 1]
    thresholds = np.r_[np.inf, s_sorted[last]]
    tpr = np.r_[0.0, tps[last] / n_pos]
    fpr = np.r_[0.0, fps[last] / n_neg]
    return thresholds, fpr, tpr
