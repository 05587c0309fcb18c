"""Detection metrics: F1 at the anomaly-count threshold and tie-aware AUROC."""

from __future__ import annotations

import numpy as np

from .exceptions import ContractError


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ContractError("scores and labels differ in length")
    if not np.isin(labels, (0, 1)).all():
        raise ContractError("labels must be 0 or 1")
    if not np.all(np.isfinite(scores)):
        raise ContractError("scores must be finite")
    labels = labels.astype(int)
    pos = int(labels.sum())
    if pos == 0 or pos == len(labels):
        raise ContractError("both classes must be present")
    return scores, labels, pos


def top_count_mask(scores, count: int) -> np.ndarray:
    """Boolean mask of the ``count`` highest scores; ties at the cutoff go to lower indices."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= count <= len(scores):
        raise ContractError(f"count must lie in [0, {len(scores)}]")
    order = np.lexsort((np.arange(len(scores)), -scores))
    flagged = np.zeros(len(scores), dtype=bool)
    flagged[order[:count]] = True
    return flagged


def precision_recall_at_count(scores, labels) -> tuple[float, float]:
    scores, labels, pos = _check(scores, labels)
    pred = top_count_mask(scores, pos)
    tp = int((pred & (labels == 1)).sum())
    return tp / int(pred.sum()), tp / pos


def f1_at_count(scores, labels) -> float:
    """F1 when exactly as many rows are flagged as there are true anomalies."""
    p, r = precision_recall_at_count(scores, labels)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def auroc(scores, labels) -> float:
    """Probability that a random anomaly outscores a random normal, ties counting one half.

    Counts are accumulated as integers (twice the Mann-Whitney U) so the only
    rounding happens in the final division.
    """
    scores, labels, pos = _check(scores, labels)
    neg = len(labels) - pos
    uniq, inverse = np.unique(scores, return_inverse=True)
    pos_per = np.bincount(inverse, weights=labels, minlength=len(uniq)).astype(np.int64)
    neg_per = np.bincount(inverse, minlength=len(uniq)).astype(np.int64) - pos_per
    neg_below = np.concatenate([[0], np.cumsum(neg_per)[:-1]])
    twice_u = int(np.sum(pos_per * (2 * neg_below + neg_per)))
    return twice_u / (2 * pos * neg)
