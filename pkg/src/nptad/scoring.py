"""Mask-bank inference: per-mask reconstruction losses aggregated into anomaly scores.

For each mask in the bank, every validation row gets that mask and is stacked
on top of the unmasked training context; one forward pass yields the loss of
each validation row for that mask.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError
from .masking import MaskBank
from .numerics import make_rng, no_grad

logger = logging.getLogger(__name__)

AGGREGATIONS = ("mean", "max")


@dataclass
class ScoreConfig:
    aggregation: str = "mean"
    context_size: int | None = None   # None: full training set, up to max_context_rows
    context_seed: int = 0
    max_context_rows: int = 10_000
    per_sample: bool = False          # one validation row per forward pass
    keep_loss_matrix: bool = False
    n_jobs: int = 1

    def validate(self, n_train: int):
        if self.aggregation not in AGGREGATIONS:
            raise ContractError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.context_size is not None and not 1 <= self.context_size <= n_train:
            raise ContractError(f"context_size must lie in [1, {n_train}], got {self.context_size}")


@dataclass
class AnomalyScores:
    scores: np.ndarray
    loss_matrix: np.ndarray | None = None   # (n_val, m) when retained


def aggregate(losses, mode: str = "mean") -> float:
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ContractError("cannot aggregate an empty loss vector")
    if mode == "mean":
        return float(losses.mean())
    if mode == "max":
        return float(losses.max())
    raise ContractError(f"unknown aggregation {mode!r}")


def select_context(train_X, cfg: ScoreConfig) -> np.ndarray:
    """Training rows used as inference context, subsampled when too large."""
    train_X = np.asarray(train_X)
    n = len(train_X)
    size = cfg.context_size
    if size is None and n > cfg.max_context_rows:
        size = cfg.max_context_rows
        logger.info("context=subsample rows=%d of=%d seed=%d", size, n, cfg.context_seed)
    if size is None or size >= n:
        return train_X
    idx = np.sort(make_rng(cfg.context_seed).choice(n, size=size, replace=False))
    return train_X[idx]


def score_batch(model, train_X, val_X, bank: MaskBank, cfg: ScoreConfig | None = None) -> AnomalyScores:
    """Anomaly score of each row of ``val_X`` against the training context.

    ``model`` needs a ``row_losses(X, M)`` method returning the eval-mode loss
    of every row of ``X`` under mask matrix ``M``.
    """
    cfg = cfg or ScoreConfig()
    val_X = np.asarray(val_X)
    if bank is None or len(bank) == 0:
        raise ContractError("mask bank is empty")
    cfg.validate(len(train_X))
    ctx = select_context(train_X, cfg)
    nv, nc, d = len(val_X), len(ctx), bank.d
    if val_X.shape[1] != d:
        raise ContractError(f"validation rows have {val_X.shape[1]} features, bank expects {d}")
    stacked = _vstack(val_X, ctx)

    def one_mask(mask):
        if cfg.per_sample:
            out = np.empty(nv)
            M = np.zeros((1 + nc, d))
            M[0] = mask
            for i in range(nv):
                out[i] = model.row_losses(_vstack(val_X[i:i + 1], ctx), M)[0]
            return out
        M = np.zeros((nv + nc, d))
        M[:nv] = mask
        return model.row_losses(stacked, M)[:nv]

    loss = np.empty((nv, len(bank)))
    with no_grad():
        if cfg.n_jobs > 1:
            with ThreadPoolExecutor(cfg.n_jobs) as pool:
                for k, col in enumerate(pool.map(one_mask, bank.masks)):
                    loss[:, k] = col
        else:
            for k, mask in enumerate(bank.masks):
                loss[:, k] = one_mask(mask)
    scores = loss.mean(axis=1) if cfg.aggregation == "mean" else loss.max(axis=1)
    return AnomalyScores(scores, loss if cfg.keep_loss_matrix else None)


def _vstack(a, b):
    if a.dtype == object or b.dtype == object:
        return np.concatenate([a.astype(object), b.astype(object)])
    return np.concatenate([a, b])


def write_scores_csv(path, scores, labels=None, sample_ids=None):
    """One row per sample: ``sample_id,score[,label]``."""
    scores = np.asarray(scores)
    ids = range(len(scores)) if sample_ids is None else sample_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "score"] + ([] if labels is None else ["label"]))
        for i, sid in enumerate(ids):
            row = [sid, repr(float(scores[i]))]
            if labels is not None:
                row.append(int(labels[i]))
            w.writerow(row)


def write_loss_matrix_csv(path, loss_matrix):
    np.savetxt(path, loss_matrix, delimiter=",", fmt="%.17g")
