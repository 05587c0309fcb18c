"""Nearest-neighbour baselines: inverse-distance KNN imputation, Mask-KNN and kth-NN distance.

All functions work on already encoded float matrices (normalized numericals,
one-hot categoricals). Feature masks refer to original features; ``groups``
maps each original feature to its encoded columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import ContractError
from .masking import MaskBank
from .numerics import make_rng
from .scoring import AnomalyScores


@dataclass
class KnnConfig:
    k: int = 5
    bank_size: int | None = None      # None: whole training set, capped at max_bank_size
    max_bank_size: int = 10_000
    seed: int = 0

    def validate(self):
        if self.k < 1:
            raise ContractError(f"k must be >= 1, got {self.k}")
        if self.bank_size is not None and self.bank_size < self.k:
            raise ContractError("bank_size must be >= k")


def _neighbors(dist: np.ndarray, k: int) -> np.ndarray:
    # stable sort: equal distances keep ascending row index
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def impute_rows(queries: np.ndarray, missing: np.ndarray, bank: np.ndarray, k: int) -> np.ndarray:
    """Inverse-distance-weighted KNN imputation of the ``missing`` columns of each query.

    Neighbours are the ``k`` bank rows closest in L2 distance over the observed
    columns. A neighbour at distance 0 supplies its values directly. With no
    observed column every distance is 0, so the first bank row is used.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    bank = np.asarray(bank, dtype=np.float64)
    missing = np.asarray(missing, dtype=bool)
    if len(bank) < k:
        raise ContractError(f"bank has {len(bank)} rows, fewer than k={k}")
    observed = ~missing
    out = queries.copy()
    if not missing.any():
        return out
    dist = cdist(queries[:, observed], bank[:, observed])
    nbr = _neighbors(dist, k)
    nd = np.take_along_axis(dist, nbr, axis=1)                      # (q, k)
    vals = bank[:, missing][nbr]                                    # (q, k, n_missing)
    exact = nd[:, 0] == 0.0
    with np.errstate(divide="ignore"):
        w = np.where(exact[:, None], 0.0, 1.0 / nd)
    w[exact, 0] = 1.0
    imputed = (w[:, :, None] * vals).sum(axis=1) / w.sum(axis=1, keepdims=True)
    out[:, missing] = imputed
    return out


def knn_impute(query, missing, bank, cfg: KnnConfig | None = None) -> np.ndarray:
    """Impute a single query vector; ``missing`` flags the columns to fill."""
    cfg = cfg or KnnConfig()
    cfg.validate()
    return impute_rows(np.asarray(query)[None, :], missing, bank, cfg.k)[0]


def _column_mask(feature_mask: np.ndarray, groups: list) -> np.ndarray:
    width = sum(len(g) for g in groups)
    cols = np.zeros(width, dtype=bool)
    for j in np.flatnonzero(feature_mask):
        cols[groups[j]] = True
    return cols


def default_groups(width: int) -> list:
    return [np.array([j]) for j in range(width)]


def select_bank(train: np.ndarray, cfg: KnnConfig) -> np.ndarray:
    n = len(train)
    size = cfg.bank_size if cfg.bank_size is not None else min(n, cfg.max_bank_size)
    if size >= n:
        return train
    idx = np.sort(make_rng(cfg.seed).choice(n, size=size, replace=False))
    return train[idx]


def mask_knn_score(val: np.ndarray, train: np.ndarray, bank: MaskBank,
                   cfg: KnnConfig | None = None, groups: list | None = None,
                   keep_loss_matrix: bool = False) -> AnomalyScores:
    """Sum over bank masks of the L2 distance between each sample and its KNN reconstruction."""
    cfg = cfg or KnnConfig()
    cfg.validate()
    val = np.asarray(val, dtype=np.float64)
    train = np.asarray(train, dtype=np.float64)
    groups = groups if groups is not None else default_groups(val.shape[1])
    if len(groups) != bank.d:
        raise ContractError(f"bank has d={bank.d} but data has {len(groups)} features")
    B = select_bank(train, cfg)
    losses = np.empty((len(val), len(bank)))
    for k, mask in enumerate(bank.masks):
        cols = _column_mask(mask, groups)
        recon = impute_rows(val, cols, B, cfg.k)
        losses[:, k] = np.sqrt(((val - recon) ** 2).sum(axis=1))
    return AnomalyScores(losses.sum(axis=1), losses if keep_loss_matrix else None)


def knn_score(val: np.ndarray, train: np.ndarray, k: int = 5) -> AnomalyScores:
    """L2 distance from each validation row to its k-th nearest training row."""
    train = np.asarray(train, dtype=np.float64)
    if not 1 <= k <= len(train):
        raise ContractError(f"k must lie in [1, {len(train)}], got {k}")
    dist = cdist(np.asarray(val, dtype=np.float64), train)
    return AnomalyScores(np.partition(dist, k - 1, axis=1)[:, k - 1])
