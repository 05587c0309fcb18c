"""scikit-learn style detectors.

Every detector follows the same contract: ``fit(X)`` on normal rows only,
then ``anomaly_score(X)`` returns non-negative scores where larger means more
anomalous. ``score_samples`` returns the negated score, matching the
scikit-learn convention for outlier detectors.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import KnnConfig, knn_score, mask_knn_score
from .exceptions import ContractError
from .masking import build_mask_bank
from .metrics import top_count_mask
from .model import FeatureSchema, NptConfig, NptModel
from .numerics import make_rng
from .scoring import ScoreConfig, score_batch
from .training import TrainConfig, train_npt
from .validation import check_features


class _Detector(BaseEstimator):

    def score_samples(self, X):
        return -self.anomaly_score(X)

    def predict(self, X, n_anomalies: int):
        """Flag the ``n_anomalies`` highest-scoring rows (ties go to lower index)."""
        return top_count_mask(self.anomaly_score(X), n_anomalies).astype(int)

    def _fit_schema(self, X):
        X = check_features(X, self.categorical_features)
        self.schema_ = FeatureSchema.fit(X, self.categorical_features or (), self.categories)
        self.n_features_in_ = X.shape[1]
        return X

    def _check(self, X):
        check_is_fitted(self, "schema_")
        X = check_features(X, self.categorical_features)
        if X.shape[1] != self.n_features_in_:
            raise ContractError(f"X has {X.shape[1]} features, detector was fitted with {self.n_features_in_}")
        return X

    def _encoded(self, X):
        return np.concatenate(self.schema_.encode_features(X), axis=1)

    def _groups(self):
        groups, start = [], 0
        for j in range(self.schema_.d):
            width = self.schema_.cardinality(j)
            groups.append(np.arange(start, start + width))
            start += width
        return groups


class NPTAD(_Detector):
    """Masked-reconstruction anomaly detector built on a Non-Parametric Transformer.

    Parameters
    ----------
    depth, heads, embed_dim, rff_expansion, dropout : network shape.
        ``embed_dim`` is the per-feature embedding size.
    variant : {"npt", "aba_only"}
        ``"aba_only"`` drops attention between datapoints (plain transformer).
    epochs, batch_size, lr, p_mask, clip_norm, weight_decay : training settings.
        ``batch_size=-1`` uses the full training set at every step.
    max_masked : int
        Largest number of features masked together in the inference mask bank.
    aggregation : {"mean", "max"}
        How per-mask losses combine into one score.
    max_context_rows : int
        Training rows kept as inference context before subsampling.
    per_sample : bool
        Score validation rows one at a time instead of in a shared batch.
    categorical_features : list of int, optional
        Column indices holding categorical values.
    categories : list, optional
        Per-column category levels (``None`` entries for numerical columns).
    random_state : int
    """

    def __init__(self, depth=4, heads=4, embed_dim=16, rff_expansion=4, dropout=0.1,
                 variant="npt", epochs=100, batch_size=-1, lr=0.01, p_mask=0.15,
                 clip_norm=1.0, weight_decay=0.0, max_masked=1, aggregation="mean",
                 max_context_rows=10_000, per_sample=False, n_jobs=1,
                 categorical_features=None, categories=None, random_state=0):
        self.depth = depth
        self.heads = heads
        self.embed_dim = embed_dim
        self.rff_expansion = rff_expansion
        self.dropout = dropout
        self.variant = variant
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.p_mask = p_mask
        self.clip_norm = clip_norm
        self.weight_decay = weight_decay
        self.max_masked = max_masked
        self.aggregation = aggregation
        self.max_context_rows = max_context_rows
        self.per_sample = per_sample
        self.n_jobs = n_jobs
        self.categorical_features = categorical_features
        self.categories = categories
        self.random_state = random_state

    def _network_config(self):
        return NptConfig(self.depth, self.heads, self.embed_dim, self.rff_expansion,
                         self.dropout, self.variant)

    def fit(self, X, y=None):
        X = self._fit_schema(X)
        if not 1 <= self.max_masked <= X.shape[1]:
            raise ContractError(f"max_masked={self.max_masked} must lie in [1, {X.shape[1]}]")
        rng = make_rng(self.random_state)
        train = TrainConfig(self.epochs, self.batch_size, self.lr, self.p_mask,
                            self.clip_norm, self.weight_decay)
        params, self.loss_history_ = train_npt(X, self.schema_, self._network_config(), train, rng)
        self.model_ = NptModel(self._network_config(), self.schema_, params)
        self.train_X_ = X
        return self

    def anomaly_score(self, X, keep_loss_matrix=False):
        X = self._check(X)
        self.last_scores_ = score_batch(self.model_, self.train_X_, X, self.mask_bank(),
                                        self._score_config(keep_loss_matrix))
        return self.last_scores_.scores

    def mask_bank(self):
        return build_mask_bank(self.n_features_in_, self.max_masked)

    def _score_config(self, keep_loss_matrix=False):
        return ScoreConfig(self.aggregation, None, self.random_state, self.max_context_rows,
                           self.per_sample, keep_loss_matrix, self.n_jobs)

    @classmethod
    def from_model(cls, model: NptModel, train_X, **kwargs) -> "NPTAD":
        """Wrap an already trained network (e.g. loaded from a checkpoint)."""
        cfg = model.config
        det = cls(depth=cfg.depth, heads=cfg.heads, embed_dim=cfg.embed_dim,
                  rff_expansion=cfg.rff_expansion, dropout=cfg.dropout_p, variant=cfg.variant,
                  categorical_features=model.schema.cat_idx or None, **kwargs)
        det.schema_ = model.schema
        det.model_ = model
        det.train_X_ = np.asarray(train_X)
        det.n_features_in_ = model.schema.d
        return det


class MaskKNNDetector(_Detector):
    """Sum of KNN-imputation reconstruction errors over a mask bank.

    Parameters
    ----------
    n_neighbors : int, default=5
    max_masked : int, default=2
    bank_size : int, optional
        Training rows searched for neighbours; default all (capped at 10,000).
    """

    def __init__(self, n_neighbors=5, max_masked=2, bank_size=None,
                 categorical_features=None, categories=None, random_state=0):
        self.n_neighbors = n_neighbors
        self.max_masked = max_masked
        self.bank_size = bank_size
        self.categorical_features = categorical_features
        self.categories = categories
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._fit_schema(X)
        self.train_encoded_ = self._encoded(X)
        return self

    def anomaly_score(self, X):
        X = self._check(X)
        bank = build_mask_bank(self.n_features_in_, min(self.max_masked, self.n_features_in_))
        cfg = KnnConfig(self.n_neighbors, self.bank_size, seed=self.random_state)
        return mask_knn_score(self._encoded(X), self.train_encoded_, bank, cfg, self._groups()).scores


class KNNDetector(_Detector):
    """Distance to the k-th nearest training row in encoded feature space."""

    def __init__(self, n_neighbors=5, categorical_features=None, categories=None):
        self.n_neighbors = n_neighbors
        self.categorical_features = categorical_features
        self.categories = categories

    def fit(self, X, y=None):
        X = self._fit_schema(X)
        self.train_encoded_ = self._encoded(X)
        return self

    def anomaly_score(self, X):
        X = self._check(X)
        return knn_score(self._encoded(X), self.train_encoded_, self.n_neighbors).scores
