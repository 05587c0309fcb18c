"""Stochastic-masking training loop for the NPT."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, NumericError
from .masking import sample_train_mask
from .model import FeatureSchema, NptConfig, Targets, init_params, masked_loss, npt_forward
from .optim import LambState, LookaheadState, clip_gradients, lamb_step, lookahead_update, lr_at

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = -1          # -1: full training set per step
    lr: float = 0.01
    p_mask: float = 0.15
    clip_norm: float = 1.0
    weight_decay: float = 0.0
    lookahead_alpha: float = 0.5
    lookahead_k: int = 6


def train_npt(X, schema: FeatureSchema, config: NptConfig, train: TrainConfig,
              rng: np.random.Generator, params: dict | None = None):
    """Fit NPT parameters on rows ``X`` by masked reconstruction.

    Returns ``(params, losses)`` where ``losses`` holds one value per optimizer step.
    """
    X = np.asarray(X)
    n = X.shape[0]
    if n < 1:
        raise ContractError("cannot train on an empty set")
    if train.epochs < 1:
        raise ContractError("epochs must be >= 1")
    if params is None:
        params = init_params(config, schema, rng)
    names = list(params)
    tensors = [params[k] for k in names]
    arrays = [t.data for t in tensors]

    batch = n if train.batch_size in (-1, None) or train.batch_size >= n else int(train.batch_size)
    steps_per_epoch = math.ceil(n / batch)
    total = train.epochs * steps_per_epoch
    lamb = LambState(weight_decay=train.weight_decay)
    look = LookaheadState.from_params(arrays, train.lookahead_alpha, train.lookahead_k)
    targets_all = schema.targets(X)

    losses = []
    step = 0
    for epoch in range(train.epochs):
        order = np.arange(n) if batch == n else rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            Xb = X[idx]
            M = sample_train_mask(len(idx), schema.d, train.p_mask, rng)
            tb = _subset(targets_all, idx)
            for t in tensors:
                t.zero_grad()
            loss = masked_loss(npt_forward(Xb, M, params, config, schema, True, rng), tb, M, schema)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite training loss at step {step}")
            losses.append(value)
            if loss.requires_grad:
                loss.backward()
                grads = [np.zeros_like(a) if t.grad is None else t.grad for t, a in zip(tensors, arrays)]
                grads, _ = clip_gradients(grads, train.clip_norm)
                lamb_step(arrays, grads, lamb, lr_at(step, total, train.lr))
            lookahead_update(arrays, look)
            step += 1
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("epoch=%d loss=%.6g", epoch, losses[-1])
    for t in tensors:
        t.zero_grad()
    return params, losses


def _subset(targets, idx):
    return Targets(targets.numerical[idx], [c[idx] for c in targets.categorical])
