"""LAMB with a Lookahead wrapper, gradient clipping and the flat-then-anneal schedule.

All updates act in place on lists of float64 arrays so they can be driven
from ``Tensor.data`` buffers directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError


def global_norm(arrays) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in arrays))


def clip_gradients(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Rescale all gradients jointly so their global L2 norm is at most ``max_norm``.

    Returns the (possibly scaled) gradients and the norm observed before clipping.
    """
    if max_norm <= 0:
        raise ContractError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm


@dataclass
class LambState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def lamb_step(params: list[np.ndarray], grads: list[np.ndarray], state: LambState, lr: float):
    """One LAMB update, in place on ``params``.

    Per tensor: Adam moments with bias correction, update
    ``u = m_hat / (sqrt(v_hat) + eps) + wd * w`` and trust ratio
    ``||w|| / ||u||`` (taken as 1 when either norm is zero).
    """
    if lr < 0:
        raise ContractError("learning rate must be non-negative")
    if len(params) != len(grads):
        raise ContractError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for w, g, m, v in zip(params, grads, state.m, state.v):
        if w.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} does not match parameter {w.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        u = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            u = u + state.weight_decay * w
        w_norm = math.sqrt(float(np.sum(w * w)))
        u_norm = math.sqrt(float(np.sum(u * u)))
        trust = w_norm / u_norm if w_norm > 0 and u_norm > 0 else 1.0
        w -= lr * trust * u
    return params


@dataclass
class LookaheadState:
    slow: list
    alpha: float = 0.5
    k: int = 6
    counter: int = 0

    @classmethod
    def from_params(cls, params, alpha: float = 0.5, k: int = 6) -> "LookaheadState":
        return cls([np.array(p, copy=True) for p in params], alpha, k)


def lookahead_update(params: list[np.ndarray], state: LookaheadState) -> bool:
    """Count one inner step; on every k-th, pull slow weights toward fast and reset fast.

    Returns True when a sync happened.
    """
    state.counter += 1
    if state.counter % state.k:
        return False
    for fast, slow in zip(params, state.slow):
        slow += state.alpha * (fast - slow)
        fast[...] = slow
    return True


def lr_at(step: int, total_steps: int, base_lr: float, flat_fraction: float = 0.7) -> float:
    """Flat at ``base_lr`` for the first 70% of steps, then cosine-annealed to 0."""
    if not 0 <= step < total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps})")
    flat = flat_fraction * total_steps
    if step < flat:
        return base_lr
    progress = (step - flat) / (total_steps - flat)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
