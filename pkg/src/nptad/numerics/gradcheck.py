"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..exceptions import ContractError, NumericError
from .tensor import Tensor


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Largest relative gap between analytic and numerical gradients.

    ``f`` must be deterministic and read its inputs from ``params``, which are
    perturbed in place one entry at a time. The gap for each entry is
    ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    for p in params:
        p.requires_grad = True
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f().item()
            flat[i] = orig - eps
            lo = f().item()
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError("function returned a non-finite value during grad_check")
            numeric = (hi - lo) / (2.0 * eps)
            worst = max(worst, abs(a_flat[i] - numeric) / max(1.0, abs(a_flat[i])))
    return worst
