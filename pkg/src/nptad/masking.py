"""Training masks, the inference mask bank, and mask application."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .exceptions import CapacityError, ContractError

#: Largest bank we are willing to materialize.
MAX_BANK_SIZE = 5_000_000


def sample_train_mask(n: int, d: int, p_mask: float, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``(n, d)`` matrix of i.i.d. Bernoulli(p_mask) bits (1 = masked).

    Rows with nothing masked are kept; they simply contribute no loss.
    """
    if not 0.0 < p_mask < 1.0:
        raise ContractError(f"p_mask must lie in (0, 1), got {p_mask}")
    return (rng.random((n, d)) < p_mask).astype(np.float64)


def bank_size(d: int, r: int) -> int:
    """Number of feature subsets of size 1..r."""
    if d < 1 or not 1 <= r <= d:
        raise ContractError(f"need 1 <= r <= d, got d={d}, r={r}")
    return sum(comb(d, k) for k in range(1, r + 1))


@dataclass(frozen=True)
class MaskBank:
    """Every subset of 1..r masked features out of d, as an ``(m, d)`` 0/1 matrix.

    Rows are ordered by number of masked features, then lexicographically by
    the positions of the masked features.
    """

    d: int
    r: int
    masks: np.ndarray

    def __len__(self):
        return self.masks.shape[0]

    def __iter__(self):
        return iter(self.masks)

    @property
    def m(self) -> int:
        return len(self)


def build_mask_bank(d: int, r: int) -> MaskBank:
    if r > d >= 1:
        raise ContractError(f"r={r} exceeds the number of features d={d}")
    m = bank_size(d, r)
    if m > MAX_BANK_SIZE:
        raise CapacityError(
            f"mask bank for d={d}, r={r} has {m} masks (limit {MAX_BANK_SIZE}); use a smaller r")
    masks = np.zeros((m, d), dtype=np.float64)
    row = 0
    for k in range(1, r + 1):
        for subset in combinations(range(d), k):
            masks[row, list(subset)] = 1.0
            row += 1
    masks.setflags(write=False)
    return MaskBank(d, r, masks)


def apply_mask(encoded: list[np.ndarray], mask: np.ndarray) -> list[np.ndarray]:
    """Zero masked feature payloads and append the mask indicator.

    ``encoded[j]`` is the ``(n, e_j)`` encoding of feature j and ``mask`` is
    either a length-d vector shared by all rows or an ``(n, d)`` matrix.
    Returns ``(n, e_j + 1)`` arrays ``((1 - m_j) * encoded_j, m_j)``.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape[-1] != len(encoded):
        raise ContractError(f"mask has {mask.shape[-1]} entries for {len(encoded)} features")
    out = []
    for j, payload in enumerate(encoded):
        payload = np.asarray(payload, dtype=np.float64)
        n = payload.shape[0]
        mj = np.broadcast_to(mask[..., j], (n,))[:, None]
        out.append(np.concatenate([np.where(mj > 0, 0.0, payload), mj], axis=1))
    return out
