"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .exceptions import ContractError


def check_features(X, categorical_features=None) -> np.ndarray:
    """Return ``X`` as a 2-D array with finite numerical columns.

    Purely numerical input comes back as float64; input with categorical
    columns keeps an object dtype so category labels survive untouched.
    """
    cat = set(categorical_features or ())
    arr = np.asarray(X, dtype=object if cat else None)
    if arr.ndim != 2:
        raise ContractError(f"expected a 2-D array, got {arr.ndim}-D")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ContractError(f"empty input of shape {arr.shape}")
    num = [j for j in range(arr.shape[1]) if j not in cat]
    if not cat:
        try:
            arr = arr.astype(np.float64)
        except (TypeError, ValueError) as exc:
            raise ContractError(f"non-numeric values in a numerical column: {exc}") from None
        block = arr
    else:
        try:
            block = arr[:, num].astype(np.float64)
        except (TypeError, ValueError) as exc:
            raise ContractError(f"non-numeric values in a numerical column: {exc}") from None
    if not np.all(np.isfinite(block)):
        raise ContractError("input contains NaN or infinite values")
    return arr
