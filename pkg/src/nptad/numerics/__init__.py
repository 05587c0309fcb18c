from .functional import cross_entropy, dropout, gelu, layer_norm, linear, log_softmax, softmax
from .gradcheck import grad_check
from .tensor import (
    Tensor,
    as_tensor,
    computation_record,
    concat,
    exp,
    getitem,
    is_grad_enabled,
    log,
    matmul,
    no_grad,
    reshape,
    stack,
    swap_last,
    transpose,
)

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; every stochastic op takes one explicitly."""
    return np.random.Generator(np.random.Philox(seed))


__all__ = [
    "Tensor", "as_tensor", "computation_record", "concat", "cross_entropy", "dropout",
    "exp", "gelu", "getitem", "grad_check", "is_grad_enabled", "layer_norm", "linear",
    "log", "log_softmax", "make_rng", "matmul", "no_grad", "reshape", "softmax", "stack",
    "swap_last", "transpose",
]
