import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nptad.exceptions import ContractError, NumericError
from nptad.numerics import (
    Tensor, computation_record, concat, cross_entropy, dropout, exp, gelu, getitem,
    grad_check, layer_norm, log, log_softmax, make_rng, matmul, no_grad, softmax, stack,
)
from oracles import gelu_erf, matmul_loops

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------- matmul
def test_matmul_identity():
    A = Tensor(np.eye(2))
    B = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_array_equal((A @ B).data, B.data)


def test_matmul_dot():
    assert (Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(1, 16), st.integers(1, 16), st.integers(0, 2**31))
def test_matmul_matches_triple_loop(n, k, m, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(n, k)), rng.normal(size=(k, m))
    assert np.max(np.abs(matmul(Tensor(A), Tensor(B)).data - matmul_loops(A, B))) < 1e-12


def test_matmul_shape_mismatch():
    with pytest.raises(ContractError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


# ---------------------------------------------------------------- softmax
def test_softmax_examples():
    np.testing.assert_allclose(softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)
    big = softmax(Tensor([1000.0, 0.0])).data
    # exp(-1000) underflows to 0 in double precision; the point is no overflow/NaN
    assert np.all(np.isfinite(big)) and big[0] == 1.0 and 0.0 <= big[1] < 1e-300
    assert abs(softmax(Tensor([100.0, 0.0])).data[1] - math.exp(-100)) < 1e-55
    x = np.array([1.0, 2.0, 3.0])
    oracle = np.exp(x) / np.exp(x).sum()
    assert np.max(np.abs(softmax(Tensor(x)).data - oracle)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)), elements=finite), st.sampled_from([0, 1, -1]))
def test_softmax_slices_sum_to_one(x, axis):
    s = softmax(Tensor(x), axis=axis).data
    assert np.all(s >= 0)
    assert np.max(np.abs(s.sum(axis=axis) - 1.0)) <= 1e-12


def test_softmax_bad_axis():
    with pytest.raises(ContractError):
        softmax(Tensor(np.zeros((2, 2))), axis=2)


def test_log_softmax_consistent():
    x = np.random.default_rng(0).normal(size=(4, 5))
    np.testing.assert_allclose(np.exp(log_softmax(Tensor(x)).data), softmax(Tensor(x)).data, atol=1e-14)


# ---------------------------------------------------------------- layer norm
def _ln(x):
    n = x.shape[-1]
    return layer_norm(Tensor(x), Tensor(np.ones(n)), Tensor(np.zeros(n))).data


def test_layer_norm_examples():
    np.testing.assert_array_equal(_ln(np.array([5.0, 5.0, 5.0])), [0.0, 0.0, 0.0])
    # mean 2, population std 1; epsilon inside the root
    np.testing.assert_allclose(_ln(np.array([1.0, 3.0])), [-1 / math.sqrt(1 + 1e-5), 1 / math.sqrt(1 + 1e-5)], rtol=1e-14)
    np.testing.assert_allclose(_ln(np.array([1.0, 3.0])), [-1.0, 1.0], atol=1e-5)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 9)), elements=finite))
def test_layer_norm_zero_mean(x):
    assert np.max(np.abs(_ln(x).mean(axis=-1))) < 1e-10


# ---------------------------------------------------------------- gelu
def test_gelu_examples():
    assert gelu(Tensor([0.0])).data[0] == 0.0
    assert abs(gelu(Tensor([1.0])).data[0] - 0.8413447460685429) < 1e-9
    assert abs(gelu(Tensor([1.0])).data[0] - gelu_erf(1.0)) < 1e-12
    far = gelu(Tensor([20.0, -20.0])).data
    assert abs(far[0] - 20.0) < 1e-12 and abs(far[1]) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(-8, 8))
def test_gelu_matches_erf_oracle(x):
    assert abs(gelu(Tensor([x])).data[0] - gelu_erf(x)) < 1e-12


# ---------------------------------------------------------------- dropout
def test_dropout_modes():
    x = Tensor(np.arange(6.0))
    assert dropout(x, 0.3, training=False, rng=None) is x
    assert dropout(x, 0.0, training=True, rng=make_rng(0)) is x


def test_dropout_law_of_large_numbers():
    out = dropout(Tensor(np.ones(10**6)), 0.5, training=True, rng=make_rng(1)).data
    assert abs(out.mean() - 1.0) < 0.01
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_dropout_rejects_p_one():
    with pytest.raises(ContractError):
        dropout(Tensor([1.0]), 1.0, True, make_rng(0))


# ---------------------------------------------------------------- backward
def test_backward_sum():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])


def test_backward_dot():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    y = Tensor([4.0, -1.0, 0.5], requires_grad=True)
    (x * y).sum().backward()
    np.testing.assert_array_equal(x.grad, y.data)
    np.testing.assert_array_equal(y.grad, x.data)


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_backward_nonfinite_loss():
    x = Tensor([0.0], requires_grad=True)
    with pytest.raises(NumericError):
        log(x).sum().backward()


def test_gradients_accumulate_over_reuse():
    x = Tensor([3.0], requires_grad=True)
    (x * x + x).sum().backward()
    assert x.grad[0] == 7.0


def test_computation_record_is_topological():
    a = Tensor([1.0], requires_grad=True)
    b = exp(a) * a + a
    loss = b.sum()
    order = computation_record(loss)
    pos = {id(t): i for i, t in enumerate(order)}
    for t in order:
        for parent in t._parents:
            assert pos[id(parent)] < pos[id(t)]


def test_no_grad_builds_no_graph():
    a = Tensor([1.0], requires_grad=True)
    with no_grad():
        b = a * 2.0
    assert not b.requires_grad


# ---------------------------------------------------------------- grad check
def test_grad_check_square():
    theta = Tensor([3.0])
    assert grad_check(lambda: (theta * theta).sum(), [theta]) < 1e-10


def test_grad_check_linear_softmax_ce():
    rng = np.random.default_rng(0)
    X = Tensor(rng.normal(size=(5, 3)))
    W = Tensor(rng.normal(size=(3, 2)))
    b = Tensor(rng.normal(size=2))
    y = np.array([0, 1, 1, 0, 1])
    assert grad_check(lambda: cross_entropy(X @ W + b, y).mean(), [W, b]) < 1e-6


PRIMITIVES = {
    "add": lambda a, b: (a + b).sum(),
    "sub": lambda a, b: (a - b * 2.0).sum(),
    "mul": lambda a, b: (a * b).sum(),
    "div": lambda a, b: (a / (b * b + 1.0)).sum(),
    "pow": lambda a, b: ((a * a + 1.0) ** 1.5).sum(),
    "exp_log": lambda a, b: (log(exp(a) + 1.0) * b).sum(),
    "matmul": lambda a, b: (a @ b.transpose()).sum(),
    "mean": lambda a, b: (a * b).mean(),
    "reshape": lambda a, b: (a.reshape(6) * b.reshape(6)).sum(),
    "getitem": lambda a, b: (getitem(a, (slice(None), [0, 2, 0])) * b[:, :3]).sum(),
    "stack_concat": lambda a, b: (stack([a, b], axis=0).sum() + concat([a, b], axis=1) @ Tensor(np.arange(6.0).reshape(6, 1))).sum(),
    "softmax": lambda a, b: (softmax(a, axis=-1) * b).sum(),
    "layer_norm": lambda a, b: (layer_norm(a, b[0], b[1]) * a).sum(),
    "gelu": lambda a, b: (gelu(a) * b).sum(),
    "cross_entropy": lambda a, b: cross_entropy(a * b, np.array([2, 0])).sum(),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    rng = np.random.default_rng(7)
    a = Tensor(rng.normal(size=(2, 3)))
    b = Tensor(rng.normal(size=(2, 3)))
    assert grad_check(lambda: PRIMITIVES[name](a, b), [a, b]) < 1e-6


def test_broadcast_gradient_reduces_to_operand_shape():
    a = Tensor(np.ones((4, 3)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    (a * b).sum().backward()
    np.testing.assert_array_equal(b.grad, [4.0, 4.0, 4.0])
