import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nptad.exceptions import ContractError
from nptad.model import FeatureSchema, NptConfig
from nptad.numerics import make_rng
from nptad.optim import (
    LambState, LookaheadState, clip_gradients, global_norm, lamb_step, lookahead_update, lr_at,
)
from nptad.training import TrainConfig, train_npt
from oracles import lamb_closed_form


# ---------------------------------------------------------------- clipping
def test_clip_examples():
    g = [np.array([0.3, 0.4])]
    out, norm = clip_gradients(g, 1.0)
    assert norm == 0.5 and np.array_equal(out[0], g[0])
    out, norm = clip_gradients([np.array([3.0, 4.0])], 1.0)
    assert norm == 5.0
    np.testing.assert_allclose(out[0], [0.6, 0.8], rtol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 10))
def test_clip_bounds_norm_and_keeps_direction(seed, max_norm):
    rng = np.random.default_rng(seed)
    grads = [rng.normal(size=s) * rng.uniform(0.01, 20) for s in [(3,), (2, 4), (5,)]]
    out, before = clip_gradients(grads, max_norm)
    after = global_norm(out)
    assert after <= max_norm + 1e-12
    assert after <= before + 1e-12
    a, b = np.concatenate([g.ravel() for g in grads]), np.concatenate([g.ravel() for g in out])
    assert abs(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)) - 1.0) < 1e-12


# ---------------------------------------------------------------- LAMB
def test_lamb_zero_gradient_is_fixed_point():
    w = [np.array([1.0, -2.0]), np.array([[0.5]])]
    ref = [x.copy() for x in w]
    state = LambState()
    for _ in range(20):
        lamb_step(w, [np.zeros(2), np.zeros((1, 1))], state, lr=0.1)
    for a, b in zip(w, ref):
        np.testing.assert_array_equal(a, b)


def test_lamb_scalar_step_closed_form():
    w = [np.array([1.0])]
    state = LambState()
    lamb_step(w, [np.array([1.0])], state, lr=0.01)
    # m_hat = 1, v_hat = 1, u = 1 / (1 + 1e-6), trust = |w| / |u|, so w moves by exactly lr
    u = 1.0 / (1.0 + 1e-6)
    expected = 1.0 - 0.01 * (1.0 / u) * u
    assert abs(w[0][0] - expected) < 1e-12
    oracle, _, _ = lamb_closed_form(np.array([1.0]), np.array([1.0]), 1, 0.0, 0.0, 0.01)
    assert abs(w[0][0] - oracle[0]) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.floats(0.0, 0.1))
def test_lamb_matches_oracle_over_steps(seed, steps, wd):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=5)
    params = [w.copy()]
    state = LambState(weight_decay=wd)
    m = v = np.zeros(5)
    ref = w.copy()
    for t in range(1, steps + 1):
        g = rng.normal(size=5)
        lamb_step(params, [g], state, lr=0.02)
        ref, m, v = lamb_closed_form(ref, g, t, m, v, 0.02, wd=wd)
        assert np.max(np.abs(params[0] - ref)) < 1e-12
    assert state.t == steps


def test_lamb_bias_correction_between_steps():
    # identical gradient on two calls: the second update differs exactly through t
    w1 = [np.array([2.0, -1.0])]
    st_ = LambState()
    g = np.array([0.3, -0.7])
    lamb_step(w1, [g], st_, 0.05)
    after1 = w1[0].copy()
    lamb_step(w1, [g], st_, 0.05)
    ref, m, v = lamb_closed_form(np.array([2.0, -1.0]), g, 1, 0.0, 0.0, 0.05)
    ref2, _, _ = lamb_closed_form(ref, g, 2, m, v, 0.05)
    assert np.max(np.abs(after1 - ref)) < 1e-12
    assert np.max(np.abs(w1[0] - ref2)) < 1e-12


def test_lamb_zero_weights_use_unit_trust():
    w = [np.zeros(3)]
    lamb_step(w, [np.array([1.0, -1.0, 2.0])], LambState(), lr=0.1)
    ref, _, _ = lamb_closed_form(np.zeros(3), np.array([1.0, -1.0, 2.0]), 1, 0.0, 0.0, 0.1)
    np.testing.assert_allclose(w[0], ref, atol=1e-15)
    assert np.all(np.isfinite(w[0]))


def test_lamb_errors():
    with pytest.raises(ContractError):
        lamb_step([np.zeros(2)], [np.zeros(3)], LambState(), 0.1)
    with pytest.raises(ContractError):
        lamb_step([np.zeros(2)], [np.zeros(2)], LambState(), -1.0)


# ---------------------------------------------------------------- Lookahead
def test_lookahead_midpoint():
    fast = [np.array([0.0])]
    state = LookaheadState.from_params(fast, alpha=0.5, k=1)
    fast[0][...] = 2.0
    assert lookahead_update(fast, state)
    assert fast[0][0] == 1.0 and state.slow[0][0] == 1.0


def test_lookahead_fixed_point_and_counting():
    fast = [np.array([3.0, 4.0])]
    state = LookaheadState.from_params(fast, alpha=0.5, k=6)
    syncs = 0
    for _ in range(12):
        before = fast[0].copy()
        synced = lookahead_update(fast, state)
        syncs += synced
        if not synced:
            np.testing.assert_array_equal(fast[0], before)
    assert syncs == 2
    np.testing.assert_array_equal(fast[0], [3.0, 4.0])


def test_lookahead_closed_form_with_lamb():
    rng = np.random.default_rng(3)
    w0 = rng.normal(size=4)
    fast = [w0.copy()]
    look = LookaheadState.from_params(fast, alpha=0.5, k=3)
    lamb = LambState()
    ref, m, v = w0.copy(), 0.0, 0.0
    slow = w0.copy()
    for t in range(1, 7):
        g = rng.normal(size=4)
        lamb_step(fast, [g], lamb, 0.01)
        lookahead_update(fast, look)
        ref, m, v = lamb_closed_form(ref, g, t, m, v, 0.01)
        if t % 3 == 0:
            slow = slow + 0.5 * (ref - slow)
            ref = slow.copy()
        assert np.max(np.abs(fast[0] - ref)) < 1e-12


# ---------------------------------------------------------------- schedule
def test_schedule_points():
    T = 1000
    assert lr_at(500, T, 0.01) == 0.01
    assert lr_at(0, T, 0.01) == 0.01
    assert abs(lr_at(850, T, 0.01) - 0.005) < 1e-15
    assert lr_at(T - 1, T, 0.01) < 0.01 * 1e-3
    # right at the 70% boundary the cosine starts at its maximum
    assert lr_at(700, T, 0.01) == 0.01
    assert abs(lr_at(701, T, 0.01) - 0.01) < 0.01 * 1e-3


def test_schedule_monotone_after_flat():
    vals = [lr_at(s, 400, 1.0) for s in range(400)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert min(vals) >= 0.0


def test_schedule_rejects_out_of_range():
    with pytest.raises(ContractError):
        lr_at(10, 10, 0.1)


# ---------------------------------------------------------------- training smoke
def test_training_decreases_moving_average():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(32, 1))
    X = np.hstack([z, 2 * z + 0.1 * rng.normal(size=(32, 1)), -z + 0.1 * rng.normal(size=(32, 1))])
    schema = FeatureSchema.fit(X)
    cfg = NptConfig(depth=2, heads=2, embed_dim=4, dropout_p=0.0)
    _, losses = train_npt(X, schema, cfg, TrainConfig(epochs=200, lr=0.01, p_mask=0.3), make_rng(0))
    assert len(losses) == 200 and all(math.isfinite(v) for v in losses)
    ma = np.convolve(losses, np.ones(20) / 20, mode="valid")
    assert ma[-1] < ma[0]
    assert np.mean(losses[-20:]) < 0.5 * np.mean(losses[:20])


def test_training_is_deterministic():
    X = np.random.default_rng(1).normal(size=(12, 3))
    schema = FeatureSchema.fit(X)
    cfg = NptConfig(depth=1, heads=1, embed_dim=2)
    tc = TrainConfig(epochs=5, batch_size=5)
    p1, l1 = train_npt(X, schema, cfg, tc, make_rng(4))
    p2, l2 = train_npt(X, schema, cfg, tc, make_rng(4))
    assert l1 == l2 and len(l1) == 15
    for k in p1:
        np.testing.assert_array_equal(p1[k].data, p2[k].data)
