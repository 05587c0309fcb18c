import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nptad.exceptions import ContractError
from nptad.masking import MaskBank, build_mask_bank
from nptad.model import FeatureSchema, NptConfig, NptModel, init_params
from nptad.numerics import make_rng
from nptad.scoring import ScoreConfig, aggregate, score_batch, select_context, write_scores_csv


class PerfectCopy:
    def row_losses(self, X, M):
        return np.zeros(len(X))


class MaskIndexLoss:
    """Loss of every row equals 1 + (index of the masked feature)."""

    def row_losses(self, X, M):
        return M @ (np.arange(M.shape[1]) + 1.0)


def small_model(X, variant="npt", seed=0, depth=2):
    schema = FeatureSchema.fit(X)
    cfg = NptConfig(depth=depth, heads=2, embed_dim=4, variant=variant)
    return NptModel(cfg, schema, init_params(cfg, schema, make_rng(seed)))


def test_perfect_model_scores_zero():
    X = np.random.default_rng(0).normal(size=(10, 3))
    s = score_batch(PerfectCopy(), X, X[:4], build_mask_bank(3, 2)).scores
    np.testing.assert_array_equal(s, np.zeros(4))


def test_loss_matrix_aggregation():
    X = np.zeros((5, 3))
    bank = build_mask_bank(3, 1)
    mean = score_batch(MaskIndexLoss(), X, X[:2], bank, ScoreConfig(keep_loss_matrix=True))
    np.testing.assert_array_equal(mean.loss_matrix, [[1, 2, 3], [1, 2, 3]])
    np.testing.assert_array_equal(mean.scores, [2.0, 2.0])
    mx = score_batch(MaskIndexLoss(), X, X[:2], bank, ScoreConfig(aggregation="max"))
    np.testing.assert_array_equal(mx.scores, [3.0, 3.0])


def test_aggregate_examples():
    assert aggregate([5.0], "mean") == 5.0 == aggregate([5.0], "max")
    assert aggregate([0.0, 0.0, 4.0], "mean") == 4 / 3
    with pytest.raises(ContractError):
        aggregate([], "mean")
    with pytest.raises(ContractError):
        aggregate([1.0], "median")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=30))
def test_mean_never_exceeds_max(xs):
    assert aggregate(xs, "mean") <= aggregate(xs, "max") * (1 + 1e-15)


def test_aba_only_scores_ignore_context():
    rng = np.random.default_rng(1)
    train = rng.normal(size=(30, 3))
    val = rng.normal(size=(7, 3))
    model = small_model(train, "aba_only")
    bank = build_mask_bank(3, 2)
    full = score_batch(model, train, val, bank).scores
    other = score_batch(model, rng.normal(size=(4, 3)) * 5, val, bank).scores
    assert np.array_equal(full, other)
    alone = np.array([np.mean([model.row_losses(val[i:i + 1], m[None, :])[0] for m in bank.masks])
                      for i in range(len(val))])
    assert np.array_equal(full, alone)


def test_scores_invariant_to_mask_order():
    rng = np.random.default_rng(2)
    train, val = rng.normal(size=(20, 4)), rng.normal(size=(5, 4))
    model = small_model(train)
    bank = build_mask_bank(4, 2)
    perm = rng.permutation(len(bank))
    shuffled = MaskBank(4, 2, bank.masks[perm])
    for agg in ("mean", "max"):
        a = score_batch(model, train, val, bank, ScoreConfig(aggregation=agg)).scores
        b = score_batch(model, train, val, shuffled, ScoreConfig(aggregation=agg)).scores
        np.testing.assert_allclose(a, b, rtol=1e-13)


def test_scores_invariant_to_context_permutation():
    rng = np.random.default_rng(3)
    train, val = rng.normal(size=(25, 3)), rng.normal(size=(6, 3))
    model = small_model(train, depth=3)
    bank = build_mask_bank(3, 2)
    base = score_batch(model, train, val, bank).scores
    for _ in range(3):
        other = score_batch(model, train[rng.permutation(25)], val, bank).scores
        assert np.max(np.abs(base - other)) < 1e-10


def test_scores_reproducible_parallel_and_nonnegative():
    rng = np.random.default_rng(4)
    train, val = rng.normal(size=(20, 3)), rng.normal(size=(6, 3)) * 3
    model = small_model(train)
    bank = build_mask_bank(3, 3)
    a = score_batch(model, train, val, bank).scores
    b = score_batch(model, train, val, bank).scores
    c = score_batch(model, train, val, bank, ScoreConfig(n_jobs=3)).scores
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert np.all(a >= 0)


def test_per_sample_mode_matches_manual_batches():
    rng = np.random.default_rng(5)
    train, val = rng.normal(size=(15, 3)), rng.normal(size=(4, 3))
    model = small_model(train)
    bank = build_mask_bank(3, 1)
    got = score_batch(model, train, val, bank, ScoreConfig(per_sample=True)).scores
    for i in range(4):
        single = score_batch(model, train, val[i:i + 1], bank).scores[0]
        assert got[i] == single


def test_context_subsampling():
    train = np.arange(100.0).reshape(50, 2)
    ctx = select_context(train, ScoreConfig(max_context_rows=10))
    assert ctx.shape == (10, 2)
    assert np.array_equal(ctx, select_context(train, ScoreConfig(max_context_rows=10)))
    assert select_context(train, ScoreConfig()).shape == (50, 2)


def test_score_errors():
    X = np.zeros((4, 3))
    with pytest.raises(ContractError):
        score_batch(PerfectCopy(), X, np.zeros((2, 2)), build_mask_bank(3, 1))
    with pytest.raises(ContractError):
        score_batch(PerfectCopy(), X, X, MaskBank(3, 1, np.zeros((0, 3))))
    with pytest.raises(ContractError):
        score_batch(PerfectCopy(), X, X, build_mask_bank(3, 1), ScoreConfig(aggregation="sum"))


def test_write_scores_csv(tmp_path):
    path = tmp_path / "s.csv"
    write_scores_csv(path, np.array([0.1, 2.5]), np.array([0, 1]), sample_ids=[7, 9])
    rows = list(csv.reader(open(path)))
    assert rows == [["sample_id", "score", "label"], ["7", "0.1", "0"], ["9", "2.5", "1"]]
