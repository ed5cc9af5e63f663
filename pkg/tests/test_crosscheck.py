import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from checknet import numerics as nx
from checknet.basemodel import BaseArch, ConfigError, SynthSpec, synth_dataset, train_base
from checknet.crosscheck import (CrossCheckConfig, HeadHyper, head_loss_and_grad, majority, retrain_head,
                                 sample_sets, set_votes)
from checknet.numerics import RngStream


def test_sample_sets_exhaustive_small():
    cfg = sample_sets(RngStream(0), 3, 1, 3)
    assert sorted(cfg.sets[0].tolist()) == [0, 1, 2]


def test_sample_sets_defaults():
    cfg = sample_sets(RngStream(4, "sets"), 100, 30, 10)
    assert cfg.sets.shape == (30, 10)
    assert all(len(set(r)) == 10 for r in cfg.sets.tolist())
    assert cfg.sets.max() < 100
    again = sample_sets(RngStream(4, "sets"), 100, 30, 10)
    assert np.array_equal(cfg.sets, again.sets)


def test_sample_sets_errors():
    with pytest.raises(ConfigError):
        sample_sets(RngStream(0), 5, 2, 6)
    with pytest.raises(ConfigError):
        CrossCheckConfig(4, [[0, 0]])
    with pytest.raises(ConfigError):
        CrossCheckConfig(4, [[0, 4]])


def test_sample_sets_marginal():
    hits = np.zeros(10)
    for seed in range(10_000):
        hits[sample_sets(RngStream(seed, "m"), 10, 1, 2).sets[0]] += 1
    np.testing.assert_allclose(hits / 10_000, 0.2, atol=0.02)


def test_set_votes_examples():
    cfg = CrossCheckConfig(4, [[2, 0, 3]])
    assert set_votes([0.1, 0.9, 0.3, 0.5], cfg).tolist() == [2]
    cfg = sample_sets(RngStream(1), 12, 4, 3)
    assert set_votes(np.full(12, 0.7), cfg).tolist() == [0] * 4
    with pytest.raises(nx.ShapeError):
        set_votes(np.zeros(11), cfg)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_decoy_values_never_change_votes(seed):
    gen = np.random.default_rng(seed)
    cfg = sample_sets(RngStream(seed), 20, 3, 4)
    y = gen.normal(size=20)
    decoys = cfg.decoys()
    z = y.copy()
    z[decoys] = gen.permutation(y[decoys]) * 10 if len(decoys) else z[decoys]
    assert np.array_equal(set_votes(y, cfg), set_votes(z, cfg))


@given(arrays(np.float64, 15, elements=st.floats(-50, 50)))
def test_softmax_argmax_invariance(y):
    cfg = CrossCheckConfig(15, [[0, 3, 7], [7, 1, 14], [2, 5, 9]])
    sub = y[cfg.sets]
    probs = nx.softmax(sub, axis=-1)
    # only compare where softmax keeps the ordering resolvable in float64
    top = np.sort(sub, axis=-1)
    clear = top[:, -1] - top[:, -2] > 1e-9
    assert np.array_equal(np.argmax(probs, axis=-1)[clear], set_votes(y, cfg)[clear])


def test_majority_examples():
    assert majority([2, 2, 0, 1]) == (2, 2)
    assert majority([4] * 7) == (4, 7)
    assert majority([0, 1]) == (0, 1)
    assert majority([1, 0]) == (0, 1)
    with pytest.raises(ValueError):
        majority([])
    labels, m = majority(np.array([[2, 2, 0, 1], [1, 1, 1, 0]]), 3)
    assert labels.tolist() == [2, 1] and m.tolist() == [2, 3]


@given(st.lists(st.integers(0, 5), min_size=1, max_size=30))
def test_majority_property(votes):
    label, m = majority(votes)
    counts = np.bincount(votes)
    assert m == counts.max()
    assert label == min(k for k in range(len(counts)) if counts[k] == m)


def test_decoys_get_zero_gradient_and_overlap_accumulates():
    cfg = CrossCheckConfig(8, [[0, 1, 2], [2, 3, 4]])
    gen = np.random.default_rng(0)
    y = gen.normal(size=(5, 8))
    labels = gen.integers(0, 3, size=5)
    _, dy = head_loss_and_grad(y, labels, cfg)
    assert np.all(dy[:, [5, 6, 7]] == 0.0)
    # node 2 gets a term from both sets
    only_a = head_loss_and_grad(y, labels, CrossCheckConfig(8, [[0, 1, 2]]))[1] / 2
    only_b = head_loss_and_grad(y, labels, CrossCheckConfig(8, [[2, 3, 4]]))[1] / 2
    np.testing.assert_allclose(dy[:, 2], only_a[:, 2] + only_b[:, 2])
    assert np.all(only_a[:, 2] != 0) and np.all(only_b[:, 2] != 0)


def test_head_loss_gradient_finite_differences():
    cfg = CrossCheckConfig(6, [[0, 1, 2], [5, 2, 3]])
    gen = np.random.default_rng(3)
    y = gen.normal(size=(4, 6))
    labels = gen.integers(0, 3, size=4)
    _, dy = head_loss_and_grad(y, labels, cfg)
    num = np.zeros_like(y)
    for idx in np.ndindex(y.shape):
        up, down = y.copy(), y.copy()
        up[idx] += 1e-5
        down[idx] -= 1e-5
        num[idx] = (head_loss_and_grad(up, labels, cfg)[0] - head_loss_and_grad(down, labels, cfg)[0]) / 2e-5
    np.testing.assert_allclose(dy, num, rtol=1e-4, atol=1e-9)


@pytest.fixture(scope="module")
def separable():
    spec = SynthSpec(n_classes=3, dim=6, n_train=1200, n_test=600, separation=6.0)
    train, test = synth_dataset(spec, RngStream(5, "data"))
    base = train_base(train, BaseArch(hidden=(32, 16), epochs=4, batch_size=64), RngStream(5, "base"))
    return base, train, test


def test_retrain_every_set_accurate(separable):
    base, train, test = separable
    cfg = sample_sets(RngStream(5, "sets"), 30, 4, 3)
    head = retrain_head(base, train, cfg, HeadHyper(epochs=30, batch_size=64, lr=1e-2), RngStream(5, "head"), test)
    assert min(head.metrics["test_per_set_acc"]) >= 0.9
    assert head.metrics["test_majority_acc"] >= base.accuracy(test) - 0.02


def test_degenerate_config_matches_plain_head(separable):
    base, train, test = separable
    cfg = CrossCheckConfig(3, [[0, 1, 2]])
    head = retrain_head(base, train, cfg, HeadHyper(epochs=30, batch_size=64, lr=1e-2), RngStream(6, "head"), test)
    plain = retrain_head(base, train, cfg, HeadHyper(epochs=30, batch_size=64, lr=1e-2), RngStream(7, "head"), test)
    assert abs(head.metrics["test_majority_acc"] - plain.metrics["test_majority_acc"]) <= 0.01
    assert abs(head.metrics["test_majority_acc"] - base.accuracy(test)) <= 0.01


def test_retrain_rejects_class_mismatch(separable):
    base, train, _ = separable
    with pytest.raises(ConfigError):
        retrain_head(base, train, sample_sets(RngStream(0), 10, 2, 4), HeadHyper(epochs=1), RngStream(0))
