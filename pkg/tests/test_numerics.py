import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from checknet import numerics as nx


def test_affine_examples():
    assert np.array_equal(nx.affine(np.eye(2), np.zeros(2), [3, 4]), [3, 4])
    assert np.array_equal(nx.affine([[1, 1]], [1], [2, 3]), [6])
    assert np.array_equal(nx.affine(np.zeros((1, 3)), [5], [7, -2, 9]), [5])


def test_affine_shape_errors():
    with pytest.raises(nx.ShapeError):
        nx.affine(np.eye(2), np.zeros(2), [1, 2, 3])
    with pytest.raises(nx.ShapeError):
        nx.affine(np.eye(2), np.zeros(3), [1, 2])


def test_softmax_examples():
    np.testing.assert_allclose(nx.softmax([0, 0, 0]), [1 / 3] * 3)
    np.testing.assert_allclose(nx.softmax([0, math.log(3)]), [0.25, 0.75], atol=1e-15)
    np.testing.assert_allclose(nx.softmax([1.0, 2.0, 5.0]), nx.softmax([101.0, 102.0, 105.0]), atol=1e-15)
    with pytest.raises(nx.ShapeError):
        nx.softmax([])


def test_softmax_shift_and_normalisation_1000_vectors():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        v = rng.normal(0, 10, size=rng.integers(1, 20))
        p = nx.softmax(v)
        assert abs(p.sum() - 1) < 1e-9
        assert np.argmax(p) == np.argmax(v)
        np.testing.assert_allclose(nx.softmax(v + rng.normal(0, 50)), p, atol=1e-12)


@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-500, 500)))
def test_softmax_property(v):
    p = nx.softmax(v)
    assert abs(p.sum() - 1) < 1e-9
    top = np.sort(v)[-2:]
    if len(v) == 1 or top[1] - top[0] > 1e-6:
        assert np.argmax(p) == np.argmax(v)


def test_sigmoid_and_losses():
    assert nx.sigmoid(0.0) == 0.5
    assert np.all(np.isfinite(nx.sigmoid(np.array([-1000.0, 1000.0]))))
    t = np.array([0.0, 1.0, 1.0, 0.0])
    assert nx.bce_loss(t, t) <= 2e-7
    assert nx.ce_loss(np.full(7, 1 / 7), 3) == pytest.approx(math.log(7))
    with pytest.raises(IndexError):
        nx.ce_loss(np.full(3, 1 / 3), 3)


@given(arrays(np.float64, 8, elements=st.floats(0, 1)), arrays(np.float64, 8, elements=st.sampled_from([0.0, 1.0])))
def test_bce_nonnegative(p, t):
    assert nx.bce_loss(p, t) >= 0


def test_hamming_examples():
    a = np.array([1, 0, 1, 1, 0], dtype=np.uint8)
    assert nx.hamming(a, a) == 0
    assert nx.hamming([1, 0, 1], [1, 1, 1]) == 1
    assert nx.hamming(a, 1 - a) == len(a)
    with pytest.raises(nx.ShapeError):
        nx.hamming([1, 0], [1, 0, 1])


@given(st.lists(st.integers(0, 1), min_size=1, max_size=64), st.randoms())
def test_hamming_symmetric_and_bounded(bits, rnd):
    a = np.array(bits)
    b = np.array([rnd.randint(0, 1) for _ in bits])
    d = nx.hamming(a, b)
    assert d == nx.hamming(b, a)
    assert 0 <= d <= len(a)


def _fd_check(loss_fn, layers, step=1e-5):
    """Compare analytic MLP gradients against central differences."""
    acts, grads = loss_fn(layers, want_grad=True)
    for li, (W, b) in enumerate(layers):
        for param, grad in ((W, grads[li][0]), (b, grads[li][1])):
            num = np.zeros_like(param)
            for idx in np.ndindex(param.shape):
                old = param[idx]
                param[idx] = old + step
                up = loss_fn(layers)
                param[idx] = old - step
                down = loss_fn(layers)
                param[idx] = old
                num[idx] = (up - down) / (2 * step)
            denom = np.maximum(np.abs(num) + np.abs(grad), 1e-8)
            ok = np.abs(num - grad) / denom
            assert np.max(ok[np.abs(num) + np.abs(grad) > 1e-7], initial=0) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_ce_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    layers = nx.init_layers(rng, [4, 5, 3])
    x = rng.normal(size=(6, 4))
    labels = rng.integers(0, 3, size=6)

    def loss_fn(layers, want_grad=False):
        acts = nx.mlp_forward(layers, x)
        p = nx.softmax(acts[-1])
        if not want_grad:
            return nx.ce_loss(p, labels)
        d = p.copy()
        d[np.arange(6), labels] -= 1
        return acts, nx.mlp_backward(layers, acts, d / 6)

    _fd_check(loss_fn, layers)


@pytest.mark.parametrize("seed", range(3))
def test_bce_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    layers = nx.init_layers(rng, [3, 6, 4])
    x = rng.normal(size=(5, 3))
    t = rng.integers(0, 2, size=(5, 4)).astype(float)

    def loss_fn(layers, want_grad=False):
        acts = nx.mlp_forward(layers, x)
        p = nx.sigmoid(acts[-1])
        if not want_grad:
            return nx.bce_loss(p, t)
        return acts, nx.mlp_backward(layers, acts, (p - t) / t.size)

    _fd_check(loss_fn, layers)


def test_adam_zero_gradient_leaves_params():
    p = [np.array([1.0, -2.0]), np.array([[3.0]])]
    new, state = nx.adam_step(p, [np.zeros(2), np.zeros((1, 1))], None)
    for a, b in zip(p, new):
        assert np.array_equal(a, b)
    assert state.step == 1


def test_adam_decreases_quadratic():
    w = [np.array([1.0])]
    new, _ = nx.adam_step(w, [2 * w[0]], None)
    assert abs(new[0][0]) < 1.0


def test_adam_deterministic_and_pure():
    rng = np.random.default_rng(1)
    p = [rng.normal(size=3)]
    _, state = nx.adam_step(p, [rng.normal(size=3)], None)
    g = [rng.normal(size=3)]
    a, sa = nx.adam_step(p, g, state.copy())
    b, sb = nx.adam_step(p, g, state.copy())
    assert np.array_equal(a[0], b[0]) and np.array_equal(sa.v[0], sb.v[0])


def test_adam_rejects_nan():
    with pytest.raises(nx.TrainingError):
        nx.adam_step([np.zeros(2)], [np.array([np.nan, 0.0])], None)


def test_rng_streams():
    a = nx.RngStream(7, "x").generator().random(5)
    b = nx.RngStream(7, "x").generator().random(5)
    c = nx.RngStream(7, "y").generator().random(5)
    d = nx.RngStream(8, "x").generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert nx.RngStream(7).child("a").label == "root/a"


@settings(max_examples=25)
@given(st.integers(0, 2**63 - 1), st.text(max_size=10))
def test_rng_stream_replays(seed, label):
    s = nx.RngStream(seed, label)
    assert np.array_equal(s.generator().integers(0, 1000, 8), s.generator().integers(0, 1000, 8))


def test_mlp_macs():
    assert nx.mlp_macs([32, 256, 128, 10]) == 32 * 256 + 256 * 128 + 128 * 10
