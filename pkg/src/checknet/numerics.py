"""Dense kernels shared by every model in the package.

Everything here is a plain function of numpy arrays plus explicit state, so a
seeded computation replays bit-identically on one platform.  Matrices are
numpy ``float64`` arrays; ``W`` for a layer has shape ``(out, in)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

PROB_CLAMP = 1e-7


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# randomness


@dataclass(frozen=True)
class RngStream:
    """A named random stream derived from a root seed.

    Streams with the same ``(seed, label)`` replay the same draws; streams
    with different labels are independent children of the root seed.
    """

    seed: int
    label: str = "root"

    def child(self, name: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{name}")

    def generator(self) -> np.random.Generator:
        digest = hashlib.sha256(self.label.encode("utf-8")).digest()
        words = np.frombuffer(digest, dtype="<u4").tolist()
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *words])
        return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# forward kernels


def as_matrix(W, name: str = "W") -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ShapeError(f"{name} has non-finite entries")
    return W


def affine(W, b, x) -> np.ndarray:
    """``W x + b`` for a vector ``x`` or a batch of row vectors."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if W.ndim != 2 or b.shape != (W.shape[0],):
        raise ShapeError(f"bias shape {b.shape} does not match W {W.shape}")
    if x.shape[-1:] != (W.shape[1],) or x.ndim > 2:
        raise ShapeError(f"input shape {x.shape} incompatible with W {W.shape}")
    return x @ W.T + b


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def sigmoid(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[axis] == 0:
        raise ShapeError("softmax of an empty vector")
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def _clamp(p) -> np.ndarray:
    return np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)


def bce_loss(p, t) -> float:
    """Mean binary cross entropy of probabilities ``p`` against targets ``t``."""
    p = _clamp(p)
    t = np.asarray(t, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} vs target {t.shape}")
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)))


def ce_loss(p, label) -> float:
    """Mean categorical cross entropy; ``p`` is (K,) or (N, K)."""
    p = _clamp(p)
    p2 = np.atleast_2d(p)
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape[0] != p2.shape[0]:
        raise ShapeError("one label per probability row required")
    if np.any(labels < 0) or np.any(labels >= p2.shape[1]):
        raise IndexError(f"label out of range [0, {p2.shape[1]})")
    return float(-np.mean(np.log(p2[np.arange(len(labels)), labels])))


def hamming(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"bit vectors of length {a.shape} and {b.shape}")
    return int(np.count_nonzero(a != b))


# ---------------------------------------------------------------------------
# multilayer perceptron with rectifier hidden layers


def init_layers(rng: np.random.Generator, sizes) -> list[tuple[np.ndarray, np.ndarray]]:
    """He-initialised ``(W, b)`` pairs for consecutive ``sizes``."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        layers.append((W, np.zeros(fan_out)))
    return layers


def mlp_forward(layers, x) -> list[np.ndarray]:
    """Activations of every layer; the last entry is the linear output."""
    acts = [np.asarray(x, dtype=np.float64)]
    for i, (W, b) in enumerate(layers):
        z = affine(W, b, acts[-1])
        acts.append(relu(z) if i < len(layers) - 1 else z)
    return acts


def mlp_backward(layers, acts, d_out) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of each ``(W, b)`` given dLoss/d(linear output) for a batch."""
    grads = [None] * len(layers)
    delta = d_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W) * (acts[i] > 0)
    return grads


def mlp_macs(sizes) -> int:
    return int(sum(a * b for a, b in zip(sizes[:-1], sizes[1:])))


# ---------------------------------------------------------------------------
# adaptive-moment optimiser


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def copy(self) -> "AdamState":
        return AdamState(self.step, [a.copy() for a in self.m], [a.copy() for a in self.v])


def adam_step(params, grads, state: AdamState | None, hyper: AdamHyper = AdamHyper()):
    """One bias-corrected Adam update.  Returns ``(new_params, new_state)``.

    Inputs are not mutated.  A zero gradient on a fresh state leaves the
    parameters exactly unchanged.
    """
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
    if state is None or not state.m:
        state = AdamState(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])
    t = state.step + 1
    b1, b2 = hyper.beta1, hyper.beta2
    new_m = [b1 * m + (1 - b1) * g for m, g in zip(state.m, grads)]
    new_v = [b2 * v + (1 - b2) * g * g for v, g in zip(state.v, grads)]
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    new_params = [
        p - hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
        for p, m, v in zip(params, new_m, new_v)
    ]
    return new_params, AdamState(t, new_m, new_v)


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def check_finite_loss(loss: float, where: str) -> None:
    if not np.isfinite(loss):
        raise TrainingError(f"{where}: loss diverged ({loss})")
