"""Input/output bithash consistency.

``g`` is a frozen random projection of the returned output followed by sign
quantisation.  ``f`` is a one-hidden-layer MLP with sigmoid outputs trained to
predict ``g``'s bits from the raw input.  An honest output lands within a few
bits of ``f(x)``; an output unrelated to ``x`` does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .basemodel import ConfigError


def sample_g(rng: nx.RngStream, l: int, n_outputs: int) -> np.ndarray:
    if l < 1 or n_outputs < 1:
        raise ConfigError("bithash length and output width must be positive")
    return rng.generator().standard_normal((l, n_outputs))


def bithash_y(G, y) -> np.ndarray:
    """Bit ``i`` is 1 iff ``(G y)_i >= 0``."""
    G = np.asarray(G, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1:] != (G.shape[1],):
        raise nx.ShapeError(f"output width {y.shape[-1:]} does not match projection {G.shape}")
    return (y @ G.T >= 0).astype(np.uint8)


def f_probs(layers, x) -> np.ndarray:
    return nx.sigmoid(nx.mlp_forward(layers, x)[-1])


def bithash_x(layers, x) -> np.ndarray:
    """Bit ``i`` is 1 iff the ``i``-th sigmoid output is >= 0.5."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (layers[0][0].shape[1],):
        raise nx.ShapeError(f"input width {x.shape[-1:]} does not match f ({layers[0][0].shape[1]})")
    return (f_probs(layers, x) >= 0.5).astype(np.uint8)


@dataclass(frozen=True)
class HashHyper:
    hidden: int = 128
    epochs: int = 10
    batch_size: int = 128
    lr: float = 1e-3


@dataclass
class HashPair:
    G: np.ndarray
    f: list  # [(W1, b1), (W2, b2)]
    metrics: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.G.shape[0]

    def distances(self, x, y) -> np.ndarray:
        return np.count_nonzero(bithash_x(self.f, x) != bithash_y(self.G, y), axis=-1)


def init_f(rng: nx.RngStream, input_dim: int, l: int, hidden: int) -> list:
    return nx.init_layers(rng.generator(), [input_dim, hidden, l])


def train_f(x, y, G, hyper: HashHyper, rng: nx.RngStream) -> list:
    """Fit ``f`` to the bits of ``g`` on honest ``(x, y)`` pairs with BCE."""
    x = np.asarray(x, dtype=np.float64)
    targets = bithash_y(G, y).astype(np.float64)
    layers = init_f(rng.child("init"), x.shape[1], G.shape[0], hyper.hidden)
    order = rng.child("batches").generator()
    adam = nx.AdamHyper(lr=hyper.lr)
    state = None
    for epoch in range(hyper.epochs):
        total = 0.0
        for idx in nx.minibatches(len(x), hyper.batch_size, order):
            acts = nx.mlp_forward(layers, x[idx])
            p = nx.sigmoid(acts[-1])
            t = targets[idx]
            total += nx.bce_loss(p, t) * len(idx)
            grads = nx.mlp_backward(layers, acts, (p - t) / t.size)
            flat, state = nx.adam_step([a for l in layers for a in l], [g for gs in grads for g in gs], state, adam)
            layers = list(zip(flat[0::2], flat[1::2]))
        nx.check_finite_loss(total, f"hash epoch {epoch}")
    return layers


def build_pair(x, y, l: int, hyper: HashHyper, rng: nx.RngStream) -> HashPair:
    y = np.asarray(y, dtype=np.float64)
    G = sample_g(rng.child("g"), l, y.shape[1])
    targets = bithash_y(G, y).astype(np.float64)
    init = init_f(rng.child("f").child("init"), np.shape(x)[1], l, hyper.hidden)
    f = train_f(x, y, G, hyper, rng.child("f"))
    pair = HashPair(G, f)
    pair.metrics = {
        "initial_bce": nx.bce_loss(f_probs(init, x), targets),
        "final_bce": nx.bce_loss(f_probs(f, x), targets),
        "train_mean_distance": float(np.mean(pair.distances(x, y))),
    }
    return pair


@dataclass
class HashBank:
    pairs: list
    threshold: int

    def __post_init__(self):
        if not self.pairs:
            raise ConfigError("a hash bank needs at least one pair")
        lengths = {p.length for p in self.pairs}
        if len(lengths) != 1:
            raise ConfigError(f"pairs disagree on bithash length: {sorted(lengths)}")
        if not 0 <= self.threshold <= self.length:
            raise ConfigError(f"T_h={self.threshold} outside [0, {self.length}]")

    @property
    def length(self) -> int:
        return self.pairs[0].length

    def distances(self, x, y) -> np.ndarray:
        """``(..., N_h)`` Hamming distances, one column per pair."""
        return np.stack([p.distances(x, y) for p in self.pairs], axis=-1)


def build_bank(x, y, n_pairs: int, l: int, threshold: int, hyper: HashHyper, rng: nx.RngStream) -> HashBank:
    pairs = [build_pair(x, y, l, hyper, rng.child(f"pair{i}")) for i in range(n_pairs)]
    return HashBank(pairs, threshold)


def check_pair(pair: HashPair, x, y, threshold: int) -> tuple[int, bool]:
    d = nx.hamming(bithash_x(pair.f, x), bithash_y(pair.G, y))
    return d, d <= threshold
