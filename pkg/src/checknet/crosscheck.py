"""Redundant, obfuscated output sets on an expanded output layer.

The output layer grows from ``N_c`` to ``N_o`` nodes.  ``N_s`` secret sets of
``N_c`` node indices are drawn; position ``k`` in a set stands for class
``k``.  Only the head is retrained, so that every set classifies on its own.
At verification time each set votes and the size of the winning vote, ``m``,
is the CrossCheck statistic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .basemodel import BaseModel, ConfigError, Dataset, penultimate


@dataclass(frozen=True)
class CrossCheckConfig:
    n_outputs: int
    sets: np.ndarray  # (N_s, N_c) node indices

    def __post_init__(self):
        sets = np.asarray(self.sets, dtype=np.int64)
        object.__setattr__(self, "sets", sets)
        if sets.ndim != 2 or sets.shape[0] < 1 or sets.shape[1] < 1:
            raise ConfigError("sets must be a non-empty N_s x N_c index array")
        if sets.min() < 0 or sets.max() >= self.n_outputs:
            raise ConfigError(f"set indices must be in [0, {self.n_outputs})")
        if any(len(set(row.tolist())) != len(row) for row in sets):
            raise ConfigError("indices within a set must be distinct")

    @property
    def n_sets(self) -> int:
        return self.sets.shape[0]

    @property
    def n_classes(self) -> int:
        return self.sets.shape[1]

    def decoys(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_outputs), self.sets.ravel())


def sample_sets(rng: nx.RngStream, n_outputs: int, n_sets: int, n_classes: int) -> CrossCheckConfig:
    """Each set is ``n_classes`` distinct nodes; sets are drawn independently and may overlap."""
    if n_classes > n_outputs:
        raise ConfigError(f"N_c={n_classes} exceeds N_o={n_outputs}")
    if n_sets < 1 or n_classes < 1:
        raise ConfigError("need N_s >= 1 and N_c >= 1")
    gen = rng.generator()
    sets = np.stack([gen.choice(n_outputs, size=n_classes, replace=False) for _ in range(n_sets)])
    return CrossCheckConfig(n_outputs, sets)


@dataclass
class ExpandedHead:
    W: np.ndarray  # (N_o, p)
    b: np.ndarray
    metrics: dict = field(default_factory=dict)

    @property
    def n_outputs(self) -> int:
        return self.W.shape[0]

    def __call__(self, features) -> np.ndarray:
        return nx.affine(self.W, self.b, features)


@dataclass(frozen=True)
class HeadHyper:
    epochs: int = 10
    batch_size: int = 256
    lr: float = 1e-3


def head_loss_and_grad(y: np.ndarray, labels: np.ndarray, cfg: CrossCheckConfig):
    """Mean over sets of per-set softmax cross entropy, and dLoss/dy.

    Nodes outside every set get an exactly-zero gradient; a node shared by
    several sets accumulates a term from each.
    """
    n = len(labels)
    sub = y[:, cfg.sets]  # (n, N_s, N_c)
    logp = nx.log_softmax(sub, axis=-1)
    rows = np.arange(n)
    loss = -np.mean(logp[rows, :, labels])
    d_sub = np.exp(logp)
    d_sub[rows, :, labels] -= 1.0
    d_sub /= n * cfg.n_sets
    dy = np.zeros_like(y)
    for s in range(cfg.n_sets):
        dy[:, cfg.sets[s]] += d_sub[:, s, :]
    return float(loss), dy


def set_votes(y, cfg: CrossCheckConfig) -> np.ndarray:
    """Per-set class votes; ties go to the lowest position."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1:] != (cfg.n_outputs,):
        raise nx.ShapeError(f"output has width {y.shape[-1:]}, expected {cfg.n_outputs}")
    return np.argmax(y[..., cfg.sets], axis=-1)


def majority(votes, n_classes: int | None = None):
    """Most frequent vote and its count; ties go to the smallest label.

    Accepts a single vote vector or a batch ``(n, N_s)``.
    """
    votes = np.asarray(votes, dtype=np.int64)
    if votes.size == 0 or votes.shape[-1] == 0:
        raise ValueError("majority of no votes")
    k = n_classes if n_classes is not None else int(votes.max()) + 1
    v2 = np.atleast_2d(votes)
    counts = np.zeros((v2.shape[0], k), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(v2.shape[0]), v2.shape[1]), v2.ravel()), 1)
    label = np.argmax(counts, axis=1)
    m = counts.max(axis=1)
    if votes.ndim == 1:
        return int(label[0]), int(m[0])
    return label, m


def retrain_head(base: BaseModel, data: Dataset, cfg: CrossCheckConfig, hyper: HeadHyper,
                 rng: nx.RngStream, test: Dataset | None = None) -> ExpandedHead:
    """Fit a fresh ``p -> N_o`` head on frozen trunk features."""
    if cfg.n_classes != data.n_classes:
        raise ConfigError(f"sets have {cfg.n_classes} positions but data has {data.n_classes} classes")
    feats = penultimate(base, data.inputs)
    p = feats.shape[1]
    [(W, b)] = nx.init_layers(rng.child("init").generator(), [p, cfg.n_outputs])
    order = rng.child("batches").generator()
    adam = nx.AdamHyper(lr=hyper.lr)
    state = None
    for epoch in range(hyper.epochs):
        total = 0.0
        for idx in nx.minibatches(len(data), hyper.batch_size, order):
            f = feats[idx]
            loss, dy = head_loss_and_grad(nx.affine(W, b, f), data.labels[idx], cfg)
            total += loss * len(idx)
            (W, b), state = nx.adam_step([W, b], [dy.T @ f, dy.sum(axis=0)], state, adam)
        nx.check_finite_loss(total, f"head epoch {epoch}")
    head = ExpandedHead(W, b)
    head.metrics = head_metrics(head, feats, data.labels, cfg, "train")
    if test is not None:
        head.metrics.update(head_metrics(head, penultimate(base, test.inputs), test.labels, cfg, "test"))
    return head


def head_metrics(head: ExpandedHead, feats, labels, cfg: CrossCheckConfig, tag: str) -> dict:
    votes = set_votes(head(feats), cfg)
    label, _ = majority(votes, cfg.n_classes)
    per_set = np.mean(votes == labels[:, None], axis=0)
    return {f"{tag}_majority_acc": float(np.mean(label == labels)),
            f"{tag}_per_set_acc": [float(a) for a in per_set]}
