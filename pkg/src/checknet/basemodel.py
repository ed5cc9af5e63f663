"""Desk-scale feedforward classifier and datasets.

The protected network is a rectifier MLP ``d -> 256 -> 128 -> classes``.  The
128-wide layer is the penultimate representation that CrossCheck builds its
expanded output layer on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from . import serialization as ser


class ConfigError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    split: str = "train"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or len(self.inputs) == 0:
            raise ConfigError("dataset needs a non-empty N x d input matrix")
        if self.labels.shape != (len(self.inputs),):
            raise ConfigError("one label per input row required")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ConfigError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes, self.split)


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 10
    dim: int = 32
    n_train: int = 60_000
    n_test: int = 10_000
    separation: float = 1.0
    noise: float = 1.0
    clusters_per_class: int = 1


def synth_dataset(spec: SynthSpec, rng: nx.RngStream) -> tuple[Dataset, Dataset]:
    """Gaussian-mixture classification data split into train and test.

    Each class owns ``clusters_per_class`` centres drawn from
    ``N(0, separation^2 I)``; samples add isotropic noise of scale ``noise``.
    Class counts within each split differ by at most one.
    """
    if spec.n_classes < 2:
        raise ConfigError("need at least two classes")
    if spec.dim < 1 or spec.n_train < 1 or spec.n_test < 1 or spec.clusters_per_class < 1:
        raise ConfigError(f"invalid synthetic spec {spec}")
    if spec.noise < 0 or spec.separation <= 0:
        raise ConfigError("noise must be >= 0 and separation > 0")
    gen = rng.generator()
    centres = gen.normal(0.0, spec.separation, size=(spec.n_classes, spec.clusters_per_class, spec.dim))

    def draw(n: int, split: str) -> Dataset:
        labels = gen.permutation(np.arange(n) % spec.n_classes)
        which = gen.integers(0, spec.clusters_per_class, size=n)
        x = centres[labels, which] + spec.noise * gen.normal(size=(n, spec.dim))
        return Dataset(x, labels, spec.n_classes, split)

    return draw(spec.n_train, "train"), draw(spec.n_test, "test")


def save_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(data.dim)] + ["label"])
        for row, label in zip(data.inputs, data.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def load_csv(path, n_classes: int | None = None, split: str = "train") -> Dataset:
    """Read ``f0..f{d-1},label`` rows, e.g. precomputed image embeddings."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty CSV") from None
        d = len(header) - 1
        if d < 1 or header[-1] != "label" or header[:-1] != [f"f{i}" for i in range(d)]:
            raise ConfigError(f"{path}: header must be f0..f{{d-1}},label")
        rows = [r for r in reader if r]
    try:
        x = np.array([[float(v) for v in r[:-1]] for r in rows])
        y = np.array([int(r[-1]) for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if x.ndim != 2 or x.shape[1] != d:
        raise ConfigError(f"{path}: ragged rows")
    k = n_classes if n_classes is not None else int(y.max()) + 1
    return Dataset(x, y, k, split)


@dataclass(frozen=True)
class BaseArch:
    hidden: tuple[int, ...] = (256, 128)
    epochs: int = 8
    batch_size: int = 128
    lr: float = 1e-3


@dataclass
class BaseModel:
    """Rectifier MLP; ``layers[-1]`` is the class head, the rest the trunk."""

    layers: list
    history: list = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def trunk(self) -> list:
        return self.layers[:-1]

    @property
    def penultimate_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    @property
    def n_classes(self) -> int:
        return self.layers[-1][0].shape[0]

    def sizes(self) -> list[int]:
        return [self.input_dim] + [W.shape[0] for W, _ in self.layers]

    def logits(self, x) -> np.ndarray:
        return nx.mlp_forward(self.layers, self._check(x))[-1]

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=-1)

    def accuracy(self, data: Dataset) -> float:
        return float(np.mean(self.predict(data.inputs) == data.labels))

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.input_dim,):
            raise nx.ShapeError(f"expected inputs of width {self.input_dim}, got {x.shape}")
        return x

    def to_doc(self) -> dict:
        return {"format": "checknet-base", "version": ser.FORMAT_VERSION,
                "layers": ser.encode_layers(self.layers), "history": self.history}

    @classmethod
    def from_doc(cls, doc: dict) -> "BaseModel":
        return cls(ser.decode_layers(doc["layers"]), list(doc.get("history", [])))

    def save(self, path) -> None:
        ser.write_json(path, self.to_doc())

    @classmethod
    def load(cls, path) -> "BaseModel":
        return cls.from_doc(ser.read_json(path, "checknet-base"))


def penultimate(model: BaseModel, x) -> np.ndarray:
    """Trunk features feeding the output layer (length ``p``)."""
    h = model._check(x)
    for W, b in model.trunk:
        h = nx.relu(nx.affine(W, b, h))
    return h


def train_base(data: Dataset, arch: BaseArch, rng: nx.RngStream, test: Dataset | None = None) -> BaseModel:
    """Train a classifier with softmax cross entropy.  ``epochs=0`` returns the init."""
    sizes = [data.dim, *arch.hidden, data.n_classes]
    layers = nx.init_layers(rng.child("init").generator(), sizes)
    order_rng = rng.child("batches").generator()
    hyper = nx.AdamHyper(lr=arch.lr)
    state = None
    history = []
    for epoch in range(arch.epochs):
        total = 0.0
        for idx in nx.minibatches(len(data), arch.batch_size, order_rng):
            acts = nx.mlp_forward(layers, data.inputs[idx])
            probs = nx.softmax(acts[-1])
            total += nx.ce_loss(probs, data.labels[idx]) * len(idx)
            d_out = probs
            d_out[np.arange(len(idx)), data.labels[idx]] -= 1.0
            grads = nx.mlp_backward(layers, acts, d_out / len(idx))
            flat, state = nx.adam_step([a for l in layers for a in l], [g for p in grads for g in p], state, hyper)
            layers = list(zip(flat[0::2], flat[1::2]))
        nx.check_finite_loss(total, f"base epoch {epoch}")
        model = BaseModel(layers)
        entry = {"epoch": epoch + 1, "loss": total / len(data), "train_acc": model.accuracy(data)}
        if test is not None:
            entry["test_acc"] = model.accuracy(test)
        history.append(entry)
    return BaseModel(layers, history)
