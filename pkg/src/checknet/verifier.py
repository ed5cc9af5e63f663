"""Owner-side protection, bundle files, and the accept/reject decision.

A result is accepted only when every hash pair is within ``T_h`` bits and the
CrossCheck majority has at least ``T_c`` votes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nx
from . import serialization as ser
from .basemodel import BaseModel, ConfigError, Dataset
from .crosscheck import CrossCheckConfig, ExpandedHead, HeadHyper, majority, retrain_head, sample_sets, set_votes
from .hashcheck import HashBank, HashHyper, HashPair, build_bank
from .public import PublicModel

BUNDLE_FORMAT = "checknet-bundle"


@dataclass(frozen=True)
class CheckNetHyper:
    n_outputs: int = 100
    n_sets: int = 30
    bits: int = 64
    n_pairs: int = 3
    hash_threshold: int | None = None  # default l // 4
    cross_threshold: int | None = None  # default ceil(0.6 * N_s)
    head: HeadHyper = HeadHyper()
    hash: HashHyper = HashHyper()

    def thresholds(self) -> tuple[int, int]:
        th = self.bits // 4 if self.hash_threshold is None else self.hash_threshold
        tc = math.ceil(0.6 * self.n_sets) if self.cross_threshold is None else self.cross_threshold
        return th, tc


@dataclass
class ModelBundle:
    public: PublicModel
    cross: CrossCheckConfig
    bank: HashBank
    cross_threshold: int
    metadata: dict = field(default_factory=dict)

    @property
    def hash_threshold(self) -> int:
        return self.bank.threshold

    @property
    def n_sets(self) -> int:
        return self.cross.n_sets

    @property
    def bits(self) -> int:
        return self.bank.length

    def to_doc(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": ser.FORMAT_VERSION,
            "public": self.public.to_doc(),
            "private": {
                "n_outputs": self.cross.n_outputs,
                "sets": ser.encode_array(self.cross.sets),
                "hash_pairs": [{"G": ser.encode_array(p.G), "f": ser.encode_layers(p.f), "metrics": p.metrics}
                               for p in self.bank.pairs],
                "hash_threshold": self.bank.threshold,
                "cross_threshold": self.cross_threshold,
            },
            "metadata": self.metadata,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ModelBundle":
        try:
            priv = doc["private"]
            public = PublicModel.from_doc(doc["public"])
            cross = CrossCheckConfig(int(priv["n_outputs"]), ser.decode_array(priv["sets"]))
            pairs = [HashPair(ser.decode_array(p["G"]), ser.decode_layers(p["f"]), dict(p.get("metrics", {})))
                     for p in priv["hash_pairs"]]
            bank = HashBank(pairs, int(priv["hash_threshold"]))
            bundle = cls(public, cross, bank, int(priv["cross_threshold"]), dict(doc.get("metadata", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise ser.BundleError(f"malformed bundle: {exc}") from exc
        if public.output_dim != cross.n_outputs or any(p.G.shape[1] != cross.n_outputs for p in pairs):
            raise ser.BundleError("bundle halves disagree on the output width")
        return bundle

    def save(self, path) -> None:
        ser.write_json(path, self.to_doc())

    def export_public(self, path) -> None:
        self.public.save(path)


def save_bundle(bundle: ModelBundle, path) -> None:
    bundle.save(path)


def load_bundle(path) -> ModelBundle:
    return ModelBundle.from_doc(ser.read_json(path, BUNDLE_FORMAT))


def export_public(bundle: ModelBundle, path) -> None:
    bundle.export_public(path)


def _validate(hyper: CheckNetHyper, n_classes: int) -> tuple[int, int]:
    th, tc = hyper.thresholds()
    if n_classes > hyper.n_outputs:
        raise ConfigError(f"N_c={n_classes} exceeds N_o={hyper.n_outputs}")
    if hyper.n_sets < 1 or hyper.n_pairs < 1 or hyper.bits < 1:
        raise ConfigError("N_s, N_h and l must be positive")
    if not 0 <= th <= hyper.bits:
        raise ConfigError(f"T_h={th} outside [0, {hyper.bits}]")
    if not 0 <= tc <= hyper.n_sets:
        raise ConfigError(f"T_c={tc} outside [0, {hyper.n_sets}]")
    return th, tc


def protect(base: BaseModel, data: Dataset, hyper: CheckNetHyper, rng: nx.RngStream,
            test: Dataset | None = None) -> ModelBundle:
    """Expand and retrain the head, then learn ``N_h`` hash pairs on honest outputs."""
    th, tc = _validate(hyper, data.n_classes)
    cross = sample_sets(rng.child("sets"), hyper.n_outputs, hyper.n_sets, data.n_classes)
    head = retrain_head(base, data, cross, hyper.head, rng.child("head"), test)
    public = PublicModel(base.trunk + [(head.W, head.b)])
    honest = public.forward(data.inputs)
    bank = build_bank(data.inputs, honest, hyper.n_pairs, hyper.bits, th, hyper.hash, rng.child("hash"))
    metadata = {
        "seed": rng.seed,
        "stream": rng.label,
        "config": _jsonable(asdict(hyper)),
        "n_classes": data.n_classes,
        "head_metrics": head.metrics,
    }
    if test is not None:
        metadata["unprotected_test_acc"] = base.accuracy(test)
        metadata["hash_test_mean_distance"] = [float(np.mean(p.distances(test.inputs, public.forward(test.inputs))))
                                               for p in bank.pairs]
    return ModelBundle(public, cross, bank, tc, metadata)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


@dataclass
class VerificationReport:
    label: int
    votes: list
    m: int
    distances: list
    hash_passes: list
    cross_pass: bool
    accepted: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BatchVerification:
    """Column-oriented verification results for many queries."""

    labels: np.ndarray  # (n,) unverified majority label
    votes: np.ndarray  # (n, N_s)
    m: np.ndarray  # (n,)
    distances: np.ndarray  # (n, N_h)

    def accepted(self, hash_threshold: int, cross_threshold: int) -> np.ndarray:
        return decide(self.distances, self.m, hash_threshold, cross_threshold)

    def report(self, i: int, hash_threshold: int, cross_threshold: int) -> VerificationReport:
        d = self.distances[i]
        hp = [bool(v) for v in d <= hash_threshold]
        cp = bool(self.m[i] >= cross_threshold)
        return VerificationReport(int(self.labels[i]), [int(v) for v in self.votes[i]], int(self.m[i]),
                                  [int(v) for v in d], hp, cp, cp and all(hp))


def decide(distances, m, hash_threshold: int, cross_threshold: int) -> np.ndarray:
    distances = np.asarray(distances)
    return np.all(distances <= hash_threshold, axis=-1) & (np.asarray(m) >= cross_threshold)


def verify_batch(bundle: ModelBundle, x, y) -> BatchVerification:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if y.shape[1] != bundle.cross.n_outputs:
        raise nx.ShapeError(f"returned output has width {y.shape[1]}, expected {bundle.cross.n_outputs}")
    if x.shape[1] != bundle.public.input_dim or len(x) != len(y):
        raise nx.ShapeError(f"inputs {x.shape} do not pair with outputs {y.shape}")
    votes = set_votes(y, bundle.cross)
    labels, m = majority(votes, bundle.cross.n_classes)
    return BatchVerification(labels, votes, m, bundle.bank.distances(x, y))


def verify(bundle: ModelBundle, x, y, hash_threshold: int | None = None,
           cross_threshold: int | None = None) -> VerificationReport:
    """Check one ``(x, y)``; thresholds default to those stored in the bundle."""
    th = bundle.hash_threshold if hash_threshold is None else hash_threshold
    tc = bundle.cross_threshold if cross_threshold is None else cross_threshold
    return verify_batch(bundle, x, y).report(0, th, tc)
