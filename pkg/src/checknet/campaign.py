"""Query simulated workers with test inputs and verify every answer.

Workers are built from the public network alone.  In wire mode each behaviour
runs behind its own local :class:`~checknet.worker.WorkerServer` and the
harness talks to it over TCP, sending nothing but ``{id, x}``.
"""

from __future__ import annotations

import contextlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .basemodel import ConfigError, Dataset
from .verifier import ModelBundle, VerificationReport, verify_batch
from .worker import KINDS, RemoteWorker, ReplayCache, Worker, WorkerBehavior, WorkerServer, fit_output_stats

ATTACKS = ("random", "targeted", "replay")


@dataclass(frozen=True)
class CampaignSpec:
    behaviors: dict = field(default_factory=lambda: {"honest": 1.0, "random": 1.0, "targeted": 1.0, "replay": 1.0})
    pairing: str = "all"  # "all": each sample under each behaviour; "mix": samples split by weight
    targeted_n: int = 3
    n_samples: int | None = None
    mode: str = "inprocess"  # or "wire"
    host: str = "127.0.0.1"

    def validate(self) -> None:
        unknown = set(self.behaviors) - set(KINDS)
        if unknown:
            raise ConfigError(f"unknown behaviours {sorted(unknown)}")
        if not self.behaviors or any(w < 0 for w in self.behaviors.values()) or sum(self.behaviors.values()) <= 0:
            raise ConfigError("behaviour weights must be non-negative with a positive sum")
        if self.pairing not in ("all", "mix"):
            raise ConfigError(f"pairing must be 'all' or 'mix', not {self.pairing!r}")
        if self.mode not in ("inprocess", "wire"):
            raise ConfigError(f"mode must be 'inprocess' or 'wire', not {self.mode!r}")
        if self.targeted_n < 1:
            raise ConfigError("targeted_n must be >= 1")


@dataclass
class CampaignRecord:
    sample_id: int
    true_label: int
    behavior: str
    y: np.ndarray
    report: VerificationReport
    replay_source: int | None = None
    source_label: int | None = None

    @property
    def is_attack(self) -> bool:
        return self.behavior != "honest"

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "true_label": self.true_label, "behavior": self.behavior,
                "y": [float(v) for v in self.y], "report": self.report.to_dict(),
                "replay_source": self.replay_source, "source_label": self.source_label}

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignRecord":
        return cls(int(d["sample_id"]), int(d["true_label"]), d["behavior"], np.asarray(d["y"], dtype=np.float64),
                   VerificationReport(**d["report"]), d.get("replay_source"), d.get("source_label"))


def exact_counts(weights: dict, n: int) -> dict:
    """Split ``n`` by weight with the largest-remainder rule (ties by name order)."""
    kinds = [k for k in KINDS if k in weights]
    total = sum(weights[k] for k in kinds)
    raw = {k: n * weights[k] / total for k in kinds}
    counts = {k: int(np.floor(raw[k])) for k in kinds}
    left = n - sum(counts.values())
    for k in sorted(kinds, key=lambda k: (-(raw[k] - counts[k]), kinds.index(k)))[:left]:
        counts[k] += 1
    return counts


def _schedule(spec: CampaignSpec, n: int, rng: nx.RngStream) -> list[tuple[int, str]]:
    kinds = [k for k in KINDS if spec.behaviors.get(k, 0) > 0]
    if spec.pairing == "all":
        return [(i, k) for i in range(n) for k in kinds]
    counts = exact_counts({k: spec.behaviors[k] for k in kinds}, n)
    assigned = np.empty(n, dtype=object)
    order = rng.child("assign").generator().permutation(n)
    start = 0
    for k in kinds:
        assigned[order[start : start + counts[k]]] = k
        start += counts[k]
    return [(i, str(assigned[i])) for i in range(n)]


def run_campaign(bundle: ModelBundle, data: Dataset, spec: CampaignSpec, rng: nx.RngStream,
                 fit_data: Dataset | None = None, thresholds: tuple[int, int] | None = None) -> list[CampaignRecord]:
    """One record per scheduled ``(sample, behaviour)`` query, in schedule order.

    ``fit_data`` supplies the honest outputs the random attacker fits its
    per-node Gaussians to (the training split); it defaults to ``data``.
    """
    spec.validate()
    n = len(data) if spec.n_samples is None else min(spec.n_samples, len(data))
    if n < 2 and spec.behaviors.get("replay", 0) > 0:
        raise ConfigError("replay needs at least two samples")
    x, labels = data.inputs[:n], data.labels[:n]
    public = bundle.public
    honest_out = public.forward(x)
    stats = fit_output_stats(public.forward((fit_data or data).inputs))
    cache = ReplayCache(np.arange(n), honest_out)

    schedule = _schedule(spec, n, rng)
    kinds = sorted({k for _, k in schedule}, key=KINDS.index)
    workers = {k: Worker(public, WorkerBehavior(k, spec.targeted_n), rng.child(f"worker/{k}").generator(),
                         stats=stats, cache=cache) for k in kinds}

    with contextlib.ExitStack() as stack:
        if spec.mode == "wire":
            endpoints = {}
            for k, w in workers.items():
                server = stack.enter_context(WorkerServer(w, host=spec.host).start())
                endpoints[k] = stack.enter_context(RemoteWorker(*server.address))
        else:
            endpoints = workers
        ys = np.stack([endpoints[k].respond(i, x[i]) for i, k in schedule])

    ids = np.array([i for i, _ in schedule])
    batch = verify_batch(bundle, x[ids], ys)
    th, tc = thresholds if thresholds is not None else (bundle.hash_threshold, bundle.cross_threshold)
    records = []
    for row, (i, k) in enumerate(schedule):
        rec = CampaignRecord(i, int(labels[i]), k, ys[row], batch.report(row, th, tc))
        if k == "replay":
            src = np.flatnonzero(np.all(honest_out == ys[row], axis=1))
            if len(src):
                rec.replay_source = int(src[0])
                rec.source_label = int(labels[src[0]])
        records.append(rec)
    return records


def write_records(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_records(path) -> list[CampaignRecord]:
    out = []
    with open(Path(path), encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(CampaignRecord.from_dict(json.loads(line)))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ConfigError(f"{path}:{n}: bad record ({exc})") from exc
    return out
