"""Run stages: each reads/writes files under ``out_dir`` and leaves a manifest.

Per-stage random streams hang off the root seed by name (``data``, ``base``,
``protect``, ``campaign``), so changing one stage's settings never shifts
another stage's draws.
"""

from __future__ import annotations

import csv
import platform
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import serialization as ser
from .basemodel import BaseModel, ConfigError, Dataset, load_csv, synth_dataset, train_base
from .campaign import ATTACKS, read_records, run_campaign, write_records
from .config import RunConfig
from .numerics import RngStream
from .verifier import export_public, load_bundle, protect, save_bundle

BASE_FILE = "base.json"
BUNDLE_FILE = "bundle.checknet.json"
PUBLIC_FILE = "bundle.checknet.pub.json"
RECORDS_FILE = "records.jsonl"


def versions() -> dict:
    return {"checknet": __version__, "numpy": np.__version__, "python": platform.python_version()}


def write_manifest(out: Path, command: str, cfg: RunConfig | None, outputs, extra: dict | None = None) -> Path:
    doc = {"command": command, "versions": versions(), "outputs": sorted(str(o) for o in outputs)}
    if cfg is not None:
        doc["config"] = cfg.to_dict()
        doc["seed"] = cfg.seed
    if extra:
        doc.update(extra)
    path = out / f"{command}.manifest.json"
    path.write_text(ser.dumps(doc), encoding="utf-8")
    return path


def write_json(path: Path, doc) -> None:
    path.write_text(ser.dumps(doc), encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])


def out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    d = cfg.dataset
    if d.kind == "synthetic":
        return synth_dataset(d.synthetic, RngStream(cfg.seed, "data"))
    train = load_csv(d.train_csv, d.n_classes, "train")
    test = load_csv(d.test_csv, train.n_classes, "test")
    if test.dim != train.dim:
        raise ConfigError("train and test CSVs differ in feature width")
    return train, test


def stage_train_base(cfg: RunConfig) -> dict:
    out = out_dir(cfg)
    train, test = load_data(cfg)
    model = train_base(train, cfg.base, RngStream(cfg.seed, "base"), test)
    model.save(out / BASE_FILE)
    metrics = {"train_acc": model.accuracy(train), "test_acc": model.accuracy(test), "history": model.history,
               "macs": int(sum(W.size for W, _ in model.layers))}
    write_json(out / "base_metrics.json", metrics)
    write_manifest(out, "train-base", cfg, [BASE_FILE, "base_metrics.json"])
    return metrics


def stage_protect(cfg: RunConfig, base_path: str | None = None) -> dict:
    out = out_dir(cfg)
    train, test = load_data(cfg)
    base = BaseModel.load(base_path or out / BASE_FILE)
    bundle = protect(base, train, cfg.checknet, RngStream(cfg.seed, "protect"), test)
    save_bundle(bundle, out / BUNDLE_FILE)
    export_public(bundle, out / PUBLIC_FILE)
    write_json(out / "protect_metrics.json", bundle.metadata)
    write_manifest(out, "protect", cfg, [BUNDLE_FILE, PUBLIC_FILE, "protect_metrics.json"])
    return bundle.metadata


def stage_campaign(cfg: RunConfig, bundle_path: str | None = None) -> dict:
    out = out_dir(cfg)
    train, test = load_data(cfg)
    bundle = load_bundle(bundle_path or out / BUNDLE_FILE)
    records = run_campaign(bundle, test, cfg.campaign, RngStream(cfg.seed, "campaign"), fit_data=train)
    write_records(records, out / RECORDS_FILE)
    counts = {}
    for r in records:
        counts[r.behavior] = counts.get(r.behavior, 0) + 1
    summary = {"records": len(records), "by_behavior": counts,
               "accepted_at_bundle_thresholds": {k: sum(r.report.accepted for r in records if r.behavior == k)
                                                 for k in counts}}
    write_json(out / "campaign_summary.json", summary)
    write_manifest(out, "campaign", cfg, [RECORDS_FILE, "campaign_summary.json"])
    return summary


def stage_roc(out: Path, records_path, bits: int, n_sets: int, cfg: RunConfig | None = None) -> dict:
    records = read_records(records_path)
    table = an.RecordTable.from_records(records)
    kinds = [k for k in ATTACKS if np.any(table.behavior == k)]
    summary = {"bits": bits, "n_sets": n_sets, "auc": {}, "grid_pairs": {}}
    outputs = []
    for kind in kinds:
        res = an.roc(table, bits, n_sets, attack=kind)
        summary["auc"][kind] = res.auc
        summary["grid_pairs"][kind] = len(res.points)
        write_csv(out / f"roc_{kind}.csv", ["T_h", "T_c", "TPR", "FPR"],
                  [(p.hash_threshold, p.cross_threshold, p.tpr, p.fpr) for p in res.points])
        write_csv(out / f"roc_{kind}_frontier.csv", ["T_h", "T_c", "TPR", "FPR"],
                  [(p.hash_threshold, p.cross_threshold, p.tpr, p.fpr) for p in res.frontier])
        outputs += [f"roc_{kind}.csv", f"roc_{kind}_frontier.csv"]
    for kind in kinds:
        eff = an.effective_accuracy(table.only(kind), bits, n_sets)
        write_csv(out / f"effective_accuracy_{kind}.csv",
                  ["T_h", "T_c", "effective_accuracy", "detected", "n_attacks", "n_accepted"],
                  [(e.hash_threshold, e.cross_threshold, e.accuracy, e.detected, e.n_evaluated, e.n_accepted)
                   for e in eff])
        outputs.append(f"effective_accuracy_{kind}.csv")
    honest = table.only("honest")
    if len(honest.m):
        summary["honest_label_accuracy"] = float(np.mean(honest.label == honest.true_label))
    write_json(out / "roc_summary.json", summary)
    write_manifest(out, "roc", cfg, outputs + ["roc_summary.json"], {"records": str(records_path)})
    return summary


def bound_rows(rows) -> list[dict]:
    return [{"kind": r.kind, **r.params, "printed": r.printed, "inclusive": r.inclusive} for r in rows]


def stage_bounds(out: Path, cfg: RunConfig | None = None, **params) -> list[dict]:
    rows = bound_rows(an.bound_table(**params))
    write_json(out / "bounds.json", {"rows": rows, "footnote": an.BOUND_FOOTNOTE})
    write_manifest(out, "bounds", cfg, ["bounds.json"], {"params": params})
    return rows


def stage_overhead(out: Path, bundle_path, cfg: RunConfig | None = None) -> dict:
    bundle = load_bundle(bundle_path)
    report = an.overhead_report(bundle)
    write_json(out / "overhead.json", report)
    write_manifest(out, "overhead", cfg, ["overhead.json"], {"bundle": str(bundle_path)})
    return report


def lemma_table(n_outputs, n_sets, n_classes, g_nodes, cross_threshold, trials, seed) -> list[dict]:
    rows = []
    for knowledge in (False, True):
        for overlap in (True, False):
            if not overlap and n_sets * n_classes > n_outputs:
                continue
            label = f"{'knowledge' if knowledge else 'no-knowledge'}/{'overlap' if overlap else 'no-overlap'}"
            res = an.lemma_ordering_sim(n_outputs, n_sets, n_classes, g_nodes, cross_threshold, knowledge, overlap,
                                        trials, RngStream(seed, f"lemma/{label}"))
            rows.append({"case": label, "estimate": res.estimate, "se": res.se, "trials": res.trials})
    rows.append({"case": "closed-form", "estimate": an.crosscheck_bound(n_sets, n_classes, cross_threshold),
                 "se": 0.0, "trials": 0})
    return rows


def run_all(cfg: RunConfig) -> dict:
    """Train, protect, attack, and score with one config; returns the ROC summary."""
    out = out_dir(cfg)
    stage_train_base(cfg)
    stage_protect(cfg)
    stage_campaign(cfg)
    bundle = load_bundle(out / BUNDLE_FILE)
    summary = stage_roc(out, out / RECORDS_FILE, bundle.bits, bundle.n_sets, cfg)
    th, tc = cfg.checknet.thresholds()
    bounds = stage_bounds(out, cfg, l=bundle.bits, hash_threshold=th, n_sets=bundle.n_sets,
                          n_classes=bundle.cross.n_classes, cross_threshold=tc)
    stage_overhead(out, out / BUNDLE_FILE, cfg)
    summary = {**summary, "thresholds": {"T_h": th, "T_c": tc}, "bounds": bounds, "footnote": an.BOUND_FOOTNOTE,
               "unprotected_test_acc": bundle.metadata.get("unprotected_test_acc"),
               "protected_test_majority_acc": bundle.metadata["head_metrics"].get("test_majority_acc")}
    write_json(out / "summary.json", summary)
    write_manifest(out, "pipeline", cfg, ["summary.json"])
    return summary
