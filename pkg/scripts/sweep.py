"""Hyperparameter sweep: detection AUC and accuracy against N_o, N_s and l.

The base model is trained once per seed and shared across the grid, so
each point only pays for protection and one campaign.

    python3 scripts/sweep.py --out runs/sweep --n-outputs 40 100 --n-sets 10 30 --bits 32 64
"""

import argparse
import dataclasses
import itertools
import time
from pathlib import Path

from checknet import analysis as an
from checknet import pipeline as pl
from checknet.basemodel import train_base
from checknet.campaign import run_campaign
from checknet.config import load_config
from checknet.numerics import RngStream
from checknet.verifier import protect


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--n-outputs", type=int, nargs="+", default=[40, 100])
    ap.add_argument("--n-sets", type=int, nargs="+", default=[10, 30])
    ap.add_argument("--bits", type=int, nargs="+", default=[32, 64])
    ap.add_argument("--n-samples", type=int, default=5000, help="test samples per campaign")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in args.seeds:
        cfg = load_config(args.config, {"seed": seed, "out_dir": str(out)})
        train, test = pl.load_data(cfg)
        base = train_base(train, cfg.base, RngStream(seed, "base"), test)
        spec = dataclasses.replace(cfg.campaign, n_samples=args.n_samples)
        for n_o, n_s, l in itertools.product(args.n_outputs, args.n_sets, args.bits):
            start = time.perf_counter()
            hyper = dataclasses.replace(cfg.checknet, n_outputs=n_o, n_sets=n_s, bits=l)
            bundle = protect(base, train, hyper, RngStream(seed, "protect"), test)
            recs = run_campaign(bundle, test, spec, RngStream(seed, "campaign"), fit_data=train)
            table = an.RecordTable.from_records(recs)
            aucs = {k: an.roc(table, l, n_s, attack=k).auc for k in ("random", "targeted", "replay")}
            row = (seed, n_o, n_s, l, base.accuracy(test), bundle.metadata["head_metrics"]["test_majority_acc"],
                   aucs["random"], aucs["targeted"], aucs["replay"], round(time.perf_counter() - start, 1))
            rows.append(row)
            print(" ".join(str(v) for v in row), flush=True)
    header = ["seed", "N_o", "N_s", "l", "unprotected_acc", "protected_acc", "auc_random", "auc_targeted",
              "auc_replay", "seconds"]
    pl.write_csv(out / "sweep.csv", header, rows)
    pl.write_manifest(out, "sweep", None, ["sweep.csv"], {"args": vars(args)})


if __name__ == "__main__":
    main()
