"""``checknet`` command line.

Exit codes: 0 success, 2 config error, 3 runtime error.  Failures print one
JSON line ``{"error": ..., "kind": ..., "message": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .basemodel import ConfigError
from .config import load_config
from .numerics import RngStream
from .public import load_public
from .serialization import BundleError
from .verifier import load_bundle
from .worker import ReplayCache, Worker, WorkerBehavior, WorkerServer, fit_output_stats

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_config(p) -> None:
    p.add_argument("--config", help="TOML run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="out_dir", help="output directory (overrides CHECKNET_OUT_DIR)")


def _config(args, **extra):
    overrides = {"seed": args.seed, "out_dir": args.out_dir, **extra}
    return load_config(args.config, overrides)


def _print(doc) -> None:
    print(json.dumps(doc, sort_keys=True, indent=1))


def cmd_train_base(args) -> None:
    _print(pl.stage_train_base(_config(args)))


def cmd_protect(args) -> None:
    cfg = _config(args, **{"checknet.n_outputs": args.n_outputs, "checknet.n_sets": args.n_sets,
                           "checknet.bits": args.bits, "checknet.n_pairs": args.n_pairs})
    meta = pl.stage_protect(cfg, args.base)
    _print({k: meta[k] for k in ("head_metrics", "unprotected_test_acc", "hash_test_mean_distance")})


def cmd_campaign(args) -> None:
    cfg = _config(args, **{"campaign.mode": args.mode, "campaign.n_samples": args.n_samples})
    _print(pl.stage_campaign(cfg, args.bundle))


def _bundle_shape(args, cfg):
    path = args.bundle or Path(cfg.out_dir) / pl.BUNDLE_FILE
    if args.bits is not None and args.n_sets is not None:
        return args.bits, args.n_sets
    bundle = load_bundle(path)
    return bundle.bits, bundle.n_sets


def cmd_roc(args) -> None:
    cfg = _config(args)
    out = pl.out_dir(cfg)
    records = args.records or out / pl.RECORDS_FILE
    bits, n_sets = _bundle_shape(args, cfg)
    _print(pl.stage_roc(out, records, bits, n_sets, cfg))


def cmd_bounds(args) -> None:
    cfg = _config(args)
    if args.l is None and args.n_sets is None:
        raise ConfigError("bounds needs --l and/or --n-sets with --n-classes")
    if args.n_sets is not None and args.n_classes is None:
        raise ConfigError("--n-sets needs --n-classes")
    rows = pl.stage_bounds(pl.out_dir(cfg), cfg, l=args.l, hash_threshold=args.th, n_sets=args.n_sets,
                           n_classes=args.n_classes, cross_threshold=args.tc)
    for r in rows:
        params = " ".join(f"{k}={v}" for k, v in r.items() if k not in ("kind", "printed", "inclusive"))
        print(f"{r['kind']} {params} printed={r['printed']!r} inclusive={r['inclusive']!r}")


def cmd_lemma_sim(args) -> None:
    cfg = _config(args)
    rows = pl.lemma_table(args.n_outputs, args.n_sets, args.n_classes, args.g_nodes, args.tc, args.trials, cfg.seed)
    out = pl.out_dir(cfg)
    pl.write_csv(out / "lemma_sim.csv", ["case", "estimate", "se", "trials"],
                 [(r["case"], r["estimate"], r["se"], r["trials"]) for r in rows])
    pl.write_manifest(out, "lemma-sim", cfg, ["lemma_sim.csv"],
                      {"params": {k: getattr(args, k) for k in ("n_outputs", "n_sets", "n_classes", "g_nodes",
                                                                 "tc", "trials")}})
    for r in rows:
        print(f"{r['case']:<24} {r['estimate']:.6f} +- {r['se']:.6f}")


def cmd_overhead(args) -> None:
    cfg = _config(args)
    out = pl.out_dir(cfg)
    _print(pl.stage_overhead(out, args.bundle or out / pl.BUNDLE_FILE, cfg))


def cmd_pipeline(args) -> None:
    cfg = _config(args, **{"campaign.mode": args.mode})
    summary = pl.run_all(cfg)
    _print(summary)


def cmd_serve_worker(args) -> None:
    """Serve one worker behaviour over TCP until interrupted."""
    cfg = _config(args)
    model = load_public(args.public)
    behavior = WorkerBehavior(args.behavior, args.n)
    stats = cache = None
    if args.behavior in ("random", "replay"):
        train, test = pl.load_data(cfg)
        stats = fit_output_stats(model.forward(train.inputs))
        cache = ReplayCache(np.arange(len(test)), model.forward(test.inputs))
    worker = Worker(model, behavior, RngStream(cfg.seed, f"serve/{args.behavior}").generator(), stats, cache)
    with WorkerServer(worker, cfg.campaign.host, args.port) as server:
        host, port = server.address
        print(json.dumps({"host": host, "port": port, "behavior": args.behavior}), flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="checknet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-base", help="train the base classifier")
    _add_config(p)
    p.set_defaults(func=cmd_train_base)

    p = sub.add_parser("protect", help="build CrossCheck and HashCheck around a base model")
    _add_config(p)
    p.add_argument("--base", help="base model file (default: <out>/base.json)")
    p.add_argument("--n-outputs", type=int)
    p.add_argument("--n-sets", type=int)
    p.add_argument("--bits", type=int)
    p.add_argument("--n-pairs", type=int)
    p.set_defaults(func=cmd_protect)

    p = sub.add_parser("campaign", help="query workers and verify their answers")
    _add_config(p)
    p.add_argument("--bundle")
    p.add_argument("--mode", choices=("inprocess", "wire"))
    p.add_argument("--n-samples", type=int)
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("roc", help="threshold sweep, ROC curves and AUC")
    _add_config(p)
    p.add_argument("--records")
    p.add_argument("--bundle")
    p.add_argument("--bits", type=int)
    p.add_argument("--n-sets", type=int)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("bounds", help="closed-form attack success bounds")
    _add_config(p)
    p.add_argument("--l", type=int)
    p.add_argument("--th", type=int)
    p.add_argument("--n-sets", type=int)
    p.add_argument("--n-classes", type=int)
    p.add_argument("--tc", type=int)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("lemma-sim", help="Monte Carlo attacker on the CrossCheck vote")
    _add_config(p)
    p.add_argument("--n-outputs", type=int, default=12)
    p.add_argument("--n-sets", type=int, default=4)
    p.add_argument("--n-classes", type=int, default=3)
    p.add_argument("--g-nodes", type=int, default=4)
    p.add_argument("--tc", type=int, default=2)
    p.add_argument("--trials", type=int, default=100_000)
    p.set_defaults(func=cmd_lemma_sim)

    p = sub.add_parser("overhead", help="compute and memory overhead of a bundle")
    _add_config(p)
    p.add_argument("--bundle")
    p.set_defaults(func=cmd_overhead)

    p = sub.add_parser("pipeline", help="train-base, protect, campaign, roc, bounds, overhead")
    _add_config(p)
    p.add_argument("--mode", choices=("inprocess", "wire"))
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("serve-worker", help="serve one worker behaviour over local TCP")
    _add_config(p)
    p.add_argument("--public", required=True, help="public model file")
    p.add_argument("--behavior", choices=("honest", "random", "targeted", "replay"), default="honest")
    p.add_argument("--n", type=int, default=1, help="raised nodes for the targeted behaviour")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_serve_worker)
    return parser


def _fail(kind: str, exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "kind": kind, "message": msg}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        # overflow surfaces as a TrainingError; keep stderr to the one JSON line
        with np.errstate(over="ignore", invalid="ignore"):
            args.func(args)
    except (ConfigError, BundleError, FileNotFoundError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except Exception as exc:  # noqa: BLE001 - every failure maps to one exit code
        return _fail("runtime", exc, EXIT_RUNTIME)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
