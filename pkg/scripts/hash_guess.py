"""Random-output attack on a single hash pair versus the closed-form bounds.

Trains one pair of bithash length ``l`` on a protected model's honest
outputs, then forges outputs three ways and counts how often each lands
within ``T_h`` bits of ``f(x)``:

* uniform random bits (what the closed form assumes),
* outputs drawn from the per-node Gaussians fitted on honest outputs,
* honest outputs of a different input (a replay).

    python3 scripts/hash_guess.py --base runs/default/base.json --l 16 --th 4
"""

import argparse
import json

import numpy as np

from checknet import analysis as an
from checknet import pipeline as pl
from checknet.basemodel import BaseModel
from checknet.config import load_config
from checknet.hashcheck import HashHyper, bithash_x, bithash_y, build_pair
from checknet.numerics import RngStream
from checknet.verifier import CheckNetHyper, protect
from checknet.worker import fit_output_stats


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--base", required=True)
    ap.add_argument("--l", type=int, default=16)
    ap.add_argument("--th", type=int, default=4)
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = load_config(args.config, {"seed": args.seed})
    train, test = pl.load_data(cfg)
    base = BaseModel.load(args.base)
    bundle = protect(base, train, CheckNetHyper(n_outputs=40, n_sets=10, bits=32), RngStream(args.seed, "protect"))
    honest_train = bundle.public.forward(train.inputs)
    pair = build_pair(train.inputs, honest_train, args.l, HashHyper(), RngStream(args.seed, "pair"))
    gen = RngStream(args.seed, "guess").generator()
    idx = gen.integers(0, len(test), args.trials)
    hx = bithash_x(pair.f, test.inputs[idx])

    def rate(hy):
        d = np.count_nonzero(hx != hy, axis=1)
        p = float(np.mean(d <= args.th))
        return {"rate": p, "se": float(np.sqrt(max(p * (1 - p), 1 / len(d)) / len(d)))}

    stats = fit_output_stats(honest_train)
    forged = stats.mean + stats.std * gen.standard_normal((args.trials, len(stats.mean)))
    honest_test = bundle.public.forward(test.inputs)
    other = (idx + 1 + gen.integers(0, len(test) - 1, args.trials)) % len(test)
    result = {
        "l": args.l, "T_h": args.th,
        "bound_printed": an.hashcheck_bound(args.l, args.th),
        "bound_inclusive": an.hashcheck_bound_inclusive(args.l, args.th),
        "uniform_bits": rate(gen.integers(0, 2, size=hx.shape).astype(np.uint8)),
        "fitted_gaussian": rate(bithash_y(pair.G, forged)),
        "replay": rate(bithash_y(pair.G, honest_test[other])),
        "honest": rate(bithash_y(pair.G, honest_test[idx])),
        "mean_bit": float(bithash_y(pair.G, forged).mean()),
    }
    print(json.dumps(result, indent=1))


if __name__ == "__main__":
    main()
