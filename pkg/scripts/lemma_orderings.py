"""Monte Carlo attacker on the CrossCheck vote across small configurations.

Prints one table row per (config, information model) and writes the table
to ``<out>/lemma_orderings.csv``.

    python3 scripts/lemma_orderings.py --trials 100000
"""

import argparse
from pathlib import Path

from checknet import pipeline as pl

CONFIGS = [(12, 4, 3, 4, 2), (12, 4, 3, 4, 1), (12, 4, 3, 8, 2), (12, 3, 3, 3, 1), (9, 3, 3, 3, 1),
           (12, 4, 2, 4, 2), (8, 4, 2, 4, 1)]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/lemma")
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n_o, n_s, n_c, g, tc in CONFIGS:
        for r in pl.lemma_table(n_o, n_s, n_c, g, tc, args.trials, args.seed):
            rows.append((n_o, n_s, n_c, g, tc, r["case"], r["estimate"], r["se"]))
            print(f"N_o={n_o:<3} N_s={n_s} N_c={n_c} g={g} T_c={tc}  {r['case']:<24} "
                  f"{r['estimate']:.5f} +- {r['se']:.5f}", flush=True)
    pl.write_csv(out / "lemma_orderings.csv", ["N_o", "N_s", "N_c", "g_nodes", "T_c", "case", "estimate", "se"], rows)
    pl.write_manifest(out, "lemma-orderings", None, ["lemma_orderings.csv"], {"args": vars(args)})


if __name__ == "__main__":
    main()
