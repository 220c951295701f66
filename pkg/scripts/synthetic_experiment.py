#!/usr/bin/env python3
"""All eight strategies on a synthetic campaign over the c0 grid.

    python scripts/synthetic_experiment.py --out results/synthetic
"""
import argparse
import csv
import logging
from pathlib import Path

from rlbid.evaluator import C0_GRID, improvement_summary, run_grid, write_csv
from rlbid.experiment import Campaign, CampaignConfig, train_campaign
from rlbid.strategies import VARIANTS, StrategyParams
from rlbid.synthetic import SyntheticConfig, make_split


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-train", type=int, default=200_000)
    ap.add_argument("--n-test", type=int, default=100_000)
    ap.add_argument("--T", type=int, default=1000)
    ap.add_argument("--nn-T0", type=int, default=500)
    ap.add_argument("--price-ctr-corr", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--out", default="results/synthetic")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    syn = SyntheticConfig(price_ctr_corr=args.price_ctr_corr, seed=args.seed)
    train, test, dim = make_split(args.n_train, args.n_test, syn)
    tc = train_campaign(Campaign("synthetic", train, test, dim), CampaignConfig(nn_T0=args.nn_T0, seed=args.seed))
    print(f"AUC train={tc.train_auc:.4f} test={tc.test_auc:.4f} theta_avg={tc.bundle.stats.theta_avg:.3g} "
          f"cpm_train={tc.bundle.stats.cpm_train:.2f}")

    rows = run_grid("synthetic", tc.test_log, tc.bundle, args.T, [StrategyParams(v) for v in VARIANTS], C0_GRID)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "metrics.csv")
    summary = improvement_summary(rows)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(summary)
    print(f"{'c0':>8} " + " ".join(f"{v:>12}" for v in VARIANTS))
    for c0 in C0_GRID:
        clicks = {r["strategy"]: r["clicks"] for r in rows if r["c0"] == c0}
        print(f"{c0:8.4f} " + " ".join(f"{clicks[v]:>12}" for v in VARIANTS))


if __name__ == "__main__":
    main()
