#!/usr/bin/env python3
"""RLB against the baselines on each iPinYou campaign at T = 1000.

Expects IPINYOU_DATA (or --data) to point at a directory of campaign folders,
each with train.yzx.txt and test.yzx.txt from the standard processed release.
Writes per-campaign metrics, the RLB-over-Lin improvement table and an
AUC/clicks table.
"""
import argparse
import csv
import logging
from pathlib import Path

from rlbid.evaluator import C0_GRID, improvement_summary, run_grid, write_csv
from rlbid.experiment import CampaignConfig, find_campaigns, load_campaign, train_campaign
from rlbid.strategies import StrategyParams

STRATEGIES = ("ssmdp", "mcpc", "lin", "rlb")


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data")
    ap.add_argument("--T", type=int, default=1000)
    ap.add_argument("--out", default="results/ipinyou_small")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    dirs = find_campaigns(args.data)
    if not dirs:
        raise SystemExit("no campaigns found; set IPINYOU_DATA or pass --data")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    all_rows, table = [], []
    for d in dirs:
        tc = train_campaign(load_campaign(d), CampaignConfig())
        rows = run_grid(tc.campaign.name, tc.test_log, tc.bundle, args.T, [StrategyParams(s) for s in STRATEGIES], C0_GRID)
        all_rows += rows
        at = {r["strategy"]: r["clicks"] for r in rows if r["c0"] == 1 / 16}
        table.append({"campaign": tc.campaign.name, "auc": round(tc.test_auc, 4), **at})
        print(tc.campaign.name, f"AUC={tc.test_auc:.4f}", at)
    write_csv(all_rows, out / "metrics.csv")
    write_rows(out / "improvement.csv", improvement_summary(all_rows))
    write_rows(out / "auc_clicks_c0_1_16.csv", table)


if __name__ == "__main__":
    main()
