#!/usr/bin/env python3
"""Clicks of Lin and RLB as the episode length varies at a fixed budget ratio c0."""
import argparse

from rlbid.evaluator import run_grid
from rlbid.experiment import Campaign, CampaignConfig, load_campaign, train_campaign
from rlbid.strategies import StrategyParams
from rlbid.synthetic import SyntheticConfig, make_split


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--campaign-dir")
    ap.add_argument("--c0", type=float, default=0.2)
    ap.add_argument("--lengths", default="200,400,600,800,1000")
    args = ap.parse_args()
    if args.campaign_dir:
        camp = load_campaign(args.campaign_dir)
    else:
        train, test, dim = make_split(100_000, 60_000, SyntheticConfig(seed=3))
        camp = Campaign("synthetic", train, test, dim)
    tc = train_campaign(camp, CampaignConfig())
    print("T,lin,rlb")
    for T in (int(x) for x in args.lengths.split(",")):
        rows = run_grid(camp.name, tc.test_log, tc.bundle, T, [StrategyParams("lin"), StrategyParams("rlb")], [args.c0])
        c = {r["strategy"]: r["clicks"] for r in rows}
        print(f"{T},{c['lin']},{c['rlb']}")


if __name__ == "__main__":
    main()
