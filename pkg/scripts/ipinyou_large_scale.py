#!/usr/bin/env python3
"""Neural-approximation strategies on long episodes (default T = 10^4).

The value table is solved exactly only on the T0 x B0 sub-grid; Seg, MapD and
MapA carry it to the full episode. Use --synthetic to run without iPinYou data.
"""
import argparse
import logging
from pathlib import Path

from rlbid.evaluator import C0_GRID, run_grid, write_csv
from rlbid.experiment import Campaign, CampaignConfig, find_campaigns, load_campaign, train_campaign
from rlbid.strategies import StrategyParams
from rlbid.synthetic import SyntheticConfig, make_split

STRATEGIES = ("lin", "rlb_nn", "rlb_nn_seg", "rlb_nn_mapd", "rlb_nn_mapa")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data")
    ap.add_argument("--synthetic", action="store_true")
    ap.add_argument("--T", type=int, default=10_000)
    ap.add_argument("--T0", type=int, default=1000)
    ap.add_argument("--out", default="results/large_scale")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    if args.synthetic:
        train, test, dim = make_split(300_000, 300_000, SyntheticConfig(seed=5))
        camps = [Campaign("synthetic", train, test, dim)]
    else:
        dirs = find_campaigns(args.data)
        if not dirs:
            raise SystemExit("no campaigns found; set IPINYOU_DATA, pass --data, or use --synthetic")
        camps = [load_campaign(d) for d in dirs]
    rows = []
    for camp in camps:
        tc = train_campaign(camp, CampaignConfig(nn_T0=args.T0))
        nn = tc.bundle.nn
        print(f"{camp.name}: NN rmse/theta_avg={nn.train_rmse / tc.bundle.stats.theta_avg:.3g}")
        res = run_grid(camp.name, tc.test_log, tc.bundle, args.T, [StrategyParams(s) for s in STRATEGIES], C0_GRID)
        for c0 in C0_GRID:
            print(f"  c0={c0:.4f} " + " ".join(f"{r['strategy']}={r['clicks']}" for r in res if r["c0"] == c0))
        rows += res
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "metrics.csv")


if __name__ == "__main__":
    main()
