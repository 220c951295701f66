"""Train-everything helpers shared by the experiment scripts and the acceptance suite."""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .approx import ApproxConfig, train_nn
from .ctr import CtrHyper, CtrModel, auc, train_ctr
from .dp import diff_table, solve_value_table
from .evaluator import ModelBundle, ReplayLog, episode_budget
from .landscape import DEFAULT_DELTA_MAX, fit_landscape
from .logdata import LogRecord, SchemaConfig, campaign_stats, read_log

logger = logging.getLogger(__name__)

IPINYOU_ENV = "IPINYOU_DATA"
IPINYOU_CAMPAIGNS = ("1458", "2259", "2261", "2821", "2997", "3358", "3386", "3427", "3476")


@dataclass
class CampaignConfig:
    ctr: CtrHyper = field(default_factory=CtrHyper)
    delta_max: int = DEFAULT_DELTA_MAX
    laplace: float = 1.0
    # NN sub-grid; None skips the network (only exact-table strategies then work)
    nn_T0: int | None = None
    nn_epochs: int = 200
    seed: int = 0


@dataclass
class Campaign:
    name: str
    train: list[LogRecord]
    test: list[LogRecord]
    dim: int


@dataclass
class TrainedCampaign:
    campaign: Campaign
    bundle: ModelBundle
    test_log: ReplayLog
    train_auc: float
    test_auc: float
    seconds: float


def _dim(records: Sequence[LogRecord]) -> int:
    return max((r.features[-1] for r in records if r.features), default=0) + 1


def load_campaign(directory, name: str | None = None) -> Campaign:
    """Read ``train.yzx.txt`` / ``test.yzx.txt`` (click, price, features) from a directory."""
    d = Path(directory)
    train = read_log(d / "train.yzx.txt", SchemaConfig()).records
    test = read_log(d / "test.yzx.txt", SchemaConfig()).records
    return Campaign(name or d.name, train, test, max(_dim(train), _dim(test)))


def find_campaigns(root=None, names: Sequence[str] = IPINYOU_CAMPAIGNS) -> list[Path]:
    """Campaign directories under ``root`` (default: $IPINYOU_DATA) that hold both splits."""
    root = root or os.environ.get(IPINYOU_ENV)
    if not root:
        return []
    found = []
    for n in names:
        d = Path(root) / n
        if (d / "train.yzx.txt").is_file() and (d / "test.yzx.txt").is_file():
            found.append(d)
    return found


def train_campaign(camp: Campaign, cfg: CampaignConfig | None = None) -> TrainedCampaign:
    """CTR model, landscape, stats and (optionally) the D-network for one campaign."""
    cfg = cfg or CampaignConfig()
    start = time.time()
    ctr: CtrModel = train_ctr(camp.train, camp.dim, cfg.ctr)
    stats = campaign_stats(camp.train, ctr)
    land = fit_landscape(camp.train, cfg.delta_max, cfg.laplace)
    nn = table = None
    if cfg.nn_T0:
        B0 = episode_budget(stats.cpm_train, cfg.nn_T0, 0.5)
        table = solve_value_table(land, stats.theta_avg, cfg.nn_T0, B0 + 1)
        nn = train_nn(diff_table(table), ApproxConfig(cfg.nn_T0, B0, epochs=cfg.nn_epochs, seed=cfg.seed))
        logger.info("%s: NN rmse/theta_avg = %.3g", camp.name, nn.train_rmse / stats.theta_avg)
    bundle = ModelBundle(ctr, land, stats, ReplayLog.from_records(camp.train, ctr), nn, table)
    return TrainedCampaign(
        camp, bundle, ReplayLog.from_records(camp.test, ctr),
        auc(ctr, camp.train), auc(ctr, camp.test), time.time() - start,
    )
