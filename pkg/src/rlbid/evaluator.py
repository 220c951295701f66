"""Episode-based offline auction replay.

Test records are cut into consecutive episodes of T requests, each with a
fresh budget B. A request is won when ``bid >= market_price`` and the winner
pays the market price and collects the click label.

Budget units: log prices are integer price-per-mille values, so one currency
unit equals 1000 price units. ``B = CPM_train * 1e-3 * T * c0`` is a currency
amount; in price units it is ``floor(CPM_train * T * c0)`` where CPM_train is
the mean training market price.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .approx import NnModel
from .ctr import CtrModel, predict_many
from .dp import DEFAULT_MEMORY_CAP, ValueTable, solve_value_table
from .landscape import LandscapeModel
from .logdata import CampaignStats, LogRecord, clicks, prices
from .strategies import (
    DEFAULT_LIN_GRID,
    Lin,
    Mcpc,
    Rlb,
    RlbNn,
    RlbNnMapA,
    RlbNnMapD,
    RlbNnSeg,
    SsMdp,
    Strategy,
    StrategyParams,
    training_ecpc,
    tune_lin_b0,
)

logger = logging.getLogger(__name__)

C0_GRID = (1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2)
CSV_COLUMNS = ("campaign", "strategy", "T", "c0", "clicks", "wins", "bids", "cost", "win_rate", "cpm", "ecpc")


def episode_budget(cpm_train: float, T: int, c0: float) -> int:
    """Per-episode budget in log price units (see module docstring)."""
    return int(math.floor(cpm_train * T * c0 + 1e-9))


@dataclass
class EvalConfig:
    T: int
    c0: float
    cpm_train: float
    delta_max: int
    strategy: StrategyParams

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0 < self.c0 <= 1:
            raise ValueError("c0 must lie in (0, 1]")
        if self.cpm_train < 0:
            raise ValueError("cpm_train must be >= 0")

    @property
    def B(self) -> int:
        return episode_budget(self.cpm_train, self.T, self.c0)


@dataclass
class EpisodeResult:
    clicks: int = 0
    wins: int = 0
    bids: int = 0
    cost: int = 0
    budget: int = 0


@dataclass
class Metrics:
    clicks: int = 0
    wins: int = 0
    bids: int = 0
    cost: int = 0
    episodes: int = 0

    @property
    def win_rate(self) -> float:
        return self.wins / self.bids if self.bids else 0.0

    @property
    def cpm(self) -> float:
        """Cost per thousand won impressions, in currency (= mean paid price-per-mille)."""
        return self.cost / self.wins if self.wins else float("nan")

    @property
    def ecpc(self) -> float:
        """Cost per click in log price units."""
        return self.cost / self.clicks if self.clicks else float("nan")

    def add(self, ep: EpisodeResult) -> None:
        self.clicks += ep.clicks
        self.wins += ep.wins
        self.bids += ep.bids
        self.cost += ep.cost
        self.episodes += 1


class ContractBreach(AssertionError):
    pass


def make_episodes(records: Sequence, T: int) -> list:
    """Consecutive chunks of exactly T records; the tail is dropped."""
    n = len(records) // T
    if n == 0:
        raise ValueError("no full episode")
    return [records[i * T:(i + 1) * T] for i in range(n)]


def replay(strategy: Strategy, market_prices, click_labels, thetas, B: int) -> EpisodeResult:
    """One episode over parallel arrays of prices, clicks and pCTRs."""
    if B < 0:
        raise ValueError("budget must be non-negative")
    T = len(market_prices)
    res = EpisodeResult(budget=B)
    b = B
    strategy.reset(T, B)
    for i in range(T):
        t = T - i
        a = strategy.bid(t, b, float(thetas[i]))
        if a > b or a < 0:
            raise ContractBreach(f"{strategy.name} bid {a} with budget {b} at t={t}")
        res.bids += 1
        price = int(market_prices[i])
        if a >= price:
            res.wins += 1
            res.cost += price
            res.clicks += int(click_labels[i])
            b -= price
    return res


def run_episode(strategy: Strategy, episode: Sequence[LogRecord], B: int, ctr: CtrModel) -> EpisodeResult:
    return replay(strategy, prices(episode), clicks(episode), predict_many(ctr, episode), B)


@dataclass
class ReplayLog:
    """Test records pre-converted to arrays, with pCTRs filled in."""

    prices: np.ndarray
    clicks: np.ndarray
    thetas: np.ndarray

    @classmethod
    def from_records(cls, records: Sequence[LogRecord], ctr: CtrModel) -> "ReplayLog":
        return cls(prices(records), clicks(records), predict_many(ctr, records))

    def __len__(self):
        return self.prices.size


@dataclass
class ModelBundle:
    """Everything trained on the training split that strategies may need."""

    ctr: CtrModel
    landscape: LandscapeModel
    stats: CampaignStats
    train: ReplayLog | None = None  # training arrays, for Lin tuning and eCPC
    nn: NnModel | None = None
    subgrid_table: ValueTable | None = None  # exact table on the NN sub-grid, for MapA
    lin_grid: Sequence[int] = DEFAULT_LIN_GRID
    memory_cap: int = DEFAULT_MEMORY_CAP
    _table: ValueTable | None = field(default=None, repr=False)
    _b0: dict = field(default_factory=dict, repr=False)

    @property
    def delta_max(self) -> int:
        return self.landscape.delta_max

    def value_table(self, T: int, B: int) -> ValueTable:
        """Solved V covering (T, B); V(t, b) does not depend on the episode budget,
        so one table serves every smaller budget."""
        tab = self._table
        if tab is None or tab.T < T or tab.B < B:
            T2 = max(T, tab.T if tab else 0)
            B2 = max(B, tab.B if tab else 0)
            logger.info("solving value table T=%d B=%d", T2, B2)
            self._table = solve_value_table(self.landscape, self.stats.theta_avg, T2, B2, self.memory_cap)
        return self._table

    def lin_b0(self, T: int, B: int) -> int:
        if (T, B) not in self._b0:
            if self.train is None:
                raise ValueError("Lin tuning needs training arrays")
            tr = self.train
            self._b0[(T, B)] = tune_lin_b0(tr.thetas, tr.prices, tr.clicks, self.stats.theta_avg, T, B, self.lin_grid)
        return self._b0[(T, B)]

    def cpc(self) -> float:
        if self.train is None:
            raise ValueError("default CPC needs training arrays")
        return training_ecpc(self.train.prices, self.train.clicks)


def build_strategy(params: StrategyParams, bundle: ModelBundle, T: int, B: int) -> Strategy:
    v = params.variant
    dmax = bundle.delta_max
    if v == "lin":
        b0 = params.b0 if params.b0 is not None else bundle.lin_b0(T, B)
        return Lin(b0, bundle.stats.theta_avg)
    if v == "mcpc":
        return Mcpc(params.cpc if params.cpc is not None else bundle.cpc())
    if v in ("rlb", "ssmdp"):
        tab = bundle.value_table(T, B)
        return Rlb(tab, dmax) if v == "rlb" else SsMdp(tab, bundle.stats.theta_avg, dmax)
    nn = bundle.nn
    if nn is None and not (v == "rlb_nn_mapa" and params.mapa_delegate == "exact"):
        raise ValueError(f"{v} needs a trained network")
    T0 = params.T0 if params.T0 is not None else int(round(nn.t_scale))
    B0 = params.B0 if params.B0 is not None else int(round(nn.b_scale))
    if v == "rlb_nn":
        return RlbNn(nn, dmax)
    if v == "rlb_nn_seg":
        return RlbNnSeg(nn, dmax, T0)
    if v == "rlb_nn_mapd":
        return RlbNnMapD(nn, dmax, T0, B0)
    table = bundle.subgrid_table if params.mapa_delegate == "exact" else None
    return RlbNnMapA(nn, dmax, T0, B0, table)


def run_eval(cfg: EvalConfig, test: ReplayLog | Sequence[LogRecord], bundle: ModelBundle) -> Metrics:
    if not isinstance(test, ReplayLog):
        test = ReplayLog.from_records(test, bundle.ctr)
    n_ep = len(test) // cfg.T
    if n_ep == 0:
        raise ValueError("no full episode")
    B = cfg.B
    strategy = build_strategy(cfg.strategy, bundle, cfg.T, B)
    out = Metrics()
    for e in range(n_ep):
        sl = slice(e * cfg.T, (e + 1) * cfg.T)
        out.add(replay(strategy, test.prices[sl], test.clicks[sl], test.thetas[sl], B))
    return out


def metrics_row(campaign: str, strategy: str, T: int, c0: float, m: Metrics) -> dict:
    return {
        "campaign": campaign,
        "strategy": strategy,
        "T": T,
        "c0": c0,
        "clicks": m.clicks,
        "wins": m.wins,
        "bids": m.bids,
        "cost": m.cost,
        "win_rate": m.win_rate,
        "cpm": m.cpm,
        "ecpc": m.ecpc,
    }


def run_grid(
    campaign: str,
    test: ReplayLog,
    bundle: ModelBundle,
    T: int,
    strategies: Iterable[StrategyParams],
    c0s: Sequence[float] = C0_GRID,
) -> list[dict]:
    rows = []
    strategies = list(strategies)
    for c0 in c0s:
        for params in strategies:
            cfg = EvalConfig(T, c0, bundle.stats.cpm_train, bundle.delta_max, params)
            m = run_eval(cfg, test, bundle)
            logger.info("%s %s c0=%g: clicks=%d cost=%d", campaign, params.variant, c0, m.clicks, m.cost)
            rows.append(metrics_row(campaign, params.variant, T, c0, m))
    return rows


def write_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def improvement_summary(rows: Iterable[dict], base: str = "lin", target: str = "rlb") -> list[dict]:
    """(clicks_target - clicks_base) / clicks_base per (campaign, T, c0), plus
    an ``average`` row per (T, c0)."""
    clicks: dict = {}
    for r in rows:
        key = (str(r["campaign"]), int(r["T"]), float(r["c0"]))
        clicks.setdefault(key, {})[r["strategy"]] = int(r["clicks"])
    out = []
    per_setting: dict = {}
    for (camp, T, c0), by in sorted(clicks.items()):
        if base not in by or target not in by:
            continue
        imp = (by[target] - by[base]) / by[base] if by[base] else float("nan")
        out.append({"campaign": camp, "T": T, "c0": c0, "base": base, "target": target,
                    "base_clicks": by[base], "target_clicks": by[target], "improvement": imp})
        per_setting.setdefault((T, c0), []).append(imp)
    for (T, c0), imps in sorted(per_setting.items()):
        finite = [x for x in imps if math.isfinite(x)]
        out.append({"campaign": "average", "T": T, "c0": c0, "base": base, "target": target,
                    "base_clicks": "", "target_clicks": "",
                    "improvement": sum(finite) / len(finite) if finite else float("nan")})
    return out
