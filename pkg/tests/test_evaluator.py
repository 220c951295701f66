import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlbid.ctr import CtrModel
from rlbid.evaluator import (
    C0_GRID,
    CSV_COLUMNS,
    ContractBreach,
    EpisodeResult,
    EvalConfig,
    Metrics,
    ModelBundle,
    ReplayLog,
    episode_budget,
    improvement_summary,
    make_episodes,
    metrics_row,
    read_csv,
    replay,
    run_episode,
    run_eval,
    run_grid,
    write_csv,
)
from rlbid.logdata import LogRecord
from rlbid.strategies import VARIANTS, Lin, Strategy, StrategyParams


class Const(Strategy):
    name = "const"

    def __init__(self, a):
        self.a = a

    def bid(self, t, b, theta):
        return min(self.a, b)


class Scripted(Strategy):
    """Replays a fixed bid list and records the (t, b) it was shown."""

    name = "scripted"

    def __init__(self, bids):
        self.bids = list(bids)
        self.seen = []

    def reset(self, T, B):
        self.i = 0

    def bid(self, t, b, theta):
        self.seen.append((t, b))
        a = min(self.bids[self.i % len(self.bids)], b)
        self.i += 1
        return a


def logit(p):
    return math.log(p / (1 - p))


def test_episode_chunking():
    recs = list(range(2500))
    eps = make_episodes(recs, 1000)
    assert len(eps) == 2 and eps[1][0] == 1000 and eps[0] == list(range(1000))
    assert len(make_episodes(recs[:1000], 1000)) == 1
    with pytest.raises(ValueError):
        make_episodes(recs[:999], 1000)


def test_budget_formula():
    assert episode_budget(80.0, 1000, 1 / 32) == 2500
    assert episode_budget(77.7, 1000, 1 / 2) == 38850
    assert EvalConfig(1000, 1 / 16, 80.0, 300, StrategyParams("lin")).B == 5000
    for bad in (dict(T=0, c0=0.5), dict(T=10, c0=0.0), dict(T=10, c0=1.5)):
        with pytest.raises(ValueError):
            EvalConfig(cpm_train=1.0, delta_max=300, strategy=StrategyParams("lin"), **bad)


def test_always_max_wins_everything():
    prices = np.array([5, 300, 0, 17])
    clicks = np.array([1, 0, 1, 1])
    r = replay(Const(300), prices, clicks, np.zeros(4), int(prices.sum()))
    assert (r.wins, r.clicks, r.cost) == (4, 3, 322)


def test_always_zero_wins_nothing():
    r = replay(Const(0), np.array([3, 1, 9]), np.array([1, 1, 0]), np.zeros(3), 100)
    assert (r.wins, r.cost, r.clicks, r.bids) == (0, 0, 0, 3)


def test_t_counts_remaining_including_current():
    s = Scripted([10])
    replay(s, np.array([4, 4, 4]), np.zeros(3), np.zeros(3), 20)
    assert s.seen == [(3, 20), (2, 16), (1, 12)]


def test_lin_hand_trace():
    thetas = [0.001, 0.002, 0.0005, 0.003, 0.002]
    prices = [40, 120, 20, 130, 5]
    clicks = [0, 1, 1, 1, 0]
    ctr = CtrModel(np.array([logit(p) for p in thetas]), 0.0)
    episode = [LogRecord(c, p, (i,)) for i, (c, p) in enumerate(zip(clicks, prices))]
    # bids 50, 100, 25, 150, min(100, 10): win, lose, win, win, win
    r = run_episode(Lin(50, 0.001), episode, 200, ctr)
    assert (r.wins, r.cost, r.clicks) == (4, 195, 2)


def test_overbidding_strategy_is_caught():
    class Greedy(Strategy):
        name = "greedy"

        def bid(self, t, b, theta):
            return b + 1

    with pytest.raises(ContractBreach):
        replay(Greedy(), np.array([1]), np.array([0]), np.zeros(1), 5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 80), st.integers(0, 1)), min_size=1, max_size=40),
       st.integers(0, 500), st.lists(st.integers(0, 120), min_size=1, max_size=7))
def test_budget_never_exceeded(rows, B, bids):
    prices = np.array([p for p, _ in rows])
    clicks = np.array([c for _, c in rows])
    r = replay(Scripted(bids), prices, clicks, np.zeros(len(rows)), B)
    assert 0 <= r.cost <= B
    assert r.clicks <= r.wins <= r.bids == len(rows)


def test_metrics_aggregation():
    ep = EpisodeResult(clicks=2, wins=4, bids=10, cost=195, budget=200)
    m = Metrics()
    m.add(ep)
    assert (m.clicks, m.wins, m.bids, m.cost, m.episodes) == (2, 4, 10, 195, 1)
    assert m.win_rate == 0.4 and m.cpm == 195 / 4 and m.ecpc == 97.5
    assert math.isnan(Metrics().cpm) and math.isnan(Metrics().ecpc)


def test_csv_roundtrip(tmp_path):
    rows = [metrics_row("c", "lin", 1000, 0.125, Metrics(3, 5, 10, 50, 1))]
    write_csv(rows, tmp_path / "m.csv")
    text = (tmp_path / "m.csv").read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_csv(tmp_path / "m.csv")
    assert back[0]["clicks"] == "3" and back[0]["strategy"] == "lin"


def test_improvement_summary():
    rows = [
        {"campaign": "a", "strategy": "lin", "T": 1000, "c0": 0.125, "clicks": 100},
        {"campaign": "a", "strategy": "rlb", "T": 1000, "c0": 0.125, "clicks": 120},
        {"campaign": "b", "strategy": "lin", "T": 1000, "c0": 0.125, "clicks": 50},
        {"campaign": "b", "strategy": "rlb", "T": 1000, "c0": 0.125, "clicks": 45},
    ]
    out = improvement_summary(rows)
    by = {r["campaign"]: r["improvement"] for r in out}
    assert by["a"] == pytest.approx(0.2) and by["b"] == pytest.approx(-0.1)
    assert by["average"] == pytest.approx(0.05)


@pytest.fixture(scope="module")
def bundle(small_campaign, trained_nn):
    s = small_campaign
    train = ReplayLog.from_records(s["train"], s["ctr"])
    return ModelBundle(s["ctr"], s["landscape"], s["stats"], train, trained_nn["model"], trained_nn["table"])


@pytest.fixture(scope="module")
def test_log(small_campaign):
    return ReplayLog.from_records(small_campaign["test"], small_campaign["ctr"])


def test_single_episode_metrics_equal_episode_result(bundle, test_log, small_campaign):
    T = 500
    cfg = EvalConfig(T, 1 / 8, bundle.stats.cpm_train, 300, StrategyParams("lin", b0=40))
    one = ReplayLog(test_log.prices[:T], test_log.clicks[:T], test_log.thetas[:T])
    m = run_eval(cfg, one, bundle)
    ep = run_episode(Lin(40, bundle.stats.theta_avg), small_campaign["test"][:T], cfg.B, bundle.ctr)
    assert (m.clicks, m.wins, m.bids, m.cost, m.episodes) == (ep.clicks, ep.wins, ep.bids, ep.cost, 1)


@pytest.fixture(scope="module")
def grid_rows(bundle, test_log):
    return run_grid("syn", test_log, bundle, 500, [StrategyParams(v) for v in VARIANTS])


def test_grid_shape_invariants_and_determinism(bundle, test_log, grid_rows):
    T = 500
    rows = grid_rows
    assert len(rows) == 40
    for r in rows:
        B = episode_budget(bundle.stats.cpm_train, T, r["c0"])
        assert r["cost"] <= (len(test_log) // T) * B
        assert r["clicks"] <= r["wins"] <= r["bids"]
        assert 0 <= r["win_rate"] <= 1
    again = run_grid("syn", test_log, bundle, T, [StrategyParams(v) for v in ("lin", "rlb", "rlb_nn_seg")], [1 / 8])
    rows = [r for r in rows if r["strategy"] in ("lin", "rlb", "rlb_nn_seg") and r["c0"] == 1 / 8]
    assert rows == again or all(
        a == b or (isinstance(a, float) and math.isnan(a) and math.isnan(b))
        for r1, r2 in zip(rows, again) for a, b in zip(r1.values(), r2.values()))


def test_clicks_nondecreasing_in_budget(grid_rows):
    for variant in ("rlb", "lin"):
        clicks = [r["clicks"] for r in grid_rows if r["strategy"] == variant]
        assert clicks == sorted(clicks), (variant, clicks)


def test_click_oracle_dominates(bundle, test_log, grid_rows):
    """Buying the cheapest clicked requests is the most clicks any budget allows."""
    T = 500
    for c0 in C0_GRID:
        B = episode_budget(bundle.stats.cpm_train, T, c0)
        best = 0
        for e in range(len(test_log) // T):
            sl = slice(e * T, (e + 1) * T)
            p, y = test_log.prices[sl], test_log.clicks[sl]
            spend = 0
            for price in sorted(p[y == 1]):
                if spend + price > B:
                    break
                spend += price
                best += 1
        assert all(r["clicks"] <= best for r in grid_rows if r["c0"] == c0)


def test_value_table_cached_and_grown(bundle):
    fresh = ModelBundle(bundle.ctr, bundle.landscape, bundle.stats, bundle.train)
    a = fresh.value_table(10, 50)
    assert fresh.value_table(5, 20) is a
    b = fresh.value_table(12, 40)
    assert (b.T, b.B) == (12, 50)


def test_missing_pieces_are_reported(bundle):
    bare = ModelBundle(bundle.ctr, bundle.landscape, bundle.stats)
    with pytest.raises(ValueError):
        bare.lin_b0(100, 100)
    with pytest.raises(ValueError):
        bare.cpc()
    from rlbid.evaluator import build_strategy

    with pytest.raises(ValueError, match="network"):
        build_strategy(StrategyParams("rlb_nn"), bare, 100, 100)
