import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlbid.approx import (
    ApproxConfig,
    NnModel,
    SegState,
    bid_nn,
    bid_nn_mapa,
    bid_nn_mapd,
    bid_nn_seg,
    exact_bidder,
    map_budget,
    map_deviation,
    mapd_query,
    max_map_deviation,
    nn_bidder,
    nn_diff,
    scan_bid,
    _threshold_bid,
    train_nn,
)
from rlbid.dp import BidDecisionInput, DiffTable, TerminalState, bid_rlb, diff_table


def const_net(value, t_scale=10.0, b_scale=10.0):
    """A network whose output is ``value`` everywhere."""
    return NnModel([np.zeros((1, 2))], [np.array([value])], t_scale, b_scale)


def fixture_221():
    W1 = np.array([[0.5, -1.0], [0.25, 0.75]])
    c1 = np.array([0.1, -0.2])
    W2 = np.array([[2.0, -1.0]])
    c2 = np.array([0.3])
    return NnModel([W1, W2], [c1, c2], t_scale=10.0, b_scale=20.0, y_scale=0.5)


def test_forward_pass_matches_hand_computation():
    net = fixture_221()
    h1 = math.tanh(0.5 * 0.5 - 1.0 * 0.5 + 0.1)
    h2 = math.tanh(0.25 * 0.5 + 0.75 * 0.5 - 0.2)
    assert net.raw(5, 10) == pytest.approx(0.5 * (2 * h1 - h2 + 0.3), abs=1e-15)


def test_inputs_are_normalised():
    net = fixture_221()
    x = net.raw(10, 20)  # (t_scale, b_scale) -> input (1, 1)
    h1, h2 = math.tanh(0.5 - 1.0 + 0.1), math.tanh(0.25 + 0.75 - 0.2)
    assert x == pytest.approx(0.5 * (2 * h1 - h2 + 0.3), abs=1e-15)


def test_output_clamped_at_zero():
    assert nn_diff(const_net(-0.3), 3, 4) == 0.0
    assert nn_diff(const_net(0.2), 3, 4) == pytest.approx(0.2)


def test_model_validation_and_io(tmp_path):
    net = fixture_221()
    net.train_rmse = 0.125
    net.save(tmp_path / "n.txt")
    back = NnModel.load(tmp_path / "n.txt")
    assert back.sizes == (2, 2, 1) and back.train_rmse == 0.125
    assert back.raw(3, 7) == net.raw(3, 7)
    with pytest.raises(ValueError):
        NnModel([np.zeros((1, 3))], [np.zeros(1)], 1.0, 1.0)


def test_bid_nn_examples():
    assert bid_nn(const_net(0.1), BidDecisionInput(5, 50, 0.0), 300) == 0
    assert bid_nn(const_net(0.0), BidDecisionInput(5, 50, 0.3), 300) == 50
    assert bid_nn(const_net(-1.0), BidDecisionInput(5, 500, 0.3), 300) == 300
    # theta = 0.35 covers three diffs of 0.1 but not four
    assert bid_nn(const_net(0.1), BidDecisionInput(5, 50, 0.35), 300) == 3
    with pytest.raises(TerminalState):
        bid_nn(const_net(0.1), BidDecisionInput(0, 50, 0.3), 300)


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), max_size=40), st.floats(0, 5))
def test_threshold_equals_exhaustive_scan(diffs, theta):
    d = np.array(diffs)
    assert _threshold_bid(theta, d) == scan_bid(theta, d)


def test_constant_target_is_fitted():
    c = 0.01
    d = DiffTable(np.full((31, 41), c))
    net = train_nn(d, ApproxConfig(30, 40, epochs=100))
    assert net.train_rmse < 1e-2 * c


def test_training_loss_never_increases(trained_nn):
    h = trained_nn["history"]
    assert len(h) == 60
    assert all(b <= a for a, b in zip(h, h[1:]))


def test_small_table_fit_quality(trained_nn, small_campaign):
    assert trained_nn["model"].train_rmse / small_campaign["stats"].theta_avg <= 5e-3


def test_train_nn_checks_coverage():
    with pytest.raises(ValueError):
        train_nn(DiffTable(np.zeros((5, 5))), ApproxConfig(10, 3))


def test_nn_bids_track_exact_bids(trained_nn, small_campaign):
    """Within 2 price units of exact RLB on at least 95% of random sub-grid states."""
    rng = np.random.default_rng(0)
    th = small_campaign["stats"].theta_avg
    table, model = trained_nn["table"], trained_nn["model"]
    n, close = 2000, 0
    for _ in range(n):
        inp = BidDecisionInput(int(rng.integers(1, trained_nn["T0"] + 1)), int(rng.integers(0, trained_nn["B0"] + 1)),
                               float(th * rng.lognormal(0, 1)))
        close += abs(bid_rlb(table, inp, 300) - bid_nn(model, inp, 300)) <= 2
    print(f"NN/exact bid agreement within 2 units: {close / n:.3f}")
    assert close / n >= 0.95


def test_map_budget_rounds_and_clamps():
    assert map_budget(20, 30, 10, None) == 15
    assert map_budget(4, 3, 2, None) == 2  # 1.5 rounds half up
    assert map_budget(20, 300, 10, 100) == 100


def test_mapd_query_scaling():
    tq, bq = mapd_query(np.array([20]), np.array([60]), 10, 30)
    assert (int(tq[0]), int(bq[0])) == (10, 30)
    tq, bq = mapd_query(np.array([7]), np.array([60]), 10, 30)
    assert (int(tq[0]), int(bq[0])) == (7, 60)


def test_mapd_identity_below_T0(trained_nn):
    m, T0 = trained_nn["model"], trained_nn["T0"]
    for t, b, th in [(1, 10, 0.002), (T0, 500, 0.004), (50, 3000, 0.01)]:
        inp = BidDecisionInput(t, b, th)
        assert bid_nn_mapd(m, inp, 300, T0, trained_nn["B0"]) == bid_nn(m, inp, 300)


def test_mapd_uses_mapped_queries():
    # a network that grows with t: mapped queries at T0 must see D(T0 - 1 ...) not D(2*T0 - 1 ...)
    net = NnModel([np.array([[1.0, 0.0]])], [np.array([0.0])], t_scale=100.0, b_scale=1.0)
    inp = BidDecisionInput(21, 40, 0.5)
    T0 = 10
    # t - 1 = 20 maps to T0 = 10, so every summed diff is 10 / 100 = 0.1
    assert bid_nn_mapd(net, inp, 300, T0) == 5
    assert bid_nn(net, inp, 300) == 2


def test_mapa_passthrough_and_scaling():
    calls = []

    def bidder(inp):
        calls.append((inp.t, inp.b))
        return 7

    assert bid_nn_mapa(bidder, BidDecisionInput(5, 40, 0.1), 300, 10, 100) == 7
    assert calls[-1] == (5, 40)
    bid_nn_mapa(bidder, BidDecisionInput(20, 200, 0.1), 300, 10, 100)
    assert calls[-1] == (10, 100)
    assert bid_nn_mapa(bidder, BidDecisionInput(20, 3, 0.1), 300, 10, 100) == 3  # clipped to budget


def test_mapa_monotone_in_budget(trained_nn):
    m, T0, B0 = trained_nn["model"], trained_nn["T0"], trained_nn["B0"]
    bidder = nn_bidder(m, 300)
    for th in (0.0005, 0.002, 0.01):
        bids = [bid_nn_mapa(bidder, BidDecisionInput(2 * T0, b, th), 300, T0, B0) for b in range(0, 2 * B0, 97)]
        assert all(y >= x for x, y in zip(bids, bids[1:]))


def test_exact_bidder_clamps_to_table(trained_nn):
    tab = trained_nn["table"]
    bid = exact_bidder(tab, 300)
    assert bid(BidDecisionInput(tab.T + 5, tab.B + 100, 0.003)) == bid_rlb(tab, BidDecisionInput(tab.T, tab.B, 0.003), 300)


def test_seg_single_segment_equals_bid_nn(trained_nn):
    m, T0 = trained_nn["model"], trained_nn["T0"]
    state = SegState(T0, 4000, T0)
    rng = np.random.default_rng(1)
    b = 4000
    for t in range(T0, 0, -1):
        inp = BidDecisionInput(t, b, 0.003 * rng.random())
        a = bid_nn_seg(state, m, inp, 300)
        assert a == bid_nn(m, inp, 300)
        b -= min(a, int(rng.integers(0, 120))) if a >= 60 else 0


def test_seg_second_allocation_is_full_remainder():
    state = SegState(T=8, B=100, T0=4)
    for t in range(8, 0, -1):
        state.small_state(t, 100)
    assert state.allocations == [50, 100]


def test_seg_three_segment_hand_trace():
    state = SegState(T=6, B=10, T0=2)
    trace = [(6, 10), (5, 8), (4, 8), (3, 8), (2, 8), (1, 5)]
    small = [state.small_state(t, b) for t, b in trace]
    assert small == [(2, 3), (1, 1), (2, 4), (1, 4), (2, 8), (1, 5)]
    assert state.allocations == [3, 4, 8]
    assert state.spent_before == [0, 2, 2]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 4), st.integers(0, 400), st.integers(0, 2**32 - 1), st.floats(0.0, 0.2))
def test_seg_conserves_budget(T0, n_seg, B, seed, level):
    T = T0 * n_seg + seed % T0
    rng = np.random.default_rng(seed)
    net = const_net(level * 0.01, t_scale=T0, b_scale=max(B, 1))
    state = SegState(T, B, T0)
    b = B
    for t in range(T, 0, -1):
        a = bid_nn_seg(state, net, BidDecisionInput(t, b, float(rng.uniform(0, 0.01))), 300)
        assert 0 <= a <= b
        price = int(rng.integers(0, 60))
        if a >= price:
            b -= price
        assert state.spent_before[-1] + state.allocations[-1] <= B
        # spending inside the current small episode stays within its allocation
        assert state.seg_start_budget - b <= state.allocations[-1]
    assert sum(1 for _ in state.allocations) == -(-T // T0)


def test_map_deviation_examples():
    d = DiffTable(np.array([[0.0, 0.0, 0.0, 0.0, 0.0],
                            [0.5, 0.4, 0.3, 0.2, 0.1],
                            [0.9, 0.7, 0.45, 0.25, 0.15]]))
    assert map_deviation(d, 1, 1, 3) == 0.0
    # (t=2, b=4) maps to (T0=1, round(4/2*1)=2): |0.15 - 0.3|
    assert map_deviation(d, 1, 2, 4) == pytest.approx(0.15)
    assert max_map_deviation(d, 1, [1, 2], [2, 4]) == pytest.approx(0.15)
    with pytest.raises(ValueError):
        map_deviation(d, 1, 3, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.integers(0, 3000), st.floats(0, 0.05), st.sampled_from(["nn", "seg", "mapd", "mapa"]))
def test_all_variants_respect_budget_and_cap(t, b, theta, which):
    net = fixture_221()
    inp = BidDecisionInput(t, b, theta)
    if which == "nn":
        a = bid_nn(net, inp, 300)
    elif which == "seg":
        a = bid_nn_seg(SegState(t, b, 20), net, inp, 300)
    elif which == "mapd":
        a = bid_nn_mapd(net, inp, 300, 20, 500)
    else:
        a = bid_nn_mapa(nn_bidder(net, 300), inp, 300, 20, 500)
    assert 0 <= a <= min(300, b)
