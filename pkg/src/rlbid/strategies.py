"""Bidding strategies behind one interface, plus the baseline bid rules.

A strategy sees ``(t, b, theta)`` for each request: auctions left in the
episode (current one included), budget left, and the request's pCTR. It must
return an integer bid in ``[0, b]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import approx
from .approx import NnModel, SegState
from .dp import BidDecisionInput, ValueTable, bid_rlb

VARIANTS = ("ssmdp", "mcpc", "lin", "rlb", "rlb_nn", "rlb_nn_seg", "rlb_nn_mapd", "rlb_nn_mapa")
DEFAULT_LIN_GRID = tuple(range(2, 301, 2))


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


def bid_lin(b0: int, theta: float, theta_avg: float, b: int) -> int:
    if theta_avg <= 0:
        raise ValueError("theta_avg must be positive")
    if b0 < 0:
        raise ValueError("b0 must be non-negative")
    return max(0, min(_round(b0 * theta / theta_avg), b))


def bid_mcpc(cpc: float, theta: float, b: int) -> int:
    if cpc < 0:
        raise ValueError("cpc must be non-negative")
    return max(0, min(_round(cpc * theta), b))


def bid_ssmdp(v: ValueTable, theta_avg: float, t: int, b: int, delta_max: int) -> int:
    """RLB with every request's pCTR replaced by the campaign average."""
    return bid_rlb(v, BidDecisionInput(t, b, theta_avg), delta_max)


def training_ecpc(prices: np.ndarray, clicks: np.ndarray) -> float:
    """Historic cost per click of the training log (all impressions bought)."""
    n_clicks = int(np.sum(clicks))
    if n_clicks == 0:
        raise ValueError("training log has no clicks; eCPC undefined")
    return float(np.sum(prices)) / n_clicks


def replay_static(bids: np.ndarray, prices: np.ndarray, clicks: np.ndarray, T: int, B: int) -> np.ndarray:
    """Clicks won by several budget-blind bid vectors under the episode protocol.

    ``bids`` has shape (C, N): one row of per-request bids per candidate.
    Requests are cut into episodes of T (tail dropped) and each bid is capped
    at the remaining budget. Returns total clicks per candidate.
    """
    bids = np.atleast_2d(bids)
    E = prices.size // T
    if E == 0:
        raise ValueError("no full episode")
    n = E * T
    P = prices[:n].reshape(E, T)
    Y = clicks[:n].reshape(E, T)
    A = bids[:, :n].reshape(bids.shape[0], E, T)
    budget = np.full((bids.shape[0], E), B, dtype=np.int64)
    won = np.zeros((bids.shape[0], E), dtype=np.int64)
    for i in range(T):
        win = np.minimum(A[:, :, i], budget) >= P[:, i]
        budget -= win * P[:, i]
        won += win * Y[:, i]
    return won.sum(axis=1)


def tune_lin_b0(
    thetas: np.ndarray,
    prices: np.ndarray,
    clicks: np.ndarray,
    theta_avg: float,
    T: int,
    B: int,
    candidates: Sequence[int] = DEFAULT_LIN_GRID,
) -> int:
    """Pick the b0 that wins the most training clicks; ties go to the smaller b0."""
    cands = sorted(set(int(c) for c in candidates))
    if not cands:
        raise ValueError("empty b0 candidate grid")
    ratio = np.asarray(thetas, dtype=np.float64) / theta_avg
    bids = np.floor(np.asarray(cands, dtype=np.float64)[:, None] * ratio[None, :] + 0.5).astype(np.int64)
    won = replay_static(bids, np.asarray(prices), np.asarray(clicks), T, B)
    return cands[int(np.argmax(won))]


class Strategy:
    name = "base"

    def reset(self, T: int, B: int) -> None:
        """Called at the start of every episode."""

    def bid(self, t: int, b: int, theta: float) -> int:
        raise NotImplementedError


@dataclass
class Lin(Strategy):
    b0: int
    theta_avg: float
    name = "lin"

    def bid(self, t, b, theta):
        return bid_lin(self.b0, theta, self.theta_avg, b)


@dataclass
class Mcpc(Strategy):
    cpc: float
    name = "mcpc"

    def bid(self, t, b, theta):
        return bid_mcpc(self.cpc, theta, b)


@dataclass
class Rlb(Strategy):
    table: ValueTable
    delta_max: int
    name = "rlb"

    def bid(self, t, b, theta):
        return bid_rlb(self.table, BidDecisionInput(t, b, theta), self.delta_max)


@dataclass
class SsMdp(Strategy):
    table: ValueTable
    theta_avg: float
    delta_max: int
    name = "ssmdp"

    def bid(self, t, b, theta):
        return bid_ssmdp(self.table, self.theta_avg, t, b, self.delta_max)


@dataclass
class RlbNn(Strategy):
    model: NnModel
    delta_max: int
    name = "rlb_nn"

    def bid(self, t, b, theta):
        return approx.bid_nn(self.model, BidDecisionInput(t, b, theta), self.delta_max)


@dataclass
class RlbNnSeg(Strategy):
    model: NnModel
    delta_max: int
    T0: int
    state: SegState | None = field(default=None, repr=False)
    name = "rlb_nn_seg"

    def reset(self, T, B):
        self.state = SegState(T, B, self.T0)

    def bid(self, t, b, theta):
        return approx.bid_nn_seg(self.state, self.model, BidDecisionInput(t, b, theta), self.delta_max)


@dataclass
class RlbNnMapD(Strategy):
    model: NnModel
    delta_max: int
    T0: int
    B0: int | None = None
    name = "rlb_nn_mapd"

    def bid(self, t, b, theta):
        return approx.bid_nn_mapd(self.model, BidDecisionInput(t, b, theta), self.delta_max, self.T0, self.B0)


@dataclass
class RlbNnMapA(Strategy):
    """Bid as the delegate would at (T0, b/t*T0); the delegate is RLB-NN
    unless an exact sub-grid table is supplied."""

    model: NnModel | None
    delta_max: int
    T0: int
    B0: int | None = None
    table: ValueTable | None = None
    name = "rlb_nn_mapa"

    def __post_init__(self):
        if self.table is not None:
            self._delegate = approx.exact_bidder(self.table, self.delta_max)
        elif self.model is not None:
            self._delegate = approx.nn_bidder(self.model, self.delta_max)
        else:
            raise ValueError("MapA needs a network or an exact table")

    def bid(self, t, b, theta):
        return approx.bid_nn_mapa(self._delegate, BidDecisionInput(t, b, theta), self.delta_max, self.T0, self.B0)


@dataclass
class StrategyParams:
    """Variant tag plus whatever that variant needs.

    lin: b0 (tuned when None); mcpc: cpc (training eCPC when None);
    NN variants: T0, B0 of the sub-grid the network was fitted on;
    rlb_nn_mapa: mapa_delegate in {"nn", "exact"}.
    """

    variant: str
    b0: int | None = None
    cpc: float | None = None
    T0: int | None = None
    B0: int | None = None
    mapa_delegate: str = "nn"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown strategy {self.variant!r}; choose from {VARIANTS}")
