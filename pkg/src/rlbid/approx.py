"""Neural approximation of the value differential D(t, b) for long episodes.

A small tanh network NN(t, b) is fitted to D on a solvable sub-grid
{0..T0} x {0..B0}. Bids then come from the prefix-sum form of g:

    g(d) = theta - sum_{k=1..d} D(t-1, b-k)

Three ways to leave the sub-grid are provided: episode segmentation (Seg),
mapping D queries to (T0, b/t*T0) (MapD), and mapping whole bid decisions to
(T0, b/t*T0) (MapA).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dp import BidDecisionInput, DiffTable, TerminalState, ValueTable, bid_rlb

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (2, 30, 15, 1)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(eq=False)
class NnModel:
    """Feed-forward net, tanh hidden layers, linear output.

    Inputs are ``(t / t_scale, b / b_scale)``; the raw output is multiplied by
    ``y_scale`` to give D in value units.
    """

    weights: list[np.ndarray]  # layer i: shape (sizes[i+1], sizes[i])
    biases: list[np.ndarray]
    t_scale: float
    b_scale: float
    y_scale: float = 1.0
    train_rmse: float = float("nan")

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("one bias vector per weight matrix")
        for i, (W, c) in enumerate(zip(self.weights, self.biases)):
            if c.shape != (W.shape[0],):
                raise ValueError(f"layer {i}: bias shape {c.shape} != ({W.shape[0]},)")
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input width mismatch")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(c))):
                raise ValueError("non-finite parameters")
        if self.weights[0].shape[1] != 2 or self.weights[-1].shape[0] != 1:
            raise ValueError("network must map 2 inputs to 1 output")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    @classmethod
    def init(cls, sizes=DEFAULT_SIZES, t_scale=1.0, b_scale=1.0, y_scale=1.0, seed=0) -> "NnModel":
        rng = np.random.default_rng(seed)
        Ws, cs = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            lim = math.sqrt(6.0 / (n_in + n_out))
            Ws.append(rng.uniform(-lim, lim, size=(n_out, n_in)))
            cs.append(np.zeros(n_out))
        return cls(Ws, cs, float(t_scale), float(b_scale), float(y_scale))

    def raw(self, t, b) -> np.ndarray:
        """Unclamped network output in D units, vectorised over t and b."""
        t, b = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(b, dtype=np.float64))
        h = np.stack([t.ravel() / self.t_scale, b.ravel() / self.b_scale])
        last = len(self.weights) - 1
        for i, (W, c) in enumerate(zip(self.weights, self.biases)):
            h = W @ h + c[:, None]
            if i < last:
                h = np.tanh(h)
        return (h[0] * self.y_scale).reshape(t.shape)

    def save(self, path) -> None:
        """Text: sizes, scales, then each layer's row-major weights and biases."""
        out = [" ".join(map(str, self.sizes)),
               f"{self.t_scale!r} {self.b_scale!r} {self.y_scale!r} {self.train_rmse!r}"]
        for W, c in zip(self.weights, self.biases):
            out.append(" ".join(repr(float(x)) for x in W.ravel()))
            out.append(" ".join(repr(float(x)) for x in c))
        Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NnModel":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        sizes = [int(x) for x in lines[0].split()]
        t_scale, b_scale, y_scale, rmse = (float(x) for x in lines[1].split())
        Ws, cs = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            Ws.append(np.array([float(x) for x in lines[2 + 2 * i].split()]).reshape(n_out, n_in))
            cs.append(np.array([float(x) for x in lines[3 + 2 * i].split()]))
        return cls(Ws, cs, t_scale, b_scale, y_scale, rmse)


@dataclass
class ApproxConfig:
    T0: int
    B0: int
    sizes: tuple[int, ...] = DEFAULT_SIZES
    learning_rate: float = 3e-3
    epochs: int = 200
    batch_size: int = 256
    # grids larger than this are trained on a seeded uniform sample of cells
    max_cells: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if self.T0 < 1 or self.B0 < 1:
            raise ValueError("T0 and B0 must be >= 1")


def _forward(model: NnModel, X: np.ndarray):
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for i, (W, c) in enumerate(zip(model.weights, model.biases)):
        h = W @ h + c[:, None]
        if i < last:
            h = np.tanh(h)
        acts.append(h)
    return acts


def _backward(model: NnModel, acts, y: np.ndarray):
    """Gradients of 0.5 * mean((out - y)^2) w.r.t. every weight and bias."""
    n = y.size
    delta = (acts[-1][0] - y)[None, :] / n
    gW = [None] * len(model.weights)
    gc = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gW[i] = delta @ acts[i].T
        gc[i] = delta.sum(axis=1)
        if i:
            delta = (model.weights[i].T @ delta) * (1.0 - acts[i] ** 2)
    return gW, gc


def _mse(model: NnModel, X, y) -> float:
    out = _forward(model, X)[-1][0]
    return float(np.mean((out - y) ** 2))


def _training_cells(cfg: ApproxConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    n_cells = (cfg.T0 + 1) * (cfg.B0 + 1)
    if n_cells <= cfg.max_cells:
        tt, bb = np.meshgrid(np.arange(cfg.T0 + 1), np.arange(cfg.B0 + 1), indexing="ij")
        return tt.ravel(), bb.ravel()
    flat = rng.choice(n_cells, size=cfg.max_cells, replace=False)
    return np.divmod(flat, cfg.B0 + 1)


def train_nn(d: DiffTable, cfg: ApproxConfig, history: list[float] | None = None) -> NnModel:
    """Fit NN(t, b) to D(t, b) over {0..T0} x {0..B0} by mini-batch Adam.

    After each epoch the training MSE is recomputed; an epoch that raises it
    is rolled back, Adam's moment estimates are reset and the step size is
    halved, so ``history`` never goes up.
    Targets are divided by their largest magnitude before fitting. The
    reported ``train_rmse`` is measured on every cell of the grid.
    """
    if d.t_max < cfg.T0 or d.diffs.shape[1] < cfg.B0 + 1:
        raise ValueError(f"diff table {d.diffs.shape} does not cover T0={cfg.T0}, B0={cfg.B0}")
    rng = np.random.default_rng(cfg.seed)
    grid = d.diffs[: cfg.T0 + 1, : cfg.B0 + 1]
    y_scale = float(np.abs(grid).max()) or 1.0
    ti, bi = _training_cells(cfg, rng)
    X = np.stack([ti / cfg.T0, bi / cfg.B0])
    y = grid[ti, bi] / y_scale

    model = NnModel.init(cfg.sizes, cfg.T0, cfg.B0, y_scale, seed=cfg.seed)
    params = model.weights + model.biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = cfg.learning_rate
    step = 0
    loss = _mse(model, X, y)
    n = y.size
    for epoch in range(cfg.epochs):
        saved = [p.copy() for p in params]
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            gW, gc = _backward(model, _forward(model, X[:, idx]), y[idx])
            step += 1
            corr1 = 1 - beta1**step
            corr2 = 1 - beta2**step
            for p, g, a, v in zip(params, gW + gc, m1, m2):
                a *= beta1
                a += (1 - beta1) * g
                v *= beta2
                v += (1 - beta2) * g * g
                p -= lr * (a / corr1) / (np.sqrt(v / corr2) + eps)
        new_loss = _mse(model, X, y)
        if not math.isfinite(new_loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}; lower the learning rate")
        if new_loss > loss:
            # restore the weights and restart Adam: keeping the old moments would
            # replay the same overshooting direction at every smaller step size
            for p, s in zip(params, saved):
                p[...] = s
            for a in m1 + m2:
                a[...] = 0.0
            step = 0
            lr *= 0.5
        else:
            loss = new_loss
        if history is not None:
            history.append(loss * y_scale**2)
    model.train_rmse = grid_rmse(model, d, cfg.T0, cfg.B0)
    logger.info("NN fit on %dx%d grid: rmse=%.3g (final lr %.2g)", cfg.T0 + 1, cfg.B0 + 1, model.train_rmse, lr)
    return model


def grid_rmse(model: NnModel, d: DiffTable, T0: int, B0: int, chunk: int = 2_000_000) -> float:
    """RMSE of the raw network against D over every cell of {0..T0} x {0..B0}."""
    grid = d.diffs[: T0 + 1, : B0 + 1]
    rows = max(1, chunk // (B0 + 1))
    sq = 0.0
    bb = np.arange(B0 + 1)
    for t0 in range(0, T0 + 1, rows):
        ts = np.arange(t0, min(t0 + rows, T0 + 1))
        pred = model.raw(ts[:, None], bb[None, :])
        sq += float(((pred - grid[ts]) ** 2).sum())
    return math.sqrt(sq / grid.size)


def nn_diff(model: NnModel, t, b):
    """NN(t, b) clamped at zero; accepts scalars or arrays."""
    out = np.maximum(model.raw(t, b), 0.0)
    return float(out) if out.ndim == 0 else out


def _threshold_bid(theta: float, diffs: np.ndarray) -> int:
    """Largest d with theta - sum(diffs[:d]) >= 0, stopping at the first violation.

    ``diffs[k]`` is D(t-1, b-k-1); non-negative entries keep the prefix sum
    nondecreasing so the first violation ends the search.
    """
    csum = np.cumsum(diffs)
    bad = np.flatnonzero(theta - csum < 0)
    return int(bad[0]) if bad.size else int(diffs.size)


def scan_bid(theta: float, diffs: np.ndarray) -> int:
    """Exhaustive version of :func:`_threshold_bid`: last d whose g-proxy is >= 0."""
    g = theta - np.concatenate([[0.0], np.cumsum(diffs)])
    return int(np.flatnonzero(g >= 0)[-1]) if theta >= 0 else 0


def round_half_up(num: int, den: int) -> int:
    return (2 * num + den) // (2 * den)


def map_budget(t: int, b: int, T0: int, B0: int | None) -> int:
    """b/t * T0 rounded to the nearest integer, clamped to B0 when given."""
    mb = round_half_up(b * T0, t)
    return min(mb, B0) if B0 is not None else mb


def bid_nn(model: NnModel, inp: BidDecisionInput, delta_max: int) -> int:
    if inp.t < 1:
        raise TerminalState("terminal state: no auctions left")
    n = min(delta_max, inp.b)
    if n <= 0:
        return 0
    bs = inp.b - np.arange(1, n + 1)
    return _threshold_bid(inp.theta, nn_diff(model, np.full(n, inp.t - 1), bs))


def mapd_query(t, b, T0: int, B0: int | None):
    """Where MapD evaluates D(t, b): itself for t <= T0, else (T0, b/t*T0)."""
    t = np.asarray(t)
    b = np.asarray(b)
    tq = np.where(t > T0, T0, t)
    mb = (2 * b * T0 + np.maximum(t, 1)) // (2 * np.maximum(t, 1))
    if B0 is not None:
        mb = np.minimum(mb, B0)
    bq = np.where(t > T0, mb, b)
    return tq, bq


def bid_nn_mapd(model: NnModel, inp: BidDecisionInput, delta_max: int, T0: int, B0: int | None = None) -> int:
    if inp.t < 1:
        raise TerminalState("terminal state: no auctions left")
    n = min(delta_max, inp.b)
    if n <= 0:
        return 0
    bs = inp.b - np.arange(1, n + 1)
    tq, bq = mapd_query(np.full(n, inp.t - 1), bs, T0, B0)
    return _threshold_bid(inp.theta, nn_diff(model, tq, bq))


def bid_nn_mapa(
    bidder: Callable[[BidDecisionInput], int],
    inp: BidDecisionInput,
    delta_max: int,
    T0: int,
    B0: int | None = None,
) -> int:
    """a(t, b, x) := a(T0, b/t*T0, x) for t > T0; passthrough otherwise."""
    if inp.t < 1:
        raise TerminalState("terminal state: no auctions left")
    if inp.t <= T0:
        bid = bidder(inp)
    else:
        bid = bidder(BidDecisionInput(T0, map_budget(inp.t, inp.b, T0, B0), inp.theta))
    return max(0, min(bid, delta_max, inp.b))


def exact_bidder(v: ValueTable, delta_max: int) -> Callable[[BidDecisionInput], int]:
    """RLB on a solved sub-grid table; budgets beyond the table are clamped to it."""
    def bid(inp: BidDecisionInput) -> int:
        return bid_rlb(v, BidDecisionInput(min(inp.t, v.T), min(inp.b, v.B), inp.theta), delta_max)
    return bid


def nn_bidder(model: NnModel, delta_max: int) -> Callable[[BidDecisionInput], int]:
    return lambda inp: bid_nn(model, inp, delta_max)


@dataclass
class SegState:
    """Bookkeeping for one large episode split into small episodes of length T0."""

    T: int
    B: int
    T0: int
    alloc: int = 0
    seg_start_budget: int = 0
    allocations: list[int] = field(default_factory=list)
    spent_before: list[int] = field(default_factory=list)

    def small_state(self, t: int, b: int) -> tuple[int, int]:
        """Advance bookkeeping for the request at remaining count ``t`` and
        return (auctions left, budget left) inside the current small episode."""
        i = self.T - t
        if i % self.T0 == 0:
            n_left = -(-t // self.T0)
            self.alloc = b // n_left
            self.seg_start_budget = b
            self.allocations.append(self.alloc)
            self.spent_before.append(self.B - b)
        seg_end = min((i // self.T0 + 1) * self.T0, self.T)
        spent = self.seg_start_budget - b
        return seg_end - i, self.alloc - spent


def bid_nn_seg(state: SegState, model: NnModel, inp: BidDecisionInput, delta_max: int, T0: int | None = None) -> int:
    """RLB-NN inside small episodes with budget B_r / N_r re-allocated at each boundary."""
    if T0 is not None and T0 != state.T0:
        raise ValueError("T0 disagrees with the segmentation state")
    t_s, b_s = state.small_state(inp.t, inp.b)
    return bid_nn(model, BidDecisionInput(t_s, max(b_s, 0), inp.theta), delta_max)


def map_deviation(d: DiffTable, T0: int, t: int, b: int) -> float:
    """|D(t, b) - D(T0, b/t*T0)|, both read from an exactly solved table."""
    if t < 1:
        raise ValueError("t must be >= 1")
    mb = map_budget(t, b, T0, None)
    for tq, bq in ((t, b), (T0, mb)):
        if not (0 <= tq <= d.t_max and 0 <= bq <= d.b_max):
            raise ValueError(f"state ({tq}, {bq}) outside the solved grid ({d.t_max}, {d.b_max})")
    return float(abs(d.diffs[t, b] - d.diffs[T0, mb]))


def max_map_deviation(d: DiffTable, T0: int, ts: Sequence[int], bs: Sequence[int]) -> float:
    """Largest Dev(t, T0, b) over the sampled states that stay inside the grid."""
    worst = 0.0
    for t in ts:
        for b in bs:
            if map_budget(t, b, T0, None) <= d.b_max and b <= d.b_max:
                worst = max(worst, map_deviation(d, T0, t, b))
    return worst
