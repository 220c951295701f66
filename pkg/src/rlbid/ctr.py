"""Sparse logistic-regression CTR estimator.

Two trainers share one objective, the mean log-loss plus ``l2/2 * ||w||^2``:
plain SGD, and the per-coordinate FTRL-proximal update of McMahan et al.
(KDD 2013). Both make one sequential pass per epoch, so training is
deterministic for a fixed seed and record order.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .logdata import LogRecord, clicks


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class CtrModel:
    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise ValueError("non-finite model parameters")

    @property
    def dim(self) -> int:
        return self.weights.size

    @classmethod
    def zeros(cls, dim: int) -> "CtrModel":
        return cls(np.zeros(dim), 0.0)

    def save(self, path: str | Path) -> None:
        """Text layout: ``dim <d>``, ``bias <b>``, then ``<idx> <w>`` per non-zero weight."""
        lines = [f"dim {self.dim}\n", f"bias {self.bias!r}\n"]
        for i in np.flatnonzero(self.weights):
            lines.append(f"{i} {float(self.weights[i])!r}\n")
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CtrModel":
        with open(path, encoding="utf-8") as fh:
            key, dim = fh.readline().split()
            assert key == "dim"
            key, bias = fh.readline().split()
            assert key == "bias"
            w = np.zeros(int(dim))
            for line in fh:
                idx, val = line.split()
                w[int(idx)] = float(val)
        return cls(w, float(bias))


@dataclass
class CtrHyper:
    learning_rate: float = 0.05
    l2: float = 1e-6
    epochs: int = 3
    optimizer: str = "ftrl"
    # FTRL-only knobs
    ftrl_beta: float = 1.0
    l1: float = 0.0
    # keep negatives with this probability (1.0 = no down-sampling)
    neg_sample_rate: float = 1.0
    shuffle: bool = False
    seed: int = 0


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _logloss(p: float, y: int) -> float:
    p = min(max(p, 1e-15), 1 - 1e-15)
    return -math.log(p) if y else -math.log1p(-p)


def predict_ctr(model: CtrModel, features: Sequence[int]) -> float:
    w = model.weights
    z = model.bias
    for i in features:
        if i < 0 or i >= w.size:
            raise IndexError(f"feature index {i} out of range for dim {w.size}")
        z += w[i]
    return _sigmoid(float(z))


def predict_many(model: CtrModel, records: Sequence[LogRecord]) -> np.ndarray:
    """pCTR for each record, vectorised over a flattened index array."""
    n = len(records)
    lens = np.fromiter((len(r.features) for r in records), dtype=np.int64, count=n)
    flat = np.fromiter((i for r in records for i in r.features), dtype=np.int64, count=int(lens.sum()))
    if flat.size and (flat.min() < 0 or flat.max() >= model.dim):
        raise IndexError("feature index out of range")
    rows = np.repeat(np.arange(n), lens)
    z = np.full(n, model.bias)
    np.add.at(z, rows, model.weights[flat])
    return 1.0 / (1.0 + np.exp(-z))


def log_loss(model: CtrModel, records: Sequence[LogRecord], l2: float = 0.0) -> float:
    """Mean log-loss plus ``l2/2 * ||w||^2`` (bias unregularised)."""
    y = clicks(records)
    p = np.clip(predict_many(model, records), 1e-15, 1 - 1e-15)
    ll = -np.mean(y * np.log(p) + (1 - y) * np.log1p(-p))
    return float(ll + 0.5 * l2 * np.dot(model.weights, model.weights))


def log_loss_grad(model: CtrModel, records: Sequence[LogRecord], l2: float = 0.0) -> tuple[np.ndarray, float]:
    """Analytic gradient of :func:`log_loss` w.r.t. (weights, bias)."""
    y = clicks(records)
    resid = predict_many(model, records) - y
    gw = l2 * model.weights.copy()
    for r, e in zip(records, resid):
        gw[list(r.features)] += e / len(records)
    return gw, float(resid.mean())


def train_ctr(
    records: Sequence[LogRecord],
    dim: int,
    hyper: CtrHyper | None = None,
    history: list[float] | None = None,
) -> CtrModel:
    """Train on ``records``; per-epoch mean training loss is appended to ``history``."""
    hyper = hyper or CtrHyper()
    if hyper.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if hyper.optimizer not in ("sgd", "ftrl"):
        raise ValueError(f"unknown optimizer {hyper.optimizer!r}")
    for r in records:
        if r.features and r.features[-1] >= dim:
            raise ValueError(f"feature index {r.features[-1]} >= dim {dim}")

    rng = random.Random(hyper.seed)
    data = list(records)
    if hyper.neg_sample_rate < 1.0:
        data = [r for r in data if r.click or rng.random() < hyper.neg_sample_rate]

    step = _ftrl_trainer(dim, hyper) if hyper.optimizer == "ftrl" else _sgd_trainer(dim, hyper)
    for epoch in range(hyper.epochs):
        if hyper.shuffle:
            rng.shuffle(data)
        total = 0.0
        for r in data:
            total += step(r.features, r.click)
        mean = total / max(len(data), 1)
        if not math.isfinite(mean):
            raise TrainingDiverged(
                f"non-finite log-loss at epoch {epoch}; learning_rate={hyper.learning_rate} is likely too high"
            )
        if history is not None:
            history.append(mean)
    w, b = step.finish()
    if not (all(math.isfinite(x) for x in w) and math.isfinite(b)):
        raise TrainingDiverged("non-finite weights; lower the learning rate")
    return CtrModel(np.array(w), b)


class _sgd_trainer:
    """Sparse SGD; L2 shrink applied lazily to the active coordinates only."""

    def __init__(self, dim, hyper):
        self.w = [0.0] * dim
        self.b = 0.0
        self.lr = hyper.learning_rate
        self.l2 = hyper.l2

    def __call__(self, feats, y):
        w = self.w
        p = _sigmoid(self.b + sum(w[i] for i in feats))
        g = p - y
        lr, l2 = self.lr, self.l2
        for i in feats:
            w[i] -= lr * (g + l2 * w[i])
        self.b -= lr * g
        return _logloss(p, y)

    def finish(self):
        return self.w, self.b


class _ftrl_trainer:
    """FTRL-proximal with per-coordinate learning rates; bias is an unregularised coordinate."""

    def __init__(self, dim, hyper):
        self.z = [0.0] * (dim + 1)
        self.n = [0.0] * (dim + 1)
        self.bias_idx = dim
        self.alpha = hyper.learning_rate
        self.beta = hyper.ftrl_beta
        self.l1 = hyper.l1
        self.l2 = hyper.l2

    def _weight(self, i):
        z = self.z[i]
        if i == self.bias_idx:
            return -z / ((self.beta + math.sqrt(self.n[i])) / self.alpha)
        if abs(z) <= self.l1:
            return 0.0
        sign = 1.0 if z > 0 else -1.0
        return -(z - sign * self.l1) / ((self.beta + math.sqrt(self.n[i])) / self.alpha + self.l2)

    def __call__(self, feats, y):
        idx = list(feats)
        idx.append(self.bias_idx)
        ws = [self._weight(i) for i in idx]
        p = _sigmoid(sum(ws))
        g = p - y
        g2 = g * g
        z, n, alpha = self.z, self.n, self.alpha
        for i, w in zip(idx, ws):
            sigma = (math.sqrt(n[i] + g2) - math.sqrt(n[i])) / alpha
            z[i] += g - sigma * w
            n[i] += g2
        return _logloss(p, y)

    def finish(self):
        w = [self._weight(i) for i in range(self.bias_idx)]
        return w, self._weight(self.bias_idx)


def auc_scores(scores, labels) -> float:
    """Mann-Whitney AUC; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: need both positive and negative labels")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc(model: CtrModel, records: Sequence[LogRecord]) -> float:
    return auc_scores(predict_many(model, records), clicks(records))
