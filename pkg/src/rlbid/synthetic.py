"""Synthetic impression logs with iPinYou-like shape.

Requests are one-hot over a handful of categorical fields. Clicks follow a
ground-truth logistic model; market prices are log-normal, optionally tilted
toward higher prices for higher-CTR requests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .logdata import LogRecord


@dataclass
class SyntheticConfig:
    field_sizes: tuple[int, ...] = (3, 7, 24, 5, 40, 120, 30, 10)
    field_scale: float = 0.6  # std-dev of per-category logit effects
    mean_ctr: float = 2e-3
    price_median: float = 60.0
    price_sigma: float = 0.7
    price_ctr_corr: float = 0.2  # log-price shift per unit of standardised logit
    price_cap: int = 300
    zipf_a: float = 1.3
    seed: int = 0

    @property
    def dim(self) -> int:
        return int(sum(self.field_sizes))


class SyntheticCampaign:
    def __init__(self, cfg: SyntheticConfig | None = None):
        self.cfg = cfg = cfg or SyntheticConfig()
        rng = np.random.default_rng(cfg.seed)
        self.offsets = np.concatenate([[0], np.cumsum(cfg.field_sizes)[:-1]])
        self.effects = rng.normal(0.0, cfg.field_scale, size=cfg.dim)
        self.popularity = []
        for n in cfg.field_sizes:
            w = 1.0 / np.arange(1, n + 1) ** cfg.zipf_a
            self.popularity.append(w / w.sum())
        # calibrate the intercept so the population CTR is close to mean_ctr
        feats = self._sample_features(rng, 50_000)
        z = self.effects[feats].sum(axis=1)
        self.z_mean, self.z_std = float(z.mean()), float(z.std()) or 1.0
        lo, hi = -20.0, 5.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.mean(1 / (1 + np.exp(-(mid + z)))) < cfg.mean_ctr:
                lo = mid
            else:
                hi = mid
        self.intercept = 0.5 * (lo + hi)

    def _sample_features(self, rng, n: int) -> np.ndarray:
        cols = [off + rng.choice(len(p), size=n, p=p) for off, p in zip(self.offsets, self.popularity)]
        return np.stack(cols, axis=1)

    def true_ctr(self, feats: np.ndarray) -> np.ndarray:
        return 1 / (1 + np.exp(-(self.intercept + self.effects[feats].sum(axis=1))))

    def sample(self, n: int, seed: int) -> list[LogRecord]:
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        feats = self._sample_features(rng, n)
        z = self.effects[feats].sum(axis=1)
        ctr = 1 / (1 + np.exp(-(self.intercept + z)))
        click = (rng.random(n) < ctr).astype(int)
        zs = (z - self.z_mean) / self.z_std
        logp = np.log(cfg.price_median) + cfg.price_ctr_corr * zs + rng.normal(0, cfg.price_sigma, n)
        price = np.clip(np.round(np.exp(logp)), 0, cfg.price_cap).astype(int)
        return [
            LogRecord(int(c), int(p), tuple(int(i) for i in row))
            for c, p, row in zip(click, price, feats)
        ]


def make_split(n_train: int, n_test: int, cfg: SyntheticConfig | None = None):
    """Train/test logs from one campaign; returns (train, test, dim)."""
    camp = SyntheticCampaign(cfg)
    seed = camp.cfg.seed
    return camp.sample(n_train, seed + 1), camp.sample(n_test, seed + 2), camp.cfg.dim
