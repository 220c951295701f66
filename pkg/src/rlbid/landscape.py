"""Non-parametric market price distribution m(delta) over integer prices."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .logdata import LogRecord, prices

DEFAULT_DELTA_MAX = 300


@dataclass(frozen=True, eq=False)
class LandscapeModel:
    pdf: np.ndarray

    def __post_init__(self):
        pdf = np.array(self.pdf, dtype=np.float64)
        if pdf.ndim != 1 or pdf.size < 2:
            raise ValueError("pdf needs at least two prices (delta_max >= 1)")
        if np.any(pdf < 0) or abs(pdf.sum() - 1.0) > 1e-9:
            raise ValueError("pdf must be non-negative and sum to 1")
        pdf.setflags(write=False)
        object.__setattr__(self, "pdf", pdf)
        cdf = np.minimum(np.cumsum(pdf), 1.0)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def delta_max(self) -> int:
        return self.pdf.size - 1

    def win_prob(self, bid: int) -> float:
        if bid < 0:
            raise ValueError("bid must be non-negative")
        return float(self._cdf[min(bid, self.delta_max)])

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def save(self, path: str | Path) -> None:
        """First line ``delta_max``, then one probability per line."""
        body = "".join(f"{p!r}\n" for p in self.pdf.tolist())
        Path(path).write_text(f"{self.delta_max}\n{body}", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LandscapeModel":
        lines = Path(path).read_text(encoding="utf-8").split()
        dmax = int(lines[0])
        pdf = np.array([float(x) for x in lines[1:]])
        if pdf.size != dmax + 1:
            raise ValueError(f"expected {dmax + 1} probabilities, found {pdf.size}")
        return cls(pdf)


def fit_landscape_prices(market_prices, delta_max: int = DEFAULT_DELTA_MAX, laplace: float = 1.0) -> LandscapeModel:
    if delta_max < 1:
        raise ValueError("delta_max must be >= 1")
    if laplace < 0:
        raise ValueError("laplace must be >= 0")
    p = np.minimum(np.asarray(market_prices, dtype=np.int64), delta_max)
    if p.size == 0:
        raise ValueError("no market prices to fit")
    if p.min() < 0:
        raise ValueError("negative market price")
    counts = np.bincount(p, minlength=delta_max + 1).astype(np.float64)
    pdf = (counts + laplace) / (p.size + laplace * (delta_max + 1))
    return LandscapeModel(pdf)


def fit_landscape(records: Sequence[LogRecord], delta_max: int = DEFAULT_DELTA_MAX, laplace: float = 1.0) -> LandscapeModel:
    """Histogram of market prices, clamped at ``delta_max``, with additive smoothing."""
    return fit_landscape_prices(prices(records), delta_max, laplace)


def win_prob(model: LandscapeModel, bid: int) -> float:
    return model.win_prob(bid)
