"""Impression logs in the canonical ``click price idx:1 idx:1 ...`` format.

Market prices are integer price-per-mille units (the iPinYou convention), so
the training CPM is simply the mean market price.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogRecord:
    click: int
    market_price: int
    features: tuple[int, ...]

    def __post_init__(self):
        if self.click not in (0, 1):
            raise ValueError(f"click must be 0 or 1, got {self.click}")
        if self.market_price < 0:
            raise ValueError(f"negative market price {self.market_price}")
        if any(a >= b for a, b in zip(self.features, self.features[1:])):
            raise ValueError("feature indices must be strictly increasing")
        if self.features and self.features[0] < 0:
            raise ValueError("negative feature index")


@dataclass
class SchemaConfig:
    """Parsing options. ``delta_max=None`` disables price clamping."""

    dim: int | None = None
    delta_max: int | None = None


@dataclass
class ParseResult:
    records: list[LogRecord] = field(default_factory=list)
    skipped: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class CampaignStats:
    cpm_train: float
    theta_avg: float
    n_records: int
    n_clicks: int
    max_price: int

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self.__dict__.items())

    @classmethod
    def from_text(cls, text: str) -> "CampaignStats":
        kv = read_kv(io.StringIO(text))
        return cls(
            cpm_train=float(kv["cpm_train"]),
            theta_avg=float(kv["theta_avg"]),
            n_records=int(kv["n_records"]),
            n_clicks=int(kv["n_clicks"]),
            max_price=int(kv["max_price"]),
        )


def parse_line(line: str, schema: SchemaConfig | None = None) -> LogRecord:
    """Parse one canonical line; raises ``ValueError`` on anything malformed."""
    parts = line.split()
    if len(parts) < 2:
        raise ValueError("expected at least click and market price")
    click = int(parts[0])
    price = int(parts[1])
    feats = []
    for tok in parts[2:]:
        idx, sep, val = tok.partition(":")
        if sep != ":" or val != "1":
            raise ValueError(f"bad feature token {tok!r}")
        feats.append(int(idx))
    uniq = sorted(set(feats))
    if len(uniq) != len(feats):
        raise ValueError("duplicate feature index")
    if schema is not None:
        if schema.dim is not None and uniq and uniq[-1] >= schema.dim:
            raise ValueError(f"feature index {uniq[-1]} >= dim {schema.dim}")
        if schema.delta_max is not None and price > schema.delta_max:
            price = schema.delta_max
    return LogRecord(click, price, tuple(uniq))


def parse_log(stream: IO[str] | IO[bytes] | Iterable[str], schema: SchemaConfig | None = None) -> ParseResult:
    """Parse a line stream; malformed lines are skipped and counted."""
    out = ParseResult()
    for lineno, line in enumerate(stream, 1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        try:
            out.records.append(parse_line(line, schema))
        except ValueError as exc:
            out.skipped += 1
            logger.debug("line %d skipped: %s", lineno, exc)
    if out.skipped:
        logger.info("skipped %d malformed lines", out.skipped)
    return out


def read_log(path: str | Path, schema: SchemaConfig | None = None) -> ParseResult:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_log(fh, schema)


def format_record(rec: LogRecord) -> str:
    feats = " ".join(f"{i}:1" for i in rec.features)
    return f"{rec.click} {rec.market_price} {feats}".rstrip() + "\n"


def write_log(records: Iterable[LogRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(format_record(rec))


def read_kv(stream: IO[str]) -> dict[str, str]:
    """Flat ``key=value`` config; ``#`` starts a comment."""
    out = {}
    for line in stream:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {line!r}")
        out[key.strip()] = val.strip()
    return out


def prices(records: Sequence[LogRecord]) -> np.ndarray:
    return np.fromiter((r.market_price for r in records), dtype=np.int64, count=len(records))


def clicks(records: Sequence[LogRecord]) -> np.ndarray:
    return np.fromiter((r.click for r in records), dtype=np.int64, count=len(records))


def campaign_stats(records: Sequence[LogRecord], ctr) -> CampaignStats:
    """Training CPM, mean pCTR and counts. ``ctr`` is a trained CtrModel."""
    if len(records) == 0:
        raise ValueError("no training data")
    from .ctr import predict_many

    p = prices(records)
    theta = predict_many(ctr, records)
    return CampaignStats(
        cpm_train=float(p.mean()),
        theta_avg=math.fsum(theta) / len(theta),  # fsum: order-independent
        n_records=len(records),
        n_clicks=int(clicks(records).sum()),
        max_price=int(p.max()),
    )
