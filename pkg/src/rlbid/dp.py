"""Budget-constrained bidding MDP: value table solve, optimal bid, exact oracle.

State is (t, b): auctions left and integer budget left. With a feature-blind
reward ``theta_avg`` the value recursion is

    V(t, b) = V(t-1, b) + max_a sum_{d<=a} m(d) * g(d),
    g(d)    = theta + V(t-1, b-d) - V(t-1, b),

with ``a`` ranging over 0..min(delta_max, b). Because V(t-1, .) is
nondecreasing, g is nonincreasing and the best ``a`` is the last index where
g is still non-negative.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .landscape import LandscapeModel

DEFAULT_MEMORY_CAP = 2 * 1024**3  # bytes
_MAGIC = {"V": b"RLBV", "D": b"RLBD"}


class MemoryPlanError(MemoryError):
    pass


class TerminalState(ValueError):
    pass


def _save_grid(path, kind: str, grid: np.ndarray, T: int, B: int) -> None:
    data = np.ascontiguousarray(grid, dtype="<f8").tobytes()
    header = _MAGIC[kind] + struct.pack("<qqI", T, B, zlib.crc32(data))
    Path(path).write_bytes(header + data)


def _load_grid(path, kind: str, shape_fn) -> tuple[np.ndarray, int, int]:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC[kind]:
        raise ValueError(f"{path}: not a {kind}-table file")
    T, B, crc = struct.unpack_from("<qqI", raw, 4)
    data = raw[4 + struct.calcsize("<qqI"):]
    if zlib.crc32(data) != crc:
        raise ValueError(f"{path}: checksum mismatch")
    grid = np.frombuffer(data, dtype="<f8").reshape(shape_fn(T, B)).copy()
    return grid, T, B


def _save_text(path, grid: np.ndarray, T: int, B: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{T} {B}\n")
        for row in grid:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def _load_text(path) -> tuple[np.ndarray, int, int]:
    with open(path, encoding="utf-8") as fh:
        T, B = (int(x) for x in fh.readline().split())
        grid = np.array([[float(x) for x in line.split()] for line in fh if line.strip()])
    return grid, T, B


@dataclass(eq=False)
class ValueTable:
    """``values[t, b] = V(t, b)`` for t in 0..T, b in 0..B."""

    values: np.ndarray

    @property
    def T(self) -> int:
        return self.values.shape[0] - 1

    @property
    def B(self) -> int:
        return self.values.shape[1] - 1

    def save(self, path) -> None:
        _save_grid(path, "V", self.values, self.T, self.B)

    @classmethod
    def load(cls, path) -> "ValueTable":
        grid, _, _ = _load_grid(path, "V", lambda T, B: (T + 1, B + 1))
        return cls(grid)

    def save_text(self, path) -> None:
        _save_text(path, self.values, self.T, self.B)

    @classmethod
    def load_text(cls, path) -> "ValueTable":
        return cls(_load_text(path)[0])


@dataclass(eq=False)
class DiffTable:
    """``diffs[t, b] = V(t, b+1) - V(t, b)``, shape (T+1, B)."""

    diffs: np.ndarray

    @property
    def t_max(self) -> int:
        return self.diffs.shape[0] - 1

    @property
    def b_max(self) -> int:
        # largest b with a defined diff
        return self.diffs.shape[1] - 1

    def save(self, path) -> None:
        _save_grid(path, "D", self.diffs, self.t_max, self.diffs.shape[1])

    @classmethod
    def load(cls, path) -> "DiffTable":
        grid, _, _ = _load_grid(path, "D", lambda T, B: (T + 1, B))
        return cls(grid)

    def save_text(self, path) -> None:
        _save_text(path, self.diffs, self.t_max, self.diffs.shape[1])


@dataclass(frozen=True)
class BidDecisionInput:
    t: int
    b: int
    theta: float


def check_memory(T: int, B: int, cap: int = DEFAULT_MEMORY_CAP) -> None:
    need = (T + 1) * (B + 1) * 8
    if need > cap:
        raise MemoryPlanError(
            f"value table for T={T}, B={B} needs {need / 2**20:.0f} MiB (cap {cap / 2**20:.0f} MiB); "
            "solve a smaller sub-grid and use the neural approximation (train-nn) instead"
        )


def solve_value_table(
    landscape: LandscapeModel,
    theta_avg: float,
    T: int,
    B: int,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> ValueTable:
    """Fill V(t, b) row by row.

    Each row is computed over all b at once. For every bid ``a`` the running
    sum ``sum_{d<=a} m(d) g(d)`` is kept and the best one taken, which gives
    the same floats as enumerating ``a`` per cell. When the previous row is
    monotone in b, g is nonincreasing and the scan stops as soon as no cell
    has g >= 0 left.
    """
    if T < 1 or B < 0:
        raise ValueError("need T >= 1 and B >= 0")
    if not 0.0 <= theta_avg <= 1.0:
        raise ValueError("theta_avg must lie in [0, 1]")
    check_memory(T, B, memory_cap)

    m = landscape.pdf
    top = min(landscape.delta_max, B)
    V = np.zeros((T + 1, B + 1))
    run = np.empty(B + 1)
    best = np.empty(B + 1)
    for t in range(1, T + 1):
        prev = V[t - 1]
        monotone = bool(np.all(prev[1:] >= prev[:-1]))
        run[:] = m[0] * theta_avg  # g(0) = theta_avg
        best[:] = run
        for d in range(1, top + 1):
            g = theta_avg + prev[: B + 1 - d] - prev[d:]
            run[d:] += m[d] * g
            np.maximum(best[d:], run[d:], out=best[d:])
            if monotone and not np.any(g >= 0):
                break
        V[t] = prev + best
    return ValueTable(V)


def diff_table(v: ValueTable) -> DiffTable:
    return DiffTable(np.diff(v.values, axis=1))


def g_values(v: ValueTable, t: int, b: int, theta: float, delta_max: int) -> np.ndarray:
    """g(d) for d = 0..min(delta_max, b) using row t-1 of the table."""
    prev = v.values[t - 1]
    d = np.arange(min(delta_max, b) + 1)
    return theta + prev[b - d] - prev[b]


def bid_rlb(v: ValueTable, inp: BidDecisionInput, delta_max: int) -> int:
    """Largest d in 0..min(delta_max, b) with g(d) >= 0."""
    t, b = inp.t, inp.b
    if t < 1:
        raise TerminalState("terminal state: no auctions left")
    if t > v.T or b > v.B or b < 0:
        raise ValueError(f"state (t={t}, b={b}) outside table ({v.T}, {v.B})")
    ok = np.flatnonzero(g_values(v, t, b, inp.theta, delta_max) >= 0)
    return int(ok[-1]) if ok.size else 0


@dataclass(eq=False)
class BruteForceResult:
    per_x: np.ndarray  # V(t, b, x), shape (T+1, B+1, K)
    marginal: np.ndarray  # V(t, b), shape (T+1, B+1)
    policy: np.ndarray  # optimal a(t, b, x), -1 where t == 0


MAX_BRUTE_FORCE_WORK = 5_000_000


def brute_force_value(
    landscape: LandscapeModel,
    thetas: Sequence[float],
    probs: Sequence[float],
    T: int,
    B: int,
) -> BruteForceResult:
    """Exact expectimax over the MDP with an enumerated feature space.

    Every request type ``k`` has pCTR ``thetas[k]`` and probability
    ``probs[k]``; the market price law does not depend on the request. Each
    successor state (t-1, b', x') is enumerated explicitly with probability
    ``p(x') * m(d)`` and the action set is the full 0..b.
    """
    m = [float(x) for x in landscape.pdf]
    dmax = len(m) - 1
    K = len(thetas)
    if K == 0 or len(probs) != K:
        raise ValueError("thetas and probs must be non-empty and equal length")
    if abs(sum(probs) - 1.0) > 1e-12:
        raise ValueError("probs must sum to 1")
    work = T * (B + 1) * K * (B + 1) * (dmax + 2) * K
    if work > MAX_BRUTE_FORCE_WORK:
        raise ValueError(f"instance too large for exhaustive search ({work} > {MAX_BRUTE_FORCE_WORK})")

    @lru_cache(maxsize=None)
    def value(t: int, b: int, k: int) -> tuple[float, int]:
        if t == 0:
            return 0.0, -1
        best, best_a = -1.0, -1
        for a in range(b + 1):
            q = 0.0
            for d in range(dmax + 1):
                for k2 in range(K):
                    p = probs[k2] * m[d]
                    if d <= a:
                        q += p * (thetas[k] + value(t - 1, b - d, k2)[0])
                    else:
                        q += p * value(t - 1, b, k2)[0]
            if q > best:
                best, best_a = q, a
        return best, best_a

    per_x = np.zeros((T + 1, B + 1, K))
    policy = np.full((T + 1, B + 1, K), -1, dtype=np.int64)
    for t in range(T + 1):
        for b in range(B + 1):
            for k in range(K):
                per_x[t, b, k], policy[t, b, k] = value(t, b, k)
    marginal = per_x @ np.asarray(probs, dtype=np.float64)
    return BruteForceResult(per_x, marginal, policy)
