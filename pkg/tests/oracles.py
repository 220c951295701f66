"""Independent reference implementations used only by the tests."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def naive_value_table(pdf, theta, T, B):
    """Per-cell enumeration of a with the g-form objective, same summation order
    as the library (so results should agree bit for bit)."""
    m = np.asarray(pdf, dtype=np.float64)
    dmax = m.size - 1
    V = np.zeros((T + 1, B + 1))
    for t in range(1, T + 1):
        for b in range(B + 1):
            run = m[0] * theta
            best = run
            for d in range(1, min(dmax, b) + 1):
                run += m[d] * (theta + V[t - 1, b - d] - V[t - 1, b])
                best = max(best, run)
            V[t, b] = V[t - 1, b] + best
    return V


def literal_value_table(pdf, theta, T, B):
    """Expectation over win and lose branches written out for each bid a."""
    m = [float(x) for x in pdf]
    dmax = len(m) - 1
    V = [[0.0] * (B + 1) for _ in range(T + 1)]
    for t in range(1, T + 1):
        for b in range(B + 1):
            best = -1.0
            for a in range(min(dmax, b) + 1):
                q = sum(m[d] * (theta + V[t - 1][b - d]) for d in range(a + 1))
                q += sum(m[d] * V[t - 1][b] for d in range(a + 1, dmax + 1))
                best = max(best, q)
            V[t][b] = best
    return np.array(V)


def exhaustive_bid(V, pdf, t, b, theta, dmax):
    """argmax_a sum_{d<=a} m(d) g(d); ties resolved toward the larger bid."""
    m = np.asarray(pdf)
    best, best_a, run = -np.inf, 0, 0.0
    for a in range(min(dmax, b) + 1):
        run += m[a] * (theta + V[t - 1, b - a] - V[t - 1, b])
        if run >= best:
            best, best_a = run, a
    return best_a


def policy_value(policy, pdf, thetas, probs, T, B):
    """Expected clicks of ``policy(t, b, theta) -> bid`` over the enumerated MDP."""
    m = [float(x) for x in pdf]

    @lru_cache(maxsize=None)
    def v(t, b):
        if t == 0:
            return 0.0
        tot = 0.0
        for th, px in zip(thetas, probs):
            a = policy(t, b, th)
            assert 0 <= a <= b
            for d, md in enumerate(m):
                if d <= a:
                    tot += px * md * (th + v(t - 1, b - d))
                else:
                    tot += px * md * v(t - 1, b)
        return tot

    return v(T, B)
