"""Independent reference computations used to cross-check the library.

Nothing here imports from the package under test: inf-convolutions are
minimized with scipy on a dense mesh, and risk measures are integrated from
the survival function directly.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar


def infconv_at(f1, f2, x: float, mesh: int = 20001) -> tuple[float, float]:
    """min over y in [0, x] of f1(y) + f2(x - y) for plain callables; returns (value, argmin)."""
    if x <= 0.0:
        return float(f1(0.0) + f2(0.0)), 0.0
    ys = np.linspace(0.0, x, mesh)
    vals = f1(ys) + f2(x - ys)
    i = int(np.argmin(vals))
    best, arg = float(vals[i]), float(ys[i])
    lo, hi = ys[max(i - 1, 0)], ys[min(i + 1, mesh - 1)]
    if hi > lo:
        res = minimize_scalar(lambda y: float(f1(y) + f2(x - y)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13})
        if res.fun < best:
            best, arg = float(res.fun), float(res.x)
    return best, arg


def choquet(f, values, probs) -> float:
    """Integral of f(P(X > t)) dt for a nonnegative finite law, summed over the gaps between values."""
    order = np.argsort(values)
    v = np.asarray(values, dtype=float)[order]
    p = np.asarray(probs, dtype=float)[order]
    total = 0.0
    prev = 0.0
    for k in range(v.size):
        surv = float(p[k:].sum())
        total += float(f(min(surv, 1.0))) * (v[k] - prev)
        prev = v[k]
    return total


# plain-callable versions of common distortions
def power(beta):
    return lambda t: np.asarray(t, dtype=float) ** beta


def dual_power(alpha):
    return lambda t: 1.0 - (1.0 - np.asarray(t, dtype=float)) ** alpha


def shifted(a):
    return lambda t: np.maximum(0.0, (np.asarray(t, dtype=float) - a) / (1.0 - a))


def capped(b):
    return lambda t: np.minimum(np.asarray(t, dtype=float) / b, 1.0)
