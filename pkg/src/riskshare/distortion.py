"""Distortion functions, their algebra, and the function-level inf-convolution.

A distortion function maps tail probabilities in [0, 1] to weights. The classes
here cover the analytic families used throughout the package (power, dual
power, piecewise linear, VaR indicators, identity, tabulated curves) together
with a few composite wrappers that keep evaluation exact (pointwise envelopes,
shifts, scalings, generic duals).

Every object is immutable and evaluation is vectorized over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateError, DomainError, ParameterError

GRID = 2001
TOL = 1e-9
_PROB_SLACK = 1e-12


def unit_grid(size: int = GRID) -> np.ndarray:
    if size < 2:
        raise DomainError(f"grid needs at least 2 points, got {size}")
    return np.linspace(0.0, 1.0, size)


def _as_prob(t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("probability argument must be finite")
    if np.any(arr < -_PROB_SLACK) or np.any(arr > 1.0 + _PROB_SLACK):
        raise DomainError(f"probability argument outside [0, 1]: {t!r}")
    return np.clip(arr, 0.0, 1.0)


class Distortion:
    """Base class. Subclasses implement ``_eval`` on clipped numpy arrays."""

    family = "abstract"

    def __call__(self, t):
        arr = _as_prob(t)
        out = np.asarray(self._eval(arr), dtype=float)
        if arr.ndim == 0:
            return float(out)
        return out

    def _eval(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # structure -------------------------------------------------------------
    def breakpoints(self) -> tuple[float, ...]:
        """Interior points where the function may have a kink or a jump."""
        return ()

    def is_concave(self) -> bool:
        return _grid_curvature(self) <= TOL

    def is_convex(self) -> bool:
        return _grid_curvature(self, sign=-1.0) <= TOL

    def dual(self) -> "Distortion":
        return Dual(self)

    def at_one(self) -> float:
        return float(self._eval(np.asarray(1.0)))

    @property
    def normalized(self) -> bool:
        return abs(self.at_one() - 1.0) <= TOL

    def lipschitz(self, grid: int = GRID) -> float:
        xs = _probe_points(self, grid)
        ys = self._eval(xs)
        dx = np.diff(xs)
        keep = dx > 1e-15
        if not np.any(keep):
            return 0.0
        return float(np.max(np.abs(np.diff(ys))[keep] / dx[keep]))

    def right_derivative(self, x, step: float | None = None):
        """Forward difference quotient; analytic families override this."""
        x = np.asarray(x, dtype=float)
        h = (1.0 / (GRID - 1)) if step is None else step
        hi = np.minimum(x + h, 1.0)
        lo = np.minimum(x, hi - h)
        return (self._eval(hi) - self._eval(lo)) / h

    def zero_end(self) -> float:
        """sup{t : h(t) = 0}, found by a grid scan refined with bisection."""
        xs = unit_grid(GRID)
        ys = self._eval(xs)
        zero = ys <= 1e-15
        if not zero[0]:
            return 0.0
        if np.all(zero):
            return 1.0
        i = int(np.argmin(zero)) - 1
        lo, hi = float(xs[i]), float(xs[i + 1])
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self._eval(np.asarray(mid)) <= 1e-15:
                lo = mid
            else:
                hi = mid
        return lo

    def to_dict(self) -> dict:
        return tabulate(self).to_dict()


def _probe_points(h: Distortion, grid: int = GRID) -> np.ndarray:
    pts = [unit_grid(grid)]
    bps = [b for b in h.breakpoints() if 0.0 <= b <= 1.0]
    if bps:
        pts.append(np.asarray(bps, dtype=float))
    return np.unique(np.concatenate(pts))


def _grid_curvature(h: Distortion, sign: float = 1.0, grid: int = GRID) -> float:
    """Largest second difference (times ``sign``) on a uniform grid."""
    ys = h._eval(unit_grid(grid))
    d2 = ys[2:] - 2.0 * ys[1:-1] + ys[:-2]
    return float(np.max(sign * d2)) if d2.size else 0.0


# ---------------------------------------------------------------------------
# analytic families


@dataclass(frozen=True)
class Identity(Distortion):
    family = "identity"

    def _eval(self, t):
        return t

    def is_concave(self) -> bool:
        return True

    def is_convex(self) -> bool:
        return True

    def dual(self) -> Distortion:
        return self

    def lipschitz(self, grid: int = GRID) -> float:
        return 1.0

    def right_derivative(self, x, step=None):
        return np.ones_like(np.asarray(x, dtype=float))

    def zero_end(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"family": "identity", "params": {}}


@dataclass(frozen=True)
class Power(Distortion):
    """t ** beta; convex for beta >= 1."""

    beta: float
    family = "power"

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ParameterError(f"power exponent must be positive, got {self.beta}")

    def _eval(self, t):
        return np.power(t, self.beta)

    def is_concave(self) -> bool:
        return self.beta <= 1.0

    def is_convex(self) -> bool:
        return self.beta >= 1.0

    def dual(self) -> Distortion:
        return DualPower(self.beta)

    def lipschitz(self, grid: int = GRID) -> float:
        return float(self.beta) if self.beta >= 1.0 else math.inf

    def right_derivative(self, x, step=None):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return self.beta * np.power(x, self.beta - 1.0)

    def zero_end(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"family": "power", "params": {"beta": self.beta}}


@dataclass(frozen=True)
class DualPower(Distortion):
    """1 - (1 - t) ** alpha; concave for alpha >= 1."""

    alpha: float
    family = "dual_power"

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ParameterError(f"dual power exponent must be positive, got {self.alpha}")

    def _eval(self, t):
        return 1.0 - np.power(1.0 - t, self.alpha)

    def is_concave(self) -> bool:
        return self.alpha >= 1.0

    def is_convex(self) -> bool:
        return self.alpha <= 1.0

    def dual(self) -> Distortion:
        return Power(self.alpha)

    def lipschitz(self, grid: int = GRID) -> float:
        return float(self.alpha) if self.alpha >= 1.0 else math.inf

    def right_derivative(self, x, step=None):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return self.alpha * np.power(1.0 - x, self.alpha - 1.0)

    def zero_end(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"family": "dual_power", "params": {"alpha": self.alpha}}


@dataclass(frozen=True)
class VaRIndicator(Distortion):
    """Right-continuous step 1{t > alpha}, or 1{t >= alpha} when ``closed``.

    The open form is the VaR distortion; the closed form appears as its dual.
    """

    alpha: float
    closed: bool = False
    family = "var"

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ParameterError(f"VaR level must lie in [0, 1], got {self.alpha}")

    def _eval(self, t):
        hit = t >= self.alpha if self.closed else t > self.alpha
        return hit.astype(float)

    def breakpoints(self):
        return (self.alpha,)

    def is_concave(self) -> bool:
        if self.closed:
            return self.alpha == 0.0
        return self.alpha in (0.0, 1.0)

    def is_convex(self) -> bool:
        if self.closed:
            return self.alpha in (0.0, 1.0)
        return self.alpha == 1.0

    def dual(self) -> Distortion:
        return VaRIndicator(1.0 - self.alpha, closed=not self.closed)

    def lipschitz(self, grid: int = GRID) -> float:
        return math.inf

    def zero_end(self) -> float:
        return self.alpha

    def to_dict(self) -> dict:
        return {"family": "var", "params": {"alpha": self.alpha, "closed": self.closed}}


@dataclass(frozen=True)
class PiecewiseLinear(Distortion):
    """Linear interpolation through knots (x, h(x)) covering [0, 1]."""

    knots: tuple[tuple[float, float], ...]
    family = "pwl"

    def __post_init__(self):
        knots = tuple((float(x), float(y)) for x, y in self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) < 2:
            raise ParameterError("piecewise linear function needs at least two knots")
        xs = np.array([k[0] for k in knots])
        ys = np.array([k[1] for k in knots])
        if not np.all(np.isfinite(xs)) or not np.all(np.isfinite(ys)):
            raise ParameterError("knots must be finite")
        if abs(xs[0]) > 1e-12 or abs(xs[-1] - 1.0) > 1e-12:
            raise ParameterError("knots must start at x=0 and end at x=1")
        if np.any(np.diff(xs) <= 0):
            raise ParameterError("knot x-coordinates must be strictly increasing")
        if np.any(np.diff(ys) < -TOL):
            raise ParameterError("piecewise linear distortion must be nondecreasing")

    @property
    def xs(self) -> np.ndarray:
        return np.array([k[0] for k in self.knots])

    @property
    def ys(self) -> np.ndarray:
        return np.array([k[1] for k in self.knots])

    def slopes(self) -> np.ndarray:
        return np.diff(self.ys) / np.diff(self.xs)

    def _eval(self, t):
        return np.interp(t, self.xs, self.ys)

    def breakpoints(self):
        return tuple(k[0] for k in self.knots[1:-1])

    def is_concave(self) -> bool:
        return bool(np.all(np.diff(self.slopes()) <= TOL))

    def is_convex(self) -> bool:
        return bool(np.all(np.diff(self.slopes()) >= -TOL))

    def dual(self) -> Distortion:
        flipped = [(1.0 - x, 1.0 - y) for x, y in reversed(self.knots)]
        # 1 - x can round a knot onto its neighbour; keep the later one
        knots = [flipped[0]]
        for x, y in flipped[1:]:
            if x - knots[-1][0] > 1e-15:
                knots.append((x, y))
            elif len(knots) > 1:
                knots[-1] = (x, y)
        if len(knots) == 1:
            knots.append(flipped[-1])
        return PiecewiseLinear(tuple(knots))

    def lipschitz(self, grid: int = GRID) -> float:
        return float(np.max(np.abs(self.slopes())))

    def right_derivative(self, x, step=None):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(self.knots) - 2)
        return self.slopes()[idx]

    def zero_end(self) -> float:
        ys = self.ys
        if ys[0] > 1e-15:
            return 0.0
        positive = np.flatnonzero(ys > 1e-15)
        if positive.size == 0:
            return 1.0
        return float(self.xs[positive[0] - 1])

    def to_dict(self) -> dict:
        return {"family": "pwl", "params": {"knots": [[x, y] for x, y in self.knots]}}


class Tabulated(Distortion):
    """Values on a uniform grid over [0, 1], linearly interpolated."""

    family = "tabulated"

    def __init__(self, values: Sequence[float]):
        vals = np.array(values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise ParameterError("tabulated distortion needs a 1-d array of at least two values")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("tabulated values must be finite")
        if np.any(np.diff(vals) < -TOL):
            raise ParameterError("tabulated distortion must be nondecreasing")
        vals = np.maximum.accumulate(vals)
        vals.setflags(write=False)
        self._values = vals
        self._grid = unit_grid(vals.size)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def grid(self) -> np.ndarray:
        return self._grid

    def __eq__(self, other):
        return isinstance(other, Tabulated) and np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self):
        return f"Tabulated(size={self._values.size}, at_one={self._values[-1]:.6g})"

    def _eval(self, t):
        return np.interp(t, self._grid, self._values)

    def is_concave(self) -> bool:
        d2 = np.diff(self._values, 2)
        return bool(np.all(d2 <= TOL))

    def is_convex(self) -> bool:
        d2 = np.diff(self._values, 2)
        return bool(np.all(d2 >= -TOL))

    def dual(self) -> Distortion:
        return Tabulated(1.0 - self._values[::-1])

    def lipschitz(self, grid: int = GRID) -> float:
        return float(np.max(np.abs(np.diff(self._values)))) * (self._values.size - 1)

    def to_dict(self) -> dict:
        return {"family": "tabulated", "params": {"values": self._values.tolist()}}


# ---------------------------------------------------------------------------
# composite wrappers (exact evaluation, structural serialization)


@dataclass(frozen=True)
class Envelope(Distortion):
    """Pointwise maximum or minimum of several distortions."""

    parts: tuple[Distortion, ...]
    kind: str = "max"

    def __post_init__(self):
        if self.kind not in ("max", "min"):
            raise ParameterError(f"envelope kind must be 'max' or 'min', got {self.kind!r}")
        if not self.parts:
            raise ParameterError("envelope needs at least one part")

    @property
    def family(self):
        return self.kind

    def _eval(self, t):
        vals = [p._eval(t) for p in self.parts]
        return np.maximum.reduce(vals) if self.kind == "max" else np.minimum.reduce(vals)

    def breakpoints(self):
        return tuple(sorted({b for p in self.parts for b in p.breakpoints()}))

    def is_concave(self) -> bool:
        if self.kind == "min" and all(p.is_concave() for p in self.parts):
            return True
        return super().is_concave()

    def is_convex(self) -> bool:
        if self.kind == "max" and all(p.is_convex() for p in self.parts):
            return True
        return super().is_convex()

    def dual(self) -> Distortion:
        other = "min" if self.kind == "max" else "max"
        return Envelope(tuple(p.dual() for p in self.parts), other)

    def to_dict(self) -> dict:
        return {"family": self.kind, "params": {"of": [p.to_dict() for p in self.parts]}}


@dataclass(frozen=True)
class Reparam(Distortion):
    """t -> base(clip(t - offset, 0, 1)).

    A positive offset delays the curve (the shift h^a); a negative offset
    removes a flat initial segment (the active part).
    """

    base: Distortion
    offset: float
    family = "shift"

    def _eval(self, t):
        return self.base._eval(np.clip(t - self.offset, 0.0, 1.0))

    def breakpoints(self):
        pts = {b + self.offset for b in self.base.breakpoints()}
        pts.add(self.offset)
        pts.add(1.0 + self.offset)
        return tuple(sorted(p for p in pts if 0.0 < p < 1.0))

    def lipschitz(self, grid: int = GRID) -> float:
        return self.base.lipschitz(grid)

    def zero_end(self) -> float:
        return float(min(1.0, max(0.0, self.base.zero_end() + self.offset)))

    def to_dict(self) -> dict:
        return {"family": "shift", "params": {"base": self.base.to_dict(), "offset": self.offset}}


@dataclass(frozen=True)
class Scaled(Distortion):
    """factor * base."""

    base: Distortion
    factor: float
    family = "scaled"

    def __post_init__(self):
        if not (self.factor > 0 and math.isfinite(self.factor)):
            raise ParameterError(f"scale factor must be positive, got {self.factor}")

    def _eval(self, t):
        return self.factor * self.base._eval(t)

    def breakpoints(self):
        return self.base.breakpoints()

    def is_concave(self) -> bool:
        return self.base.is_concave()

    def is_convex(self) -> bool:
        return self.base.is_convex()

    def lipschitz(self, grid: int = GRID) -> float:
        return self.factor * self.base.lipschitz(grid)

    def zero_end(self) -> float:
        return self.base.zero_end()

    def to_dict(self) -> dict:
        return {"family": "scaled", "params": {"base": self.base.to_dict(), "factor": self.factor}}


@dataclass(frozen=True)
class Dual(Distortion):
    """Generic dual 1 - base(1 - t) for bases without a closed-form dual."""

    base: Distortion
    family = "dual"

    def _eval(self, t):
        return 1.0 - self.base._eval(1.0 - t)

    def breakpoints(self):
        return tuple(sorted(1.0 - b for b in self.base.breakpoints()))

    def is_concave(self) -> bool:
        return self.base.is_convex()

    def is_convex(self) -> bool:
        return self.base.is_concave()

    def dual(self) -> Distortion:
        return self.base

    def lipschitz(self, grid: int = GRID) -> float:
        return self.base.lipschitz(grid)

    def to_dict(self) -> dict:
        return {"family": "dual", "params": {"of": self.base.to_dict()}}


# ---------------------------------------------------------------------------
# constructors and serialization


def capped_linear(b: float) -> PiecewiseLinear:
    """min{x / b, 1}: the distortion of Expected Shortfall at level b."""
    if not (0.0 < b <= 1.0):
        raise ParameterError(f"cap level must lie in (0, 1], got {b}")
    if b == 1.0:
        return PiecewiseLinear(((0.0, 0.0), (1.0, 1.0)))
    return PiecewiseLinear(((0.0, 0.0), (b, 1.0), (1.0, 1.0)))


def ramp(a: float, width: float) -> PiecewiseLinear:
    """max{0, (x - a) / width}."""
    if not (0.0 <= a < 1.0):
        raise ParameterError(f"ramp start must lie in [0, 1), got {a}")
    if not width > 0:
        raise ParameterError(f"ramp width must be positive, got {width}")
    if a == 0.0:
        return PiecewiseLinear(((0.0, 0.0), (1.0, 1.0 / width)))
    return PiecewiseLinear(((0.0, 0.0), (a, 0.0), (1.0, (1.0 - a) / width)))


def shifted_linear(a: float) -> PiecewiseLinear:
    """max{0, (x - a) / (1 - a)}: a left-tail Expected Shortfall distortion."""
    return ramp(a, 1.0 - a)


def tabulate(h: Distortion, grid: int = GRID) -> Tabulated:
    if isinstance(h, Tabulated) and h.values.size == grid:
        return h
    return Tabulated(h._eval(unit_grid(grid)))


def from_dict(data: dict) -> Distortion:
    try:
        family = data["family"]
        params = data.get("params", {}) or {}
    except (TypeError, KeyError) as exc:
        raise DomainError(f"malformed distortion JSON: {data!r}") from exc
    try:
        if family == "identity":
            return Identity()
        if family == "power":
            return Power(float(params["beta"]))
        if family == "dual_power":
            return DualPower(float(params["alpha"]))
        if family == "var":
            return VaRIndicator(float(params["alpha"]), bool(params.get("closed", False)))
        if family == "pwl":
            return PiecewiseLinear(tuple((float(x), float(y)) for x, y in params["knots"]))
        if family == "tabulated":
            return Tabulated(params["values"])
        if family in ("max", "min"):
            return Envelope(tuple(from_dict(p) for p in params["of"]), family)
        if family == "shift":
            return Reparam(from_dict(params["base"]), float(params["offset"]))
        if family == "scaled":
            return Scaled(from_dict(params["base"]), float(params["factor"]))
        if family == "dual":
            return Dual(from_dict(params["of"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"bad parameters for family {family!r}: {exc}") from exc
    raise DomainError(f"unknown distortion family {family!r}")


# ---------------------------------------------------------------------------
# operations


def evaluate(h: Distortion, t):
    """h(t) for t in [0, 1]; raises DomainError outside."""
    return h(t)


def dual(h: Distortion) -> Distortion:
    return h.dual()


def is_concave(h: Distortion) -> bool:
    return h.is_concave()


def is_convex(h: Distortion) -> bool:
    return h.is_convex()


def _check_points(*hs: Distortion, grid: int = GRID) -> np.ndarray:
    pts = [unit_grid(grid)]
    for h in hs:
        bps = [b for b in h.breakpoints() if 0.0 <= b <= 1.0]
        if bps:
            pts.append(np.asarray(bps))
    return np.unique(np.concatenate(pts))


def dominance_gap(h1: Distortion, h2: Distortion, grid: int = GRID) -> tuple[float, float]:
    """Largest value of dual(h2) - h1 over the check points and where it occurs."""
    d2 = h2.dual()
    ts = _check_points(h1, d2, grid=grid)
    gap = d2._eval(ts) - h1._eval(ts)
    i = int(np.argmax(gap))
    return float(gap[i]), float(ts[i])


def dominates(h1: Distortion, h2: Distortion, grid: int = GRID, tol: float = TOL) -> bool:
    """True iff h1 >= dual(h2) - tol at every grid point and breakpoint."""
    gap, _ = dominance_gap(h1, h2, grid)
    return gap <= tol


def alpha_of(h: Distortion) -> float:
    return h.zero_end()


def shift(h: Distortion, a: float) -> Distortion:
    """t -> h((t - a)+)."""
    if not (0.0 <= a <= 1.0):
        raise DomainError(f"shift must lie in [0, 1], got {a}")
    if a == 0.0:
        return h
    if isinstance(h, PiecewiseLinear):
        xs, ys = h.xs, h.ys
        knots = [(0.0, float(ys[0]))]
        for x, y in zip(xs, ys):
            if x + a < 1.0:
                knots.append((x + a, y))
        knots.append((1.0, float(h._eval(np.asarray(1.0 - a)))))
        return _pwl_from_points(knots)
    return Reparam(h, a)


def active_part(h: Distortion) -> Distortion:
    """t -> h(min(t + alpha_of(h), 1))."""
    a = alpha_of(h)
    if a == 0.0:
        return h
    if isinstance(h, PiecewiseLinear):
        xs, ys = h.xs, h.ys
        knots = [(x - a, y) for x, y in zip(xs, ys) if x >= a]
        knots.append((1.0, float(ys[-1])))
        return _pwl_from_points(knots)
    return Reparam(h, -a)


def normalize(h: Distortion) -> tuple[Distortion, float]:
    """Return (h / h(1), h(1)); raises DegenerateError if h(1) is zero."""
    scale = h.at_one()
    if abs(scale) <= TOL:
        raise DegenerateError("cannot normalize a distortion with h(1) = 0")
    if abs(scale - 1.0) <= 1e-15:
        return h, 1.0
    if isinstance(h, Tabulated):
        return Tabulated(h.values / scale), scale
    if isinstance(h, PiecewiseLinear):
        return PiecewiseLinear(tuple((x, y / scale) for x, y in h.knots)), scale
    return Scaled(h, 1.0 / scale), scale


def _pwl_from_points(points: Iterable[tuple[float, float]]) -> PiecewiseLinear:
    """Build a PiecewiseLinear from possibly repeated x-values, dropping collinear knots."""
    merged: list[tuple[float, float]] = []
    for x, y in sorted(points, key=lambda p: p[0]):
        x = min(1.0, max(0.0, float(x)))
        if merged and abs(x - merged[-1][0]) <= 1e-14:
            merged[-1] = (merged[-1][0], max(merged[-1][1], float(y)) if x > 0 else float(y))
            continue
        merged.append((x, float(y)))
    if merged[0][0] != 0.0:
        merged[0] = (0.0, merged[0][1])
    if merged[-1][0] != 1.0:
        merged[-1] = (1.0, merged[-1][1])
    pruned = [merged[0]]
    for i in range(1, len(merged) - 1):
        (x0, y0), (x1, y1), (x2, y2) = pruned[-1], merged[i], merged[i + 1]
        if abs((y1 - y0) * (x2 - x1) - (y2 - y1) * (x1 - x0)) > 1e-14:
            pruned.append(merged[i])
    pruned.append(merged[-1])
    return PiecewiseLinear(tuple(pruned))


def _as_pwl(h: Distortion) -> PiecewiseLinear | None:
    if isinstance(h, PiecewiseLinear):
        return h
    if isinstance(h, Identity):
        return PiecewiseLinear(((0.0, 0.0), (1.0, 1.0)))
    return None


def min_of(hs: Sequence[Distortion], grid: int = GRID) -> Distortion:
    """Pointwise minimum.

    Returns one of the inputs when it lies below all others, an exact
    PiecewiseLinear when every input is piecewise linear, and a Tabulated
    curve otherwise.
    """
    hs = list(hs)
    if not hs:
        raise DomainError("min_of needs at least one distortion")
    if len(hs) == 1:
        return hs[0]
    ts = _check_points(*hs, grid=grid)
    vals = np.array([h._eval(ts) for h in hs])
    low = vals.min(axis=0)
    for h, v in zip(hs, vals):
        if np.all(v <= low + 1e-15):
            return h
    pwls = [_as_pwl(h) for h in hs]
    if all(p is not None for p in pwls):
        return _pwl_min(pwls)
    return Tabulated(np.minimum.reduce([h._eval(unit_grid(grid)) for h in hs]))


def max_of(hs: Sequence[Distortion]) -> Distortion:
    hs = list(hs)
    if not hs:
        raise DomainError("max_of needs at least one distortion")
    return hs[0] if len(hs) == 1 else Envelope(tuple(hs), "max")


def _pwl_min(pwls: Sequence[PiecewiseLinear]) -> PiecewiseLinear:
    xs = np.unique(np.concatenate([p.xs for p in pwls]))
    pts = set(xs.tolist())
    for lo, hi in zip(xs[:-1], xs[1:]):
        ends = [(p._eval(np.asarray(lo)), p._eval(np.asarray(hi))) for p in pwls]
        for i in range(len(pwls)):
            for j in range(i + 1, len(pwls)):
                d0 = ends[i][0] - ends[j][0]
                d1 = ends[i][1] - ends[j][1]
                if d0 * d1 < 0:
                    pts.add(float(lo + (hi - lo) * d0 / (d0 - d1)))
    grid = np.array(sorted(pts))
    vals = np.minimum.reduce([p._eval(grid) for p in pwls])
    return _pwl_from_points(zip(grid.tolist(), vals.tolist()))


# ---------------------------------------------------------------------------
# inf-convolution of functions


ExactEval = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class InfConvCurve:
    """(h1 [] ... [] hn)(x) tabulated on a uniform grid with optimal splits.

    ``selector[i, j]`` is agent j's share of ``grid[i]``. When a closed form is
    available ``exact`` evaluates value and split at arbitrary x; otherwise
    values between grid points are linearly interpolated.
    """

    grid: np.ndarray
    value: np.ndarray
    selector: np.ndarray
    parts: tuple[Distortion, ...]
    tolerance: float
    exact: ExactEval | None = field(default=None, repr=False, compare=False)
    method: str = "grid"
    cross_check: float = 0.0

    @property
    def n_agents(self) -> int:
        return self.selector.shape[1]

    def __call__(self, x):
        arr = _as_prob(x)
        if self.exact is not None:
            out = self.exact(np.atleast_1d(arr))[0]
        else:
            out = np.interp(np.atleast_1d(arr), self.grid, self.value)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def split(self, x: float) -> np.ndarray:
        """Per-agent shares of probability x at the recorded optimum."""
        x = float(_as_prob(x))
        if self.exact is not None:
            return self.exact(np.array([x]))[1][0]
        i = int(np.searchsorted(self.grid, x))
        if i < self.grid.size and abs(self.grid[i] - x) <= 1e-12:
            return self.selector[i].copy()
        lo = max(i - 1, 0)
        hi = min(i, self.grid.size - 1)
        if hi == lo:
            return self.selector[lo].copy()
        w = (x - self.grid[lo]) / (self.grid[hi] - self.grid[lo])
        return (1 - w) * self.selector[lo] + w * self.selector[hi]

    def at_one(self) -> float:
        return float(self(1.0))

    def is_coin(self, tol: float = TOL) -> bool:
        """Selector components (and for pairs the residual) nondecreasing on the grid."""
        return bool(np.all(np.diff(self.selector, axis=0) >= -tol))

    def as_distortion(self) -> Distortion:
        if self.exact is not None:
            return CurveDistortion(self)
        return Tabulated(self.value)

    def csv_rows(self) -> list[list[float]]:
        return [[float(x), float(v), *map(float, s)] for x, v, s in zip(self.grid, self.value, self.selector)]

    def csv_header(self) -> list[str]:
        return ["x", "value", *[f"y{j + 1}" for j in range(self.n_agents)]]


class CurveDistortion(Distortion):
    """A distortion backed by an exact inf-convolution evaluator."""

    family = "curve"

    def __init__(self, curve: InfConvCurve):
        if curve.exact is None:
            raise DomainError("curve has no exact evaluator; use Tabulated instead")
        self.curve = curve

    def __repr__(self):
        return f"CurveDistortion(method={self.curve.method!r}, parts={len(self.curve.parts)})"

    def _eval(self, t):
        t = np.asarray(t, dtype=float)
        return self.curve.exact(np.atleast_1d(t))[0].reshape(t.shape)

    def lipschitz(self, grid: int = GRID) -> float:
        return max(p.lipschitz(grid) for p in self.curve.parts)

    def to_dict(self) -> dict:
        return Tabulated(self.curve.value).to_dict()


def _smallest_argmin(s: np.ndarray) -> int:
    m = s.min()
    return int(np.flatnonzero(s <= m + 1e-12)[0])


def _grid_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """value[i] = min_{j<=i} a[j] + b[i-j]; returns values and smallest minimizing j."""
    size = a.size
    vals = np.empty(size)
    idx = np.empty(size, dtype=int)
    for i in range(size):
        s = a[: i + 1] + b[i::-1]
        j = _smallest_argmin(s)
        idx[i] = j
        vals[i] = s[j]
    return vals, idx


def _grid_tolerance(hs: Sequence[Distortion], grid: int) -> float:
    xs = unit_grid(grid)
    lip = 0.0
    for h in hs:
        steps = np.abs(np.diff(h._eval(xs)))
        # a jump is not an interpolation error; only the smooth part contributes
        steps = steps[steps < 0.5]
        if steps.size:
            lip = max(lip, float(np.max(steps)) * (grid - 1))
    return max(TOL, 2.0 * lip / grid)


def _grid_infconv(hs: Sequence[Distortion], grid: int) -> tuple[np.ndarray, np.ndarray]:
    xs = unit_grid(grid)
    value = hs[0]._eval(xs).astype(float)
    selector = xs[:, None].copy()
    for h in hs[1:]:
        vals, idx = _grid_pair(value, h._eval(xs))
        rest = xs[np.arange(grid) - idx]
        selector = np.column_stack([selector[idx], rest])
        value = vals
    return value, selector


def _pwl_pair_exact(p1: PiecewiseLinear, p2: PiecewiseLinear) -> ExactEval:
    k1 = p1.xs
    k2 = p2.xs

    def run(x: np.ndarray):
        x = np.asarray(x, dtype=float)
        cands = np.concatenate(
            [np.zeros((x.size, 1)), x[:, None], np.broadcast_to(k1, (x.size, k1.size)), x[:, None] - k2[None, :]],
            axis=1,
        )
        cands = np.clip(cands, 0.0, x[:, None])
        cands = np.sort(cands, axis=1)
        tot = p1._eval(cands) + p2._eval(np.clip(x[:, None] - cands, 0.0, 1.0))
        best = tot.min(axis=1)
        j = np.argmax(tot <= best[:, None] + 1e-12, axis=1)
        y = cands[np.arange(x.size), j]
        return best, np.column_stack([y, x - y])

    return run


def _var_pair_exact(h1: Distortion, h2: Distortion) -> ExactEval | None:
    if isinstance(h1, VaRIndicator) and not h1.closed:
        a = h1.alpha

        def run(x):
            y = np.minimum(x, a)
            return h2._eval(np.clip(x - a, 0.0, 1.0)), np.column_stack([y, x - y])

        return run
    if isinstance(h2, VaRIndicator) and not h2.closed:
        a = h2.alpha

        def run(x):
            z = np.minimum(x, a)
            return h1._eval(np.clip(x - a, 0.0, 1.0)), np.column_stack([x - z, z])

        return run
    return None


def shifted_linear_level(h: Distortion, tol: float = 1e-12) -> float | None:
    """Return a if h equals max{0, (x - a)/(1 - a)} with 0 <= a < 1, else None."""
    p = _as_pwl(h)
    if p is None:
        return None
    a = p.zero_end()
    if a >= 1.0:
        return None
    ref = shifted_linear(a)
    ts = np.unique(np.concatenate([unit_grid(201), p.xs]))
    return a if np.max(np.abs(p._eval(ts) - ref._eval(ts))) <= tol else None


def capped_linear_level(h: Distortion, tol: float = 1e-12) -> float | None:
    """Return b if h equals min{x / b, 1} with 0 < b <= 1, else None."""
    p = _as_pwl(h)
    if p is None:
        return None
    ys = p.ys
    hit = np.flatnonzero(ys >= 1.0 - 1e-15)
    if hit.size == 0:
        return None
    b = float(p.xs[hit[0]])
    if b <= 0.0:
        return None
    ref = capped_linear(b)
    ts = np.unique(np.concatenate([unit_grid(201), p.xs]))
    return b if np.max(np.abs(p._eval(ts) - ref._eval(ts))) <= tol else None


def _shifted_group_exact(levels: Sequence[float]) -> ExactEval:
    """Inf-convolution of several max{0,(x-a_i)/(1-a_i)} with sum(a_i) <= 1."""
    a = np.asarray(levels, dtype=float)
    total = float(a.sum())
    top = int(np.argmin(a))
    slope = 1.0 / (1.0 - a[top])

    def run(x):
        x = np.asarray(x, dtype=float)
        val = np.maximum(0.0, (x - total) * slope)
        # free mass is filled in agent order; the overflow goes to the flattest slope, i.e. the smallest level
        before = np.concatenate([[0.0], np.cumsum(a)[:-1]])
        shares = np.clip(x[:, None] - before[None, :], 0.0, a[None, :])
        shares[:, top] += np.maximum(0.0, x - total)
        return val, shares

    return run


def infconv_fn(hs: Sequence[Distortion], grid: int = GRID) -> InfConvCurve:
    """Tabulate the inf-convolution of ``hs`` with per-point optimal splits.

    Pairs of piecewise-linear functions, pairs containing an open VaR
    indicator, and groups of left-tail ES distortions use closed forms; the
    grid minimization is still run and its largest deviation stored in
    ``cross_check``.
    """
    hs = list(hs)
    if not hs:
        raise DomainError("infconv_fn needs at least one distortion")
    if grid < 2:
        raise DomainError(f"grid must have at least 2 points, got {grid}")
    xs = unit_grid(grid)
    tol = _grid_tolerance(hs, grid)
    if len(hs) == 1:
        v = hs[0]._eval(xs)
        return InfConvCurve(xs, v, xs[:, None].copy(), tuple(hs), tol, method="single")

    exact: ExactEval | None = None
    method = "grid"
    if len(hs) == 2:
        p1, p2 = _as_pwl(hs[0]), _as_pwl(hs[1])
        if p1 is not None and p2 is not None:
            exact, method = _pwl_pair_exact(p1, p2), "pwl"
        else:
            exact = _var_pair_exact(hs[0], hs[1])
            method = "var" if exact is not None else method
    if exact is None:
        levels = [shifted_linear_level(h) for h in hs]
        if all(lv is not None for lv in levels) and sum(levels) <= 1.0 + 1e-12:
            exact, method = _shifted_group_exact(levels), "shifted_group"

    gvals, gsel = _grid_infconv(hs, grid)
    if exact is None:
        return InfConvCurve(xs, gvals, gsel, tuple(hs), tol, method=method)
    evals, esel = exact(xs)
    drift = float(np.max(np.abs(evals - gvals)))
    return InfConvCurve(xs, evals, esel, tuple(hs), tol, exact=exact, method=method, cross_check=drift)
