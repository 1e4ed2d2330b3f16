"""Two-agent risk sharing: existence, case dispatch, and layered constructions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .distortion import (
    GRID,
    TOL,
    Distortion,
    InfConvCurve,
    Power,
    VaRIndicator,
    capped_linear_level,
    dominance_gap,
    dominates,
    infconv_fn,
    min_of,
    shift,
    shifted_linear_level,
    unit_grid,
)
from .errors import CoinError, DomainError, LatticeError, ParameterError, PreconditionError
from .randvar import Allocation, DiscreteRV, LatticeRV, RandomVariable, level_layers, rho

NEG_INFINITY = float("-inf")
_NEG_TOKEN = "neg_inf"
DEFAULT_DYADIC = 10


class CaseTag(str, Enum):
    UNBOUNDED = "UNBOUNDED"
    MIRROR = "MIRROR"
    CONCAVE_MIN = "CONCAVE_MIN"
    CONVEX_DOMINATED = "CONVEX_DOMINATED"
    VAR_LEMMA = "VAR_LEMMA"
    PWL_PAIR = "PWL_PAIR"
    BERNOULLI = "BERNOULLI"
    TWO_INDICATORS = "TWO_INDICATORS"
    SMALL_PROB = "SMALL_PROB"
    COIN_SANDWICH = "COIN_SANDWICH"
    ORACLE_ONLY = "ORACLE_ONLY"


def _encode(x: float):
    return _NEG_TOKEN if x == NEG_INFINITY else float(x)


def _decode(x) -> float:
    return NEG_INFINITY if x == _NEG_TOKEN else float(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if v == NEG_INFINITY:
            return _NEG_TOKEN
        return v
    return obj


@dataclass
class SharingSolution:
    """Outcome of a risk-sharing solve.

    ``value`` is the optimal total (or NEG_INFINITY); ``allocation`` realizes
    it on a lattice when one could be built. ``details`` holds diagnostics
    such as the measured allocation total, thresholds, or an unboundedness
    witness.
    """

    value: float
    method: CaseTag
    exact: bool
    lower_bound: float
    upper_bound: float
    allocation: Allocation | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.method = CaseTag(self.method)
        if math.isfinite(self.value):
            slack = 1e-9 * max(1.0, abs(self.value))
            if not (self.lower_bound - slack <= self.value <= self.upper_bound + slack):
                raise DomainError(
                    f"value {self.value} outside bounds [{self.lower_bound}, {self.upper_bound}]"
                )

    @property
    def unbounded(self) -> bool:
        return self.value == NEG_INFINITY

    def to_dict(self) -> dict:
        out = {
            "value": _encode(self.value),
            "method": self.method.value,
            "exact": bool(self.exact),
            "bounds": [_encode(self.lower_bound), _encode(self.upper_bound)],
        }
        if self.details:
            out["details"] = _jsonable(self.details)
        return out

    @classmethod
    def from_dict(cls, data: dict, allocation: Allocation | None = None) -> "SharingSolution":
        lo, hi = data["bounds"]
        return cls(
            value=_decode(data["value"]),
            method=CaseTag(data["method"]),
            exact=bool(data["exact"]),
            lower_bound=_decode(lo),
            upper_bound=_decode(hi),
            allocation=allocation,
            details=dict(data.get("details", {})),
        )


# ---------------------------------------------------------------------------
# existence and L-infinity


def check_existence(h1: Distortion, h2: Distortion, grid: int = GRID) -> bool:
    """Finite inf-convolution on bounded risks exists iff h1 >= dual(h2)."""
    return dominates(h1, h2, grid)


def existence_witness(h1: Distortion, h2: Distortion, grid: int = GRID) -> dict:
    """Zero-sum gamble Y = 2a 1_A - a, P(A) = m, driving the total down linearly in a.

    Agent 1 takes X + Y and agent 2 takes -Y; the total changes by
    ``slope * a`` with slope = 2 (h1(m) - dual(h2)(m)).
    """
    gap, m = dominance_gap(h1, h2, grid)
    return {"m": m, "violation": gap, "slope": -2.0 * gap}


def _is_constant(X: RandomVariable) -> float | None:
    vals, _ = X.distribution()
    return float(vals[0]) if vals.size == 1 else None


def _mirror_pair(h1: Distortion, h2: Distortion, grid: int) -> bool:
    ts = unit_grid(grid)
    return bool(np.max(np.abs(h2._eval(ts) - h1.dual()._eval(ts))) <= 1e-9)


def solve_linf(h1: Distortion, h2: Distortion, X: RandomVariable, grid: int = GRID) -> SharingSolution:
    """Inf-convolution over unconstrained (signed, bounded) allocations."""
    if not check_existence(h1, h2, grid):
        return SharingSolution(
            NEG_INFINITY, CaseTag.UNBOUNDED, True, NEG_INFINITY, NEG_INFINITY,
            details={"witness": existence_witness(h1, h2, grid)},
        )
    lattice = X if isinstance(X, LatticeRV) else None
    low = min_of([h1, h2], grid)
    if low.is_concave():
        v = rho(low, X)
        alloc = layer_allocation(lattice, [h1, h2]) if lattice is not None else None
        return SharingSolution(v, CaseTag.CONCAVE_MIN, True, v, v, alloc)
    for seeker, other, idx in ((h2, h1, 1), (h1, h2, 0)):
        if seeker.is_convex() and dominates(other, seeker, grid):
            v = rho(seeker, X)
            alloc = _whole_to(lattice, idx, 2) if lattice is not None else None
            return SharingSolution(v, CaseTag.CONVEX_DOMINATED, True, v, v, alloc)
    if _mirror_pair(h1, h2, grid) and (h1.is_concave() or h2.is_concave()):
        v = rho(low, X)
        return SharingSolution(v, CaseTag.MIRROR, True, v, v)
    c = _is_constant(X)
    if c is not None:
        return SharingSolution(c, CaseTag.ORACLE_ONLY, True, c, c)
    hi = min(rho(h1, X), rho(h2, X))
    return SharingSolution(hi, CaseTag.ORACLE_ONLY, False, NEG_INFINITY, hi)


# ---------------------------------------------------------------------------
# allocation builders


def _whole_to(X: LatticeRV, idx: int, n: int) -> Allocation:
    comps = [LatticeRV(np.zeros(X.n_atoms), signed=X.signed) for _ in range(n)]
    comps[idx] = X
    return Allocation(tuple(comps), X)


def layer_assignment(X: LatticeRV, hs: Sequence[Distortion]) -> list[np.ndarray]:
    """Give each exact layer of X to the agent with the smallest h at its survival level.

    Ties go to the lowest index. The resulting components are comonotonic.
    """
    comps = [np.zeros(X.n_atoms) for _ in hs]
    for height, mask in level_layers(X):
        s = mask.mean()
        costs = [float(h(s)) for h in hs]
        comps[int(np.argmin(costs))] += height * mask
    return comps


def layer_allocation(X: LatticeRV, hs: Sequence[Distortion]) -> Allocation:
    comps = layer_assignment(X, hs)
    return Allocation(tuple(LatticeRV(c, signed=X.signed) for c in comps), X)


def _tail_split(X: LatticeRV, prob: float, tail_first: bool) -> tuple[Allocation, float]:
    """Give X on {U_X > 1 - prob} to one agent and the rest to the other."""
    mask = X.upper_tail(prob)
    top = X.values * mask
    rest = X.values - top
    comps = (top, rest) if tail_first else (rest, top)
    snapped = mask.sum() / X.n_atoms
    return Allocation(tuple(LatticeRV(c) for c in comps), X), snapped


def _best_count(h1: Distortion, h2: Distortion, k: int, n: int) -> int:
    """Integer c in [0, k] minimizing h1(c/n) + h2((k-c)/n); smallest on ties."""
    c = np.arange(k + 1)
    tot = h1(c / n) + h2((k - c) / n)
    tot = np.atleast_1d(tot)
    return int(np.flatnonzero(tot <= tot.min() + 1e-12)[0])


def _measure(alloc: Allocation | None, hs: Sequence[Distortion], details: dict, value: float):
    if alloc is None:
        return
    total = alloc.total_cost(hs)
    details["allocation_total"] = total
    details["lattice_gap"] = total - value


# ---------------------------------------------------------------------------
# thresholds and bounds


def power_family_split(alpha: float, beta: float, x: float) -> tuple[float, float]:
    """Optimal split of probability x between 1-(1-t)^alpha and t^beta.

    Returns (y, x - y), where y is the share of the dual-power agent.
    """
    if not (1.0 < alpha < beta):
        raise ParameterError(f"need 1 < alpha < beta, got alpha={alpha}, beta={beta}")
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x must lie in [0, 1], got {x}")
    p0 = (alpha / beta) ** (1.0 / (beta - 1.0))
    if x <= p0:
        return 0.0, x
    if x == 1.0:
        y = 1.0 - (alpha / beta) ** (1.0 / (beta - alpha))
        return y, 1.0 - y

    def foc(y):
        return alpha * (1.0 - y) ** (alpha - 1.0) - beta * (x - y) ** (beta - 1.0)

    y = brentq(foc, 0.0, x, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return y, x - y


def power_threshold(alpha: float, beta: float) -> float:
    if not (1.0 < alpha < beta):
        raise ParameterError(f"need 1 < alpha < beta, got alpha={alpha}, beta={beta}")
    return (alpha / beta) ** (1.0 / (beta - 1.0))


def _derivative_threshold(h2: Distortion, grid: int) -> float:
    """sup{x > 0: right derivative of h2 at x <= 1}, rounded down on the grid."""
    if isinstance(h2, Power):
        if h2.beta == 1.0:
            return 1.0
        return min(1.0, h2.beta ** (-1.0 / (h2.beta - 1.0)))
    xs = unit_grid(grid)[:-1]
    d = np.asarray(h2.right_derivative(xs))
    ok = np.flatnonzero(d <= 1.0 + 1e-12)
    if ok.size == 0:
        return 0.0
    # first failure bounds the set from above for a convex h2
    bad = np.flatnonzero(d > 1.0 + 1e-12)
    if bad.size == 0:
        return 1.0
    i = int(bad[0]) - 1
    return float(xs[i]) if i >= 0 else 0.0


def small_prob_thresholds(
    h1: Distortion, h2: Distortion, curve: InfConvCurve | None = None, grid: int = GRID
) -> dict:
    """x_c = sup{x: (h1 [] h2)(x) = h2(x)} and x_d = sup{x: h2'(x+) <= 1}, both rounded down."""
    curve = curve if curve is not None else infconv_fn([h1, h2], grid)
    xs = curve.grid
    below = np.flatnonzero(curve.value < h2._eval(xs) - 1e-12)
    step = float(xs[1] - xs[0])
    if below.size == 0:
        x_c = 1.0
    else:
        x_c = max(0.0, float(xs[below[0]]) - 2.0 * step)
    x_d = _derivative_threshold(h2, grid)
    return {"x_c": x_c, "x_d": x_d}


def _small_prob_limit(h1: Distortion, h2: Distortion, curve: InfConvCurve | None, grid: int) -> dict | None:
    if not h2.is_convex():
        return None
    th = small_prob_thresholds(h1, h2, curve, grid)
    limit = th["x_c"] / 2.0
    if h1.is_concave():
        limit = max(limit, th["x_d"])
    th["threshold"] = limit
    return th


def _positive_prob(X: RandomVariable) -> float:
    vals, probs = X.distribution()
    return float(probs[vals > 0].sum())


def small_prob_case(
    h1: Distortion, h2: Distortion, X: RandomVariable, grid: int = GRID, lattice: int | None = None
) -> SharingSolution:
    """Risk-seeking agent bears everything when P(X > 0) is below the threshold."""
    _require_nonnegative(X)
    th = _small_prob_limit(h1, h2, None, grid)
    if th is None:
        raise PreconditionError("second distortion must be convex", {})
    p = _positive_prob(X)
    th["p_positive"] = p
    if p > th["threshold"] + 1e-12:
        raise PreconditionError(
            f"P(X > 0) = {p} exceeds threshold {th['threshold']}", th
        )
    v = rho(h2, X)
    L = _lattice_of(X, lattice)
    alloc = _whole_to(L, 1, 2) if L is not None else None
    details = dict(th)
    _measure(alloc, [h1, h2], details, v)
    return SharingSolution(v, CaseTag.SMALL_PROB, True, v, v, alloc, details)


def indicator_plus_constant_bounds(
    h1: Distortion, h2: Distortion, p: float, c: float, grid: int = GRID
) -> tuple[float, float]:
    """Bounds for the optimal total on 1_A + c with P(A) = p."""
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"p must lie in [0, 1], got {p}")
    if c < 0:
        raise DomainError(f"c must be nonnegative, got {c}")
    curve = infconv_fn([h1, h2], grid)
    g_p, g_1 = float(curve(p)), curve.at_one()
    lower = max(g_p, c * g_1)
    upper = c * g_1 + g_p
    return lower, upper


def lower_bound(h1: Distortion, h2: Distortion, X: RandomVariable, curve: InfConvCurve) -> float:
    """Largest of several valid lower bounds on the constrained optimal total."""
    vals, probs = X.distribution()
    if not np.any(vals > 0):
        return 0.0
    g = curve.as_distortion()
    tails = np.clip(np.round(np.cumsum(probs[::-1])[::-1], 12), 0.0, 1.0)
    bounds = [float(np.max(vals * curve(tails)))]
    xs = curve.grid[1:]
    bounds.append(float(np.min(curve.value[1:] / xs)) * float(np.dot(vals, probs)))
    gv = curve.value
    second = np.diff(gv, 2)
    if np.all(second <= 1e-9):
        bounds.append(rho(g, X))
    elif np.all(second >= -1e-9) and _positive_prob(X) <= 0.5:
        bounds.append(rho(g, X))
    return max(bounds)


# ---------------------------------------------------------------------------
# constructions


def _require_nonnegative(X: RandomVariable):
    vals, _ = X.distribution()
    if np.any(vals < 0):
        raise DomainError("nonnegative allocations require a nonnegative total risk")


def _lattice_of(X: RandomVariable, lattice: int | None) -> LatticeRV | None:
    if isinstance(X, LatticeRV):
        return X
    try:
        return X.to_lattice(lattice if lattice is not None else GRID - 1)
    except LatticeError:
        return None


def bernoulli_split(h1: Distortion, h2: Distortion, X: LatticeRV) -> Allocation:
    """Split a single-valued X = a 1_A into (a 1_B, a 1_{A minus B}) with the best lattice count.

    Agent 1 takes the atoms of A with the highest uniform ranks.
    """
    vals = np.unique(X.values[X.values > 0])
    if vals.size > 1:
        raise DomainError("bernoulli_split needs a risk with one positive value")
    mask = X.values > 0
    k = int(mask.sum())
    c = _best_count(h1, h2, k, X.n_atoms) if k else 0
    take = X.ranks() >= X.n_atoms - c
    y = X.values * take
    return Allocation((LatticeRV(y), LatticeRV(X.values - y)), X)


def two_indicator_split(
    h1: Distortion, h2: Distortion, X: LatticeRV
) -> tuple[Allocation, int]:
    """Nested-event construction for X = a 1_A + b 1_B on disjoint A, B with a < b.

    Returns the allocation and the nesting case (2, 3 or 4) that was used.
    """
    vals = np.unique(X.values[X.values > 0])
    if vals.size != 2:
        raise DomainError("two_indicator_split needs exactly two positive values")
    a, b = float(vals[0]), float(vals[1])
    N = X.n_atoms
    ranks = X.ranks()
    k1 = int(np.count_nonzero(X.values > 0))
    k2 = int(np.count_nonzero(X.values == b))
    c1 = _best_count(h1, h2, k1, N)
    c2 = _best_count(h1, h2, k2, N)
    # positions in the uniform order: B' occupies the top k2 ranks, A' the top k1
    b_pos = np.arange(N - k2, N)
    a_only = np.arange(N - k1, N - k2)
    if c1 <= c2 and k1 - c1 >= k2 - c2:
        case = 2
        C = b_pos[:c1]
        D = b_pos[:c2]
    elif c1 >= c2 and k1 - c1 >= k2 - c2:
        case = 3
        D = b_pos[:c2]
        C = np.concatenate([D, a_only[: c1 - c2]])
    elif c1 >= c2:
        case = 4
        D = b_pos[:c2]
        extra = c1 - c2 - (k1 - k2)
        C = np.concatenate([D, a_only, b_pos[c2:c2 + extra]])
    else:
        raise DomainError("nesting case 1 only arises when the lower event is null")
    in_c = np.isin(ranks, C)
    in_d = np.isin(ranks, D)
    y = a * in_c + (b - a) * in_d
    return Allocation((LatticeRV(y), LatticeRV(X.values - y)), X), case


def _dyadic_counts(X: LatticeRV, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Thresholds k/2^n and atom counts of {X >= k/2^n} for every nonempty layer."""
    step = 2.0 ** -n
    top = min(n * 2**n, int(np.floor(float(np.max(X.values)) / step + 1e-9)))
    levels = np.arange(1, top + 1) * step
    sorted_vals = np.sort(X.values)
    counts = X.n_atoms - np.searchsorted(sorted_vals, levels - 1e-12, side="left")
    return levels, counts


def _coin_build(
    h1: Distortion, h2: Distortion, X: LatticeRV, n: int, curve: InfConvCurve, strict: bool
) -> tuple[Allocation, dict]:
    N = X.n_atoms
    levels, counts = _dyadic_counts(X, n)
    step = 2.0 ** -n
    xn = np.minimum(np.floor(X.values / step + 1e-9) * step, float(n))
    if levels.size == 0:
        alloc = Allocation((LatticeRV(np.zeros(N)), X), X)
        return alloc, {"layers": 0, "dyadic_gap": float(np.max(X.values - xn)), "snap": 0.0}
    probs = counts / N
    shares = np.array([curve.split(p)[0] for p in probs])
    resid = probs - shares
    # layers are indexed bottom-up, so probabilities and both shares must not increase with k
    if np.any(np.diff(shares) > TOL) or np.any(np.diff(resid) > TOL):
        raise CoinError("optimal split is not monotone at the layer probabilities of X")
    raw = shares * N
    snap = float(np.max(np.abs(raw - np.round(raw))) / N)
    if strict and snap > 1e-9:
        raise LatticeError(f"a layer split is off the lattice by {snap:.3g}")
    # clamp from the top layer down so that B and A minus B stay nested
    K = levels.size
    c = np.empty(K, dtype=int)
    c[-1] = min(max(int(round(raw[-1])), 0), int(counts[-1]))
    for k in range(K - 2, -1, -1):
        band = int(counts[k] - counts[k + 1])
        c[k] = min(max(int(round(raw[k])), c[k + 1]), c[k + 1] + band)
    chosen = np.zeros(N, dtype=bool)
    order = X.order()
    prev_c, prev_m = 0, 0
    for k in range(K - 1, -1, -1):
        m = int(counts[k])
        d = int(c[k] - prev_c)
        if d > 0:
            # lowest-ranked atoms of the band A^k minus A^{k+1}
            chosen[order[N - m:N - m + d]] = True
        prev_c, prev_m = int(c[k]), m
    y = xn * chosen
    alloc = Allocation((LatticeRV(y), LatticeRV(X.values - y)), X)
    info = {
        "layers": int(K),
        "dyadic_gap": float(np.max(X.values - xn)),
        "snap": snap,
    }
    return alloc, info


def coin_construct(
    h1: Distortion,
    h2: Distortion,
    X: LatticeRV,
    n: int = DEFAULT_DYADIC,
    curve: InfConvCurve | None = None,
    grid: int = GRID,
    strict: bool = False,
) -> Allocation:
    """Layered allocation attaining rho of (h1 [] h2) on the dyadic approximation of X.

    Agent 1 receives the dyadic part of X on a set assembled band by band
    from the optimal splits of each layer probability; agent 2 receives the
    rest, including the sub-dyadic remainder.
    """
    if n < 1:
        raise DomainError(f"dyadic resolution must be at least 1, got {n}")
    _require_nonnegative(X)
    curve = curve if curve is not None else infconv_fn([h1, h2], grid)
    return _coin_build(h1, h2, X, n, curve, strict)[0]


# ---------------------------------------------------------------------------
# dispatch


def _exact_case(
    h1: Distortion, h2: Distortion, X: RandomVariable, L: LatticeRV | None, curve: InfConvCurve, grid: int
) -> SharingSolution | None:
    """First applicable closed-form case among VaR, piecewise-linear, dominance, concave-min, small-probability."""
    hs = [h1, h2]
    for var_idx, (hv, other) in enumerate(((h1, h2), (h2, h1))):
        if isinstance(hv, VaRIndicator) and not hv.closed:
            v = rho(shift(other, hv.alpha), X)
            alloc, snapped = _tail_split(L, hv.alpha, tail_first=(var_idx == 0)) if L is not None else (None, None)
            details = {"alpha": hv.alpha, "var_agent": var_idx + 1}
            if snapped is not None:
                details["tail_prob"] = snapped
            _measure(alloc, hs, details, v)
            return SharingSolution(v, CaseTag.VAR_LEMMA, True, v, v, alloc, details)
    for seek_idx, (hs_, hc) in enumerate(((h1, h2), (h2, h1))):
        a = shifted_linear_level(hs_)
        b = capped_linear_level(hc)
        if a is not None and b is not None and a + b >= 1.0 - 1e-12:
            v = rho(curve.as_distortion(), X)
            alloc, snapped = _tail_split(L, a, tail_first=(seek_idx == 0)) if L is not None else (None, None)
            details = {"a": a, "b": b}
            if snapped is not None:
                details["tail_prob"] = snapped
            _measure(alloc, hs, details, v)
            return SharingSolution(v, CaseTag.PWL_PAIR, True, v, v, alloc, details)
    for idx, (seeker, other) in ((1, (h2, h1)), (0, (h1, h2))):
        if seeker.is_convex() and dominates(other, seeker, grid):
            v = rho(seeker, X)
            alloc = _whole_to(L, idx, 2) if L is not None else None
            details: dict = {}
            _measure(alloc, hs, details, v)
            return SharingSolution(v, CaseTag.CONVEX_DOMINATED, True, v, v, alloc, details)
    low = min_of(hs, grid)
    if low.is_concave():
        v = rho(low, X)
        alloc = layer_allocation(L, hs) if L is not None else None
        details = {}
        _measure(alloc, hs, details, v)
        return SharingSolution(v, CaseTag.CONCAVE_MIN, True, v, v, alloc, details)
    p = _positive_prob(X)
    for idx, (first, second) in ((1, (h1, h2)), (0, (h2, h1))):
        c = curve if idx == 1 else None
        th = _small_prob_limit(first, second, c, grid)
        if th is not None and p <= th["threshold"] + 1e-12:
            v = rho(second, X)
            alloc = _whole_to(L, idx, 2) if L is not None else None
            details = dict(th, p_positive=p)
            _measure(alloc, hs, details, v)
            return SharingSolution(v, CaseTag.SMALL_PROB, True, v, v, alloc, details)
    return None


def solve_lplus(
    h1: Distortion,
    h2: Distortion,
    X: RandomVariable,
    *,
    grid: int = GRID,
    dyadic: int = DEFAULT_DYADIC,
    lattice: int | None = None,
    tol: float | None = None,
    curve: InfConvCurve | None = None,
) -> SharingSolution:
    """Optimal sharing of a nonnegative risk between two agents with nonnegative shares.

    Closed forms are tried from most to least specific; otherwise the value
    is bracketed and, when the optimal split is monotone at the layer
    probabilities of X, realized by the layered construction.
    """
    _require_nonnegative(X)
    curve = curve if curve is not None else infconv_fn([h1, h2], grid)
    tol = curve.tolerance if tol is None else tol
    hs = [h1, h2]
    L = _lattice_of(X, lattice)
    vals, probs = X.distribution()
    positive = vals[vals > 0]

    if positive.size <= 1:
        a = float(positive[0]) if positive.size else 0.0
        p = float(probs[vals > 0].sum())
        v = a * float(curve(p)) if positive.size else 0.0
        alloc = bernoulli_split(h1, h2, L) if L is not None else None
        details = {"p": p, "a": a, "split": curve.split(p).tolist()}
        _measure(alloc, hs, details, v)
        return SharingSolution(v, CaseTag.BERNOULLI, True, v, v, alloc, details)

    exact_case = _exact_case(h1, h2, X, L, curve, grid)
    g = curve.as_distortion()

    if positive.size == 2:
        upper = rho(g, X)
        lower = exact_case.value if exact_case is not None else lower_bound(h1, h2, X, curve)
        lower = min(lower, upper)
        details = {}
        alloc = None
        if L is not None:
            alloc, case = two_indicator_split(h1, h2, L)
            details["nesting_case"] = case
        _measure(alloc, hs, details, upper)
        if exact_case is not None:
            details["confirmed_by"] = exact_case.method.value
        return SharingSolution(upper, CaseTag.TWO_INDICATORS, upper - lower <= tol, lower, upper, alloc, details)

    if exact_case is not None:
        return exact_case

    lower = lower_bound(h1, h2, X, curve)
    details = {}
    if L is not None:
        try:
            alloc, info = _coin_build(h1, h2, L, dyadic, curve, strict=False)
        except CoinError:
            alloc, info = None, None
    else:
        alloc, info = None, _coin_check(X, curve)
    if info is not None:
        upper = rho(g, X)
        details.update(info)
        details["coin"] = True
        _measure(alloc, hs, details, upper)
        lower = min(lower, upper)
        return SharingSolution(upper, CaseTag.COIN_SANDWICH, upper - lower <= tol, lower, upper, alloc, details)
    # without a monotone split only the layered concave-min allocation is certified
    upper = rho(min_of(hs, grid), X)
    alloc = layer_allocation(L, hs) if L is not None else None
    details["coin"] = False
    _measure(alloc, hs, details, upper)
    lower = min(lower, upper)
    return SharingSolution(upper, CaseTag.ORACLE_ONLY, upper - lower <= tol, lower, upper, alloc, details)


def _coin_check(X: RandomVariable, curve: InfConvCurve) -> dict | None:
    vals, probs = X.distribution()
    tails = np.clip(np.round(np.cumsum(probs[::-1])[::-1], 12), 0.0, 1.0)[vals > 0]
    shares = np.array([curve.split(p)[0] for p in tails])
    resid = tails - shares
    if np.any(np.diff(shares) > TOL) or np.any(np.diff(resid) > TOL):
        return None
    return {"layers": int(tails.size)}
