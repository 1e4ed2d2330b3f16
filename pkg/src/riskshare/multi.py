"""n-agent economies with risk-averse and risk-seeking members."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .distortion import (
    GRID,
    Distortion,
    InfConvCurve,
    PiecewiseLinear,
    capped_linear,
    dominates,
    from_dict as distortion_from_dict,
    infconv_fn,
    min_of,
    normalize,
    ramp,
    shifted_linear,
    unit_grid,
)
from .errors import DegenerateError, DomainError, NotCoveredError, ParameterError
from .randvar import (
    Allocation,
    LatticeRV,
    RandomVariable,
    is_comonotonic,
    is_counter_monotonic,
    level_layers,
    risk_from_dict,
    rho,
)
from .sharing2 import (
    DEFAULT_DYADIC,
    CaseTag,
    SharingSolution,
    _jsonable,
    _lattice_of,
    layer_assignment,
    solve_lplus,
)


class Attitude(str, Enum):
    AVERSE = "averse"
    SEEKING = "seeking"
    OTHER = "other"


def classify(h: Distortion) -> Attitude:
    """Concave (including linear) is averse, convex is seeking, anything else is other."""
    if h.is_concave():
        return Attitude.AVERSE
    if h.is_convex():
        return Attitude.SEEKING
    return Attitude.OTHER


@dataclass(frozen=True)
class Agent:
    id: str
    h: Distortion
    attitude: Attitude | None = None

    def __post_init__(self):
        actual = classify(self.h)
        if self.attitude is None:
            object.__setattr__(self, "attitude", actual)
        else:
            stated = Attitude(self.attitude)
            if stated != actual and not (stated == Attitude.SEEKING and self.h.is_convex()):
                raise DomainError(f"agent {self.id!r} is tagged {stated.value} but its distortion is {actual.value}")
            object.__setattr__(self, "attitude", stated)


@dataclass(frozen=True, eq=False)
class Economy:
    agents: tuple[Agent, ...]
    risk: RandomVariable

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise DomainError("an economy needs at least one agent")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise DomainError("agent ids must be unique")
        vals, _ = self.risk.distribution()
        if np.any(vals < 0):
            raise DomainError("economies share nonnegative risks only")

    @classmethod
    def from_dict(cls, data: dict) -> "Economy":
        try:
            agents = [
                Agent(str(a.get("id", f"agent{i + 1}")), distortion_from_dict(a["h"]), a.get("attitude"))
                for i, a in enumerate(data["agents"])
            ]
            return cls(tuple(agents), risk_from_dict(data["risk"]))
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed economy JSON: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "agents": [{"id": a.id, "h": a.h.to_dict(), "attitude": a.attitude.value} for a in self.agents],
            "risk": self.risk.to_dict(),
        }

    def indices(self, attitude: Attitude) -> list[int]:
        return [i for i, a in enumerate(self.agents) if a.attitude == attitude]


@dataclass(frozen=True, eq=False)
class Reduction:
    """Representative agents of each group; either may be absent."""

    g1: Distortion | None
    g2: Distortion | None
    scale: float | None
    g2_normalized: Distortion | None
    seeking_curve: InfConvCurve | None
    averse: tuple[int, ...]
    seeking: tuple[int, ...]

    def __iter__(self):
        yield self.g1
        yield self.g2
        yield self.scale


def reduce(e: Economy, grid: int = GRID) -> Reduction:
    others = e.indices(Attitude.OTHER)
    if others:
        names = [e.agents[i].id for i in others]
        raise DomainError(f"agents {names} are neither concave nor convex")
    averse = e.indices(Attitude.AVERSE)
    seeking = e.indices(Attitude.SEEKING)
    g1 = min_of([e.agents[i].h for i in averse], grid) if averse else None
    g2 = scale = g2n = curve = None
    if seeking:
        hs = [e.agents[i].h for i in seeking]
        curve = infconv_fn(hs, grid)
        g2 = hs[0] if len(hs) == 1 else curve.as_distortion()
        scale = g2.at_one()
        try:
            g2n = normalize(g2)[0]
        except DegenerateError:
            g2n = None
    return Reduction(g1, g2, scale, g2n, curve, tuple(averse), tuple(seeking))


def disjoint_layer_split(Z: LatticeRV, curve: InfConvCurve) -> tuple[list[np.ndarray], bool]:
    """Split Z into pieces with disjoint supports following the group selector.

    Working from the top layer down, each band of atoms between consecutive
    level sets is shared out so that agent j's part of {Z > v} has about
    selector_j(P(Z > v)) N atoms. Returns the pieces and whether the
    selector was monotone at the layer probabilities used.
    """
    n = curve.n_agents
    N = Z.n_atoms
    layers = level_layers(Z)
    owner = np.full(N, -1)
    order = Z.order()
    counts = [int(mask.sum()) for _, mask in layers]
    shares = [curve.split(c / N) * N for c in counts]
    monotone = True
    held = np.zeros(n, dtype=int)
    prev = 0
    for k in range(len(layers) - 1, -1, -1):
        m = counts[k]
        band = m - prev
        if band <= 0:
            continue
        want = shares[k] - held
        if np.any(want < -1e-6):
            monotone = False
        want = np.maximum(want, 0.0)
        add = _apportion(want, band)
        pos = N - m
        for j in range(n):
            owner[order[pos:pos + add[j]]] = j
            pos += add[j]
        held += add
        prev = m
    pieces = [np.where(owner == j, Z.values, 0.0) for j in range(n)]
    return pieces, monotone


def _apportion(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer split of ``total`` close to ``weights`` (largest remainder), respecting the sum."""
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        out = np.zeros(w.size, dtype=int)
        out[-1] = total
        return out
    scaled = w / w.sum() * total if abs(w.sum() - total) > 0.5 else w.copy()
    base = np.floor(scaled + 1e-9).astype(int)
    while base.sum() > total:
        base[int(np.argmax(base))] -= 1
    rem = scaled - base
    for j in np.argsort(-rem, kind="stable")[: total - base.sum()]:
        base[j] += 1
    return base


def _strict(h: Distortion, sign: float) -> bool:
    xs = unit_grid(201)
    d2 = np.diff(h._eval(xs), 2)
    return bool(np.all(sign * d2 > 1e-12))


@dataclass
class EconomySolution:
    solution: SharingSolution
    allocation: Allocation | None
    per_agent: list[dict]
    reduction: Reduction
    dependence: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.solution.value

    def to_dict(self) -> dict:
        out = self.solution.to_dict()
        out["per_agent"] = _jsonable(self.per_agent)
        if self.dependence:
            out["dependence"] = _jsonable(self.dependence)
        return out


def _finish(
    e: Economy, sol: SharingSolution, comps: list[np.ndarray] | None, L: LatticeRV | None, red: Reduction, extra: dict
) -> EconomySolution:
    alloc = None
    per_agent = []
    dependence = dict(extra)
    if comps is not None and L is not None:
        alloc = Allocation(tuple(LatticeRV(c) for c in comps), L)
        for i, (a, c) in enumerate(zip(e.agents, alloc.components)):
            per_agent.append({"id": a.id, "rho": rho(a.h, c), "allocation_csv_column": f"x{i + 1}"})
        total = sum(p["rho"] for p in per_agent)
        sol.details["allocation_total"] = total
        sol.details["lattice_gap"] = total - sol.value if np.isfinite(sol.value) else None
        av = [alloc.components[i] for i in red.averse]
        sk = [alloc.components[i] for i in red.seeking]
        dependence["averse_comonotonic"] = is_comonotonic(av) if len(av) > 1 else True
        dependence["seeking_counter_monotonic"] = is_counter_monotonic(sk) if len(sk) > 1 else True
        dependence["strict"] = all(_strict(e.agents[i].h, -1.0) for i in red.averse) and all(
            _strict(e.agents[i].h, 1.0) for i in red.seeking
        )
    else:
        per_agent = [{"id": a.id, "rho": None, "allocation_csv_column": None} for a in e.agents]
    return EconomySolution(sol, alloc, per_agent, red, dependence)


def solve_n(
    e: Economy, *, grid: int = GRID, dyadic: int = DEFAULT_DYADIC, lattice: int | None = None
) -> EconomySolution:
    """Reduce to two representative agents, solve, and share each part within its group."""
    red = reduce(e, grid)
    X = e.risk
    L = _lattice_of(X, lattice)
    n = len(e.agents)

    def seekers_take(Z: np.ndarray, comps: list[np.ndarray]) -> bool:
        if len(red.seeking) == 1:
            comps[red.seeking[0]] += Z
            return True
        pieces, ok = disjoint_layer_split(LatticeRV(Z), red.seeking_curve)
        for j, idx in enumerate(red.seeking):
            comps[idx] += pieces[j]
        return ok

    def averse_take(Y: np.ndarray, comps: list[np.ndarray]):
        hs = [e.agents[i].h for i in red.averse]
        for j, piece in enumerate(layer_assignment(LatticeRV(Y), hs)):
            comps[red.averse[j]] += piece

    if not red.seeking:
        v = rho(red.g1, X)
        sol = SharingSolution(v, CaseTag.CONCAVE_MIN, True, v, v)
        comps = None
        if L is not None:
            comps = [np.zeros(L.n_atoms) for _ in range(n)]
            averse_take(L.values, comps)
        return _finish(e, sol, comps, L, red, {})

    dominated = not red.averse or any(dominates(red.g1, e.agents[j].h, grid) for j in red.seeking)
    if dominated:
        v = rho(red.g2, X)
        sol = SharingSolution(v, CaseTag.CONVEX_DOMINATED, True, v, v)
        comps = None
        extra = {}
        if L is not None:
            comps = [np.zeros(L.n_atoms) for _ in range(n)]
            extra["selector_monotone"] = seekers_take(L.values.astype(float), comps)
        return _finish(e, sol, comps, L, red, extra)

    sol = solve_lplus(red.g1, red.g2, X, grid=grid, dyadic=dyadic, lattice=lattice)
    comps = None
    extra = {}
    if sol.allocation is not None:
        Y, Z = (c.values for c in sol.allocation.components)
        comps = [np.zeros(L.n_atoms) for _ in range(n)]
        averse_take(np.asarray(Y, dtype=float), comps)
        extra["selector_monotone"] = seekers_take(np.asarray(Z, dtype=float), comps)
    return _finish(e, sol, comps, sol.allocation.total if sol.allocation is not None else L, red, extra)


def pwl_n_agent(
    b_list: Sequence[float], a_list: Sequence[float], X: RandomVariable, *, lattice: int | None = None
) -> SharingSolution:
    """Closed forms for min{x/b_i, 1} averse agents and max{0,(x-a_j)/(1-a_j)} seeking agents.

    The allocation lists the averse agents first, then the seeking ones.
    """
    b = np.asarray(b_list, dtype=float)
    a = np.asarray(a_list, dtype=float)
    if b.size == 0 or a.size == 0:
        raise ParameterError("need at least one agent of each kind")
    if np.any((b <= 0) | (b >= 1)) or np.any((a <= 0) | (a >= 1)):
        raise ParameterError("all a_i and b_i must lie in (0, 1)")
    if a.sum() > 1.0 + 1e-12:
        raise ParameterError(f"sum of a_i must not exceed 1, got {a.sum()}")
    vals, _ = X.distribution()
    if np.any(vals < 0):
        raise DomainError("risk must be nonnegative")
    bmax, amin, asum = float(b.max()), float(a.min()), float(a.sum())
    L = _lattice_of(X, lattice)
    m = b.size
    details = {"b": bmax, "sum_a": asum}
    if np.any(a + bmax <= 1.0 + 1e-12):
        g = _gain(asum, 1.0 - amin)
        v = rho(g, X)
        alloc = None
        if L is not None:
            curve = infconv_fn([shifted_linear(x) for x in a])
            pieces, _ = disjoint_layer_split(L, curve)
            comps = [np.zeros(L.n_atoms) for _ in range(m)] + pieces
            alloc = Allocation(tuple(LatticeRV(c) for c in comps), L)
        sol = SharingSolution(v, CaseTag.CONVEX_DOMINATED, True, v, v, alloc, dict(details, case="i"))
    elif amin + bmax > 1.0:
        g = _gain(asum, bmax)
        v = rho(g, X)
        alloc = None
        if L is not None:
            N = L.n_atoms
            order = L.order()
            owner = np.full(N, -1)
            pos = N
            for j, aj in enumerate(a):
                k = int(round(aj * N))
                owner[order[max(pos - k, 0):pos]] = m + j
                pos -= k
            owner[owner < 0] = int(np.argmax(b))
            comps = [np.where(owner == i, L.values, 0.0) for i in range(m + a.size)]
            alloc = Allocation(tuple(LatticeRV(c) for c in comps), L)
        sol = SharingSolution(v, CaseTag.PWL_PAIR, True, v, v, alloc, dict(details, case="ii"))
    else:
        raise NotCoveredError(
            "parameters fall between the two closed-form cases",
            {"b": bmax, "min_a": amin, "a_plus_b": (a + bmax).tolist()},
        )
    if alloc is not None:
        hs = [capped_linear(x) for x in b] + [shifted_linear(x) for x in a]
        total = alloc.total_cost(hs)
        sol.details["allocation_total"] = total
        sol.details["lattice_gap"] = total - v
    return sol



def _gain(start: float, width: float) -> Distortion:
    """max{0, (t - start) / width}; identically zero once start reaches 1."""
    if start >= 1.0 - 1e-12:
        return PiecewiseLinear(((0.0, 0.0), (1.0, 0.0)))
    return ramp(start, width)
