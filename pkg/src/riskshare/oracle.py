"""Brute-force minimization of summed distortion risk over gridded allocations.

Each atom's total is split among the agents on the simplex grid
{x k / L : k in Z^n, k >= 0, sum(k) = L}. Atoms with equal value, weight
and block label are exchangeable, so only multisets of splits within each
such class are enumerated; this leaves the minimum unchanged because every
distortion risk measure is law invariant.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb, prod
from typing import Sequence

import numpy as np

from .distortion import Distortion
from .errors import BudgetError, DomainError
from .randvar import Allocation, DiscreteRV, LatticeRV, rho_batch

DEFAULT_BUDGET = 10**8
DEFAULT_LEVELS = 10
N_MAX = 8
_CHUNK_CELLS = 400_000
_TIE = 1e-12


def budget_from_env() -> int:
    raw = os.environ.get("RISKSHARE_BUDGET")
    if raw is None:
        return DEFAULT_BUDGET
    try:
        return int(float(raw))
    except ValueError as exc:
        raise DomainError(f"RISKSHARE_BUDGET must be a number, got {raw!r}") from exc


@dataclass(frozen=True, eq=False)
class OracleProblem:
    """Agents, weighted atoms of the total risk, and the per-atom grid size."""

    hs: tuple[Distortion, ...]
    values: np.ndarray
    weights: np.ndarray
    levels: int = DEFAULT_LEVELS
    labels: np.ndarray | None = None
    expand: np.ndarray | None = None  # atom index per original lattice atom, when collapsed

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if vals.ndim != 1 or vals.shape != w.shape or vals.size == 0:
            raise DomainError("values and weights must be matching nonempty vectors")
        if np.any(vals < 0):
            raise DomainError("oracle works with nonnegative risks only")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError("atom weights must be nonnegative and sum to 1")
        if not self.hs:
            raise DomainError("oracle needs at least one agent")
        if self.levels < 1:
            raise DomainError(f"levels must be positive, got {self.levels}")
        object.__setattr__(self, "hs", tuple(self.hs))
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", w)
        labels = np.zeros(vals.size, dtype=int) if self.labels is None else np.asarray(self.labels)
        object.__setattr__(self, "labels", labels)

    @property
    def n_agents(self) -> int:
        return len(self.hs)

    @property
    def n_atoms(self) -> int:
        return self.values.size

    def with_levels(self, levels: int) -> "OracleProblem":
        return OracleProblem(self.hs, self.values, self.weights, levels, self.labels, self.expand)

    @classmethod
    def from_lattice(
        cls,
        hs: Sequence[Distortion],
        X: LatticeRV,
        levels: int = DEFAULT_LEVELS,
        blocks: Sequence[int] | None = None,
        n_max: int = N_MAX,
    ) -> "OracleProblem":
        """Equal-weight atoms of a lattice risk.

        With ``blocks`` (one label per atom) allocations must be constant on
        each block, as on a coarser sample space; each block becomes one
        weighted atom.
        """
        if X.n_atoms > n_max:
            raise DomainError(f"oracle lattice has {X.n_atoms} atoms, limit is {n_max}")
        if blocks is None:
            return cls(tuple(hs), X.values, X.probs, levels)
        blocks = np.asarray(blocks)
        if blocks.shape != (X.n_atoms,):
            raise DomainError("need one block label per atom")
        labels = list(dict.fromkeys(blocks.tolist()))
        vals, weights = [], []
        for lab in labels:
            sel = blocks == lab
            v = X.values[sel]
            if np.ptp(v) > 0:
                raise DomainError(f"risk is not constant on block {lab!r}")
            vals.append(float(v[0]))
            weights.append(sel.sum() / X.n_atoms)
        expand = np.array([labels.index(b) for b in blocks.tolist()])
        return cls(tuple(hs), np.array(vals), np.array(weights), levels, np.arange(len(labels)), expand)

    @classmethod
    def from_discrete(
        cls, hs: Sequence[Distortion], X: DiscreteRV, n_atoms: int = N_MAX, levels: int = DEFAULT_LEVELS
    ) -> "OracleProblem":
        """Embed a finite law on ``n_atoms`` weighted atoms.

        The zero outcome keeps a single atom (its shares are forced to 0);
        positive outcomes share the remaining atoms in proportion to their
        probabilities, each split into equal-weight pieces.
        """
        vals, probs = X.distribution()
        if np.any(vals < 0):
            raise DomainError("oracle works with nonnegative risks only")
        zero = vals == 0
        pos_vals, pos_probs = vals[~zero], probs[~zero]
        free = n_atoms - int(zero.any())
        if pos_vals.size > free:
            raise DomainError(f"{pos_vals.size} positive outcomes do not fit on {n_atoms} atoms")
        counts = np.ones(pos_vals.size, dtype=int)
        spare = free - counts.sum()
        if spare > 0 and pos_vals.size:
            share = pos_probs / pos_probs.sum() * free
            extra = np.floor(np.maximum(share - 1, 0)).astype(int)
            while extra.sum() > spare:
                extra[int(np.argmax(extra))] -= 1
            counts += extra
            rem = share - counts
            for i in np.argsort(-rem, kind="stable")[: free - counts.sum()]:
                counts[i] += 1
        out_v, out_w = [], []
        if zero.any():
            out_v.append(0.0)
            out_w.append(float(probs[zero].sum()))
        for v, p, c in zip(pos_vals, pos_probs, counts):
            out_v.extend([float(v)] * int(c))
            out_w.extend([float(p) / int(c)] * int(c))
        return cls(tuple(hs), np.array(out_v), np.array(out_w), levels)


@dataclass(frozen=True, eq=False)
class OracleResult:
    value: float
    shares: np.ndarray
    delta: float
    candidates: int
    certificate: float | None = None
    allocation: Allocation | None = None

    def __iter__(self):
        yield self.value
        yield self.allocation


def compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``, lexicographic."""
    if parts == 1:
        return np.array([[total]])
    rows = []
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            rows.append([first, *rest])
    return np.array(rows)


def _classes(p: OracleProblem) -> list[np.ndarray]:
    """Indices of exchangeable positive atoms, in order of first appearance."""
    groups: dict[tuple, list[int]] = {}
    for j in range(p.n_atoms):
        if p.values[j] > 0:
            key = (float(p.values[j]), float(p.weights[j]), int(p.labels[j]))
            groups.setdefault(key, []).append(j)
    return [np.array(g) for g in groups.values()]


def search_size(p: OracleProblem) -> int:
    types = comb(p.levels + p.n_agents - 1, p.n_agents - 1)
    return prod(comb(types + len(c) - 1, len(c)) for c in _classes(p))


def gap_bound(p: OracleProblem) -> float:
    """Upper bound on (grid minimum) - (minimum over all splits on these atoms).

    Rounding every share but one down to the grid and handing the slack to
    the agent with the smallest h(1) raises that agent's risk by at most
    h(1) (n - 1) max(X) / L and lowers nobody else's.
    """
    if p.n_agents == 1:
        return 0.0
    scale = min(h.at_one() for h in p.hs)
    return (p.n_agents - 1) * max(scale, 0.0) * float(np.max(p.values)) / p.levels


def _pairwise_ok(shares: list[np.ndarray], sign: float) -> np.ndarray:
    ok = np.ones(shares[0].shape[0], dtype=bool)
    diffs = [s[:, :, None] - s[:, None, :] for s in shares]
    for i in range(len(shares)):
        for j in range(i + 1, len(shares)):
            ok &= np.all(sign * diffs[i] * diffs[j] >= -1e-12, axis=(1, 2))
    return ok


def _search(p: OracleProblem, restrict: str | None, budget: int | None) -> tuple[float, np.ndarray, int]:
    budget = budget_from_env() if budget is None else budget
    size = search_size(p)
    if size > budget:
        raise BudgetError(size, budget)
    comps = compositions(p.levels, p.n_agents)
    classes = _classes(p)
    options = [np.array(list(combinations_with_replacement(range(len(comps)), len(c)))) for c in classes]
    radices = [len(o) for o in options]
    strides = [prod(radices[i + 1:]) for i in range(len(radices))]
    M, n = p.n_atoms, p.n_agents
    chunk = max(1, _CHUNK_CELLS // max(M * n, 1))
    best_val = np.inf
    best_shares = np.zeros((n, M))
    for start in range(0, size, chunk):
        g = np.arange(start, min(start + chunk, size))
        levels = np.zeros((g.size, M, n))
        for cls, opt, stride, radix in zip(classes, options, strides, radices):
            pick = opt[(g // stride) % radix]  # (chunk, class size) indices into comps
            levels[:, cls, :] = comps[pick]
        shares = [levels[:, :, i] * (p.values / p.levels) for i in range(n)]
        total = sum(rho_batch(h, s, p.weights) for h, s in zip(p.hs, shares))
        if restrict is not None:
            ok = _pairwise_ok(shares, 1.0 if restrict == "co" else -1.0)
            total = np.where(ok, total, np.inf)
        k = int(np.argmin(total))
        if total[k] < best_val - _TIE:
            first = int(np.flatnonzero(total <= total[k] + _TIE)[0])
            best_val = float(total[first])
            best_shares = np.array([s[first] for s in shares])
    return best_val, best_shares, size


def _to_allocation(p: OracleProblem, shares: np.ndarray, X: LatticeRV | None) -> Allocation | None:
    if p.expand is not None:
        total = LatticeRV(p.values[p.expand])
        return Allocation(tuple(LatticeRV(s[p.expand]) for s in shares), total)
    if np.allclose(p.weights, 1.0 / p.n_atoms):
        total = LatticeRV(p.values)
        return Allocation(tuple(LatticeRV(s) for s in shares), total)
    return None


def _run(p: OracleProblem, restrict: str | None, budget: int | None, certify: bool | None) -> OracleResult:
    value, shares, size = _search(p, restrict, budget)
    cert = None
    if certify or certify is None:
        fine = p.with_levels(2 * p.levels)
        b = budget_from_env() if budget is None else budget
        affordable = search_size(fine) <= min(b, 2_000_000)
        if certify or affordable:
            cert = value - _search(fine, restrict, budget)[0]
    return OracleResult(value, shares, gap_bound(p), size, cert, _to_allocation(p, shares, None))


def brute_min(p: OracleProblem, budget: int | None = None, certify: bool | None = None) -> OracleResult:
    """Exact minimum of sum_i rho_{h_i}(X_i) over gridded allocations.

    ``certify=None`` re-solves at 2L when that search is small and records
    value(L) - value(2L) as ``certificate``; True forces it, False skips it.
    """
    return _run(p, None, budget, certify)


def enumerate_comonotone(p: OracleProblem, budget: int | None = None, certify: bool | None = False) -> OracleResult:
    return _run(p, "co", budget, certify)


def enumerate_counter(p: OracleProblem, budget: int | None = None, certify: bool | None = False) -> OracleResult:
    return _run(p, "counter", budget, certify)


def monotonicity_probe(
    h1: Distortion,
    h2: Distortion,
    X_low: LatticeRV,
    X_high: LatticeRV,
    levels: int = DEFAULT_LEVELS,
    budget: int | None = None,
) -> bool:
    """Check value(X_low) <= value(X_high) + delta for atomwise ordered risks."""
    if X_low.n_atoms != X_high.n_atoms:
        raise DomainError("risks live on lattices of different sizes")
    if np.any(X_low.values > X_high.values + 1e-12):
        raise DomainError("X_low must not exceed X_high atomwise")
    lo = brute_min(OracleProblem.from_lattice([h1, h2], X_low, levels), budget, certify=False)
    hi = brute_min(OracleProblem.from_lattice([h1, h2], X_high, levels), budget, certify=False)
    return lo.value <= hi.value + max(lo.delta, hi.delta) + 1e-12
