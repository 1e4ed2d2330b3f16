"""Finite random variables, distortion risk measures, and dependence predicates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .distortion import Distortion, VaRIndicator, capped_linear
from .errors import DomainError, LatticeError

_NEG_SLACK = 1e-12
_PROB_DIGITS = 14


class LatticeRV:
    """A random variable on N equal-probability atoms.

    Atom k (0-based) stands for the uniform index interval (k/N, (k+1)/N].
    Values must be nonnegative unless ``signed`` is set.
    """

    def __init__(self, values: Sequence[float], *, signed: bool = False):
        vals = np.array(values, dtype=float).reshape(-1)
        if vals.size == 0:
            raise DomainError("lattice random variable needs at least one atom")
        if not np.all(np.isfinite(vals)):
            raise DomainError("lattice values must be finite")
        if not signed:
            if np.any(vals < -_NEG_SLACK):
                raise DomainError("negative value in nonnegative mode; pass signed=True for signed risks")
            vals = np.maximum(vals, 0.0)
        vals.setflags(write=False)
        self._values = vals
        self.signed = signed

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n_atoms(self) -> int:
        return self._values.size

    @property
    def sorted_flag(self) -> bool:
        return bool(np.all(np.diff(self._values) >= 0))

    @property
    def probs(self) -> np.ndarray:
        return np.full(self.n_atoms, 1.0 / self.n_atoms)

    def order(self) -> np.ndarray:
        """Atom indices sorted by value, ties by index: the ordering of U_X."""
        return np.argsort(self._values, kind="stable")

    def ranks(self) -> np.ndarray:
        """Position of each atom in ``order()``; atom with rank r has U_X in (r/N, (r+1)/N]."""
        r = np.empty(self.n_atoms, dtype=int)
        r[self.order()] = np.arange(self.n_atoms)
        return r

    def upper_tail(self, prob: float) -> np.ndarray:
        """Mask of atoms with U_X > 1 - prob; ``prob`` is snapped to a multiple of 1/N."""
        k = int(round(prob * self.n_atoms))
        k = min(max(k, 0), self.n_atoms)
        return self.ranks() >= self.n_atoms - k

    def distribution(self) -> tuple[np.ndarray, np.ndarray]:
        vals, counts = np.unique(self._values, return_counts=True)
        return vals, counts / self.n_atoms

    def expectation(self) -> float:
        return float(self._values.mean())

    def with_values(self, values) -> "LatticeRV":
        return LatticeRV(values, signed=self.signed)

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, LatticeRV):
            if other.n_atoms != self.n_atoms:
                raise DomainError("lattice sizes differ")
            return other._values, self.signed or other.signed
        return float(other), self.signed

    def __add__(self, other):
        v, signed = self._coerce(other)
        return LatticeRV(self._values + v, signed=signed)

    __radd__ = __add__

    def __sub__(self, other):
        v, _ = self._coerce(other)
        return LatticeRV(self._values - v, signed=True)

    def __mul__(self, other):
        v, signed = self._coerce(other)
        return LatticeRV(self._values * v, signed=signed or np.any(np.asarray(v) < 0))

    __rmul__ = __mul__

    def __neg__(self):
        return LatticeRV(-self._values, signed=True)

    def __eq__(self, other):
        return isinstance(other, LatticeRV) and np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self):
        return f"LatticeRV(n_atoms={self.n_atoms}, values={np.array2string(self._values, threshold=8)})"

    # construction ----------------------------------------------------------
    @classmethod
    def bernoulli(cls, p: float, a: float = 1.0, n_atoms: int = 100) -> "LatticeRV":
        """a on the top round(p N) atoms, 0 elsewhere; p N must be an integer."""
        k = p * n_atoms
        if abs(k - round(k)) > 1e-9:
            raise LatticeError(f"P(A)={p} is not a multiple of 1/{n_atoms}")
        k = int(round(k))
        vals = np.zeros(n_atoms)
        vals[n_atoms - k:] = a
        return cls(vals)

    def to_dict(self) -> dict:
        return {"type": "lattice", "values": self._values.tolist()}


class DiscreteRV:
    """A finitely supported law given as (value, probability) pairs."""

    def __init__(self, support: Iterable[tuple[float, float]]):
        pairs = [(float(v), float(p)) for v, p in support]
        if not pairs:
            raise DomainError("discrete random variable needs a nonempty support")
        vals = np.array([v for v, _ in pairs])
        probs = np.array([p for _, p in pairs])
        if not np.all(np.isfinite(vals)):
            raise DomainError("support values must be finite")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must be nonnegative and sum to 1")
        if np.unique(vals).size != vals.size:
            raise DomainError("support values must be distinct")
        order = np.argsort(vals)
        self._values = vals[order]
        self._probs = probs[order]
        self._values.setflags(write=False)
        self._probs.setflags(write=False)

    @classmethod
    def bernoulli(cls, p: float, a: float = 1.0) -> "DiscreteRV":
        if not (0.0 <= p <= 1.0):
            raise DomainError(f"Bernoulli probability must lie in [0, 1], got {p}")
        if p == 0.0 or a == 0.0:
            return cls([(0.0, 1.0)])
        if p == 1.0:
            return cls([(a, 1.0)])
        return cls([(0.0, 1.0 - p), (a, p)])

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def support(self) -> list[tuple[float, float]]:
        return list(zip(self._values.tolist(), self._probs.tolist()))

    def distribution(self) -> tuple[np.ndarray, np.ndarray]:
        keep = self._probs > 0
        return self._values[keep], self._probs[keep]

    def is_nonnegative(self) -> bool:
        vals, _ = self.distribution()
        return bool(np.all(vals >= 0))

    def expectation(self) -> float:
        return float(np.dot(self._values, self._probs))

    def __neg__(self):
        return DiscreteRV([(-v, p) for v, p in self.support])

    def __eq__(self, other):
        return isinstance(other, DiscreteRV) and self.support == other.support

    def __repr__(self):
        return f"DiscreteRV({self.support})"

    def to_lattice(self, n_atoms: int) -> LatticeRV:
        """Exact embedding on N atoms; every probability must be a multiple of 1/N."""
        counts = self._probs * n_atoms
        if np.any(np.abs(counts - np.round(counts)) > 1e-9):
            raise LatticeError(f"probabilities {self._probs.tolist()} are not multiples of 1/{n_atoms}")
        vals = np.repeat(self._values, np.round(counts).astype(int))
        return LatticeRV(vals, signed=bool(np.any(vals < 0)))

    def to_dict(self) -> dict:
        return {"type": "discrete", "support": [[v, p] for v, p in self.support]}


RandomVariable = Union[LatticeRV, DiscreteRV]


def risk_from_dict(data: dict) -> RandomVariable:
    try:
        kind = data["type"]
        if kind == "bernoulli":
            return DiscreteRV.bernoulli(float(data["p"]), float(data.get("a", 1.0)))
        if kind == "discrete":
            return DiscreteRV((v, p) for v, p in data["support"])
        if kind == "lattice":
            vals = [float(v) for v in data["values"]]
            return LatticeRV(vals, signed=bool(data.get("signed", False)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"malformed risk JSON: {exc}") from exc
    raise DomainError(f"unknown risk type {data.get('type')!r}")


def to_lattice(X: RandomVariable, n_atoms: int | None = None) -> LatticeRV:
    if isinstance(X, LatticeRV):
        return X
    if n_atoms is None:
        raise LatticeError("a lattice size is required to embed a discrete law")
    return X.to_lattice(n_atoms)


# ---------------------------------------------------------------------------
# risk measures


def _layer_sum(h: Distortion, vals: np.ndarray, survival: np.ndarray) -> float:
    """h(1) * min + sum_k h(P(X > v_k)) (v_{k+1} - v_k) over sorted distinct values."""
    total = h.at_one() * float(vals[0])
    if vals.size > 1:
        total += float(np.dot(h._eval(survival[:-1]), np.diff(vals)))
    return total


def rho(h: Distortion, X: RandomVariable) -> float:
    """Distortion risk measure by exact layer summation."""
    if isinstance(X, LatticeRV):
        vals, counts = np.unique(X.values, return_counts=True)
        above = X.n_atoms - np.cumsum(counts)
        return _layer_sum(h, vals, above / X.n_atoms)
    vals, probs = X.distribution()
    survival = np.round(1.0 - np.cumsum(probs), _PROB_DIGITS)
    return _layer_sum(h, vals, np.clip(survival, 0.0, 1.0))


def rho_atoms(h: Distortion, values: np.ndarray, weights: np.ndarray) -> float:
    """rho for atoms of arbitrary probability weight."""
    return float(rho_batch(h, np.asarray(values, dtype=float)[None, :], weights)[0])


def rho_batch(h: Distortion, V: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """rho of every row of V, each row being atom values with common weights."""
    V = np.asarray(V, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(V, axis=1, kind="stable")
    vs = np.take_along_axis(V, order, axis=1)
    ws = w[order]
    tail = np.cumsum(ws[:, ::-1], axis=1)[:, ::-1]
    survival = np.clip(np.round(tail[:, 1:], _PROB_DIGITS), 0.0, 1.0)
    out = h.at_one() * vs[:, 0]
    if V.shape[1] > 1:
        out = out + np.sum(h._eval(survival) * np.diff(vs, axis=1), axis=1)
    return out


def var_at(alpha: float, X: RandomVariable) -> float:
    """VaR through the right-continuous indicator 1{t > alpha}."""
    return rho(VaRIndicator(alpha), X)


def es_at(b: float, X: RandomVariable) -> float:
    """Expected Shortfall through min{t / b, 1}."""
    return rho(capped_linear(b), X)


# ---------------------------------------------------------------------------
# dependence


def _pairwise_sign(components: Sequence[LatticeRV], sign: float, tol: float) -> bool:
    arrays = [np.asarray(c.values if isinstance(c, LatticeRV) else c, dtype=float) for c in components]
    if len({a.size for a in arrays}) > 1:
        raise DomainError("components live on lattices of different sizes")
    diffs = [a[:, None] - a[None, :] for a in arrays]
    for i in range(len(arrays)):
        for j in range(i + 1, len(arrays)):
            scale = max(1.0, float(np.max(np.abs(arrays[i]))) * float(np.max(np.abs(arrays[j]))))
            if np.any(sign * diffs[i] * diffs[j] < -tol * scale):
                return False
    return True


def is_comonotonic(components: Sequence[LatticeRV], tol: float = 1e-12) -> bool:
    return _pairwise_sign(components, 1.0, tol)


def is_counter_monotonic(components: Sequence[LatticeRV], tol: float = 1e-12) -> bool:
    return _pairwise_sign(components, -1.0, tol)


# ---------------------------------------------------------------------------
# layers


def layer_decompose(X: LatticeRV, n: int) -> list[tuple[float, np.ndarray]]:
    """Dyadic layers {X >= k/2^n}, k = 1..n 2^n, dropping empty ones.

    Each layer carries height 2^-n; their sum is the dyadic approximation
    truncated at level n.
    """
    if n < 1:
        raise DomainError(f"dyadic resolution must be at least 1, got {n}")
    step = 2.0 ** -n
    top = min(n * 2**n, int(np.floor(float(np.max(X.values)) / step + 1e-9)))
    layers = []
    for k in range(1, top + 1):
        mask = X.values >= k * step - 1e-12
        if not mask.any():
            break
        layers.append((k * step, mask))
    return layers


def dyadic_approx(X: LatticeRV, n: int) -> LatticeRV:
    step = 2.0 ** -n
    vals = np.minimum(np.floor(X.values / step + 1e-9) * step, float(n))
    return LatticeRV(vals)


def level_layers(X: LatticeRV) -> list[tuple[float, np.ndarray]]:
    """Exact layers (height, {X > v_k}) between consecutive distinct values, base layer first."""
    vals = np.unique(X.values)
    layers = []
    if vals[0] != 0.0:
        layers.append((float(vals[0]), np.ones(X.n_atoms, dtype=bool)))
    for lo, hi in zip(vals[:-1], vals[1:]):
        layers.append((float(hi - lo), X.values > lo))
    return layers


# ---------------------------------------------------------------------------
# allocations


@dataclass(frozen=True, eq=False)
class Allocation:
    """Components on a shared lattice that add up to ``total`` atomwise."""

    components: tuple[LatticeRV, ...]
    total: LatticeRV

    def __post_init__(self):
        comps = tuple(c if isinstance(c, LatticeRV) else LatticeRV(c, signed=self.total.signed) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise DomainError("allocation needs at least one component")
        n = self.total.n_atoms
        if any(c.n_atoms != n for c in comps):
            raise DomainError("allocation components must share the total's lattice")
        scale = max(1.0, float(np.max(np.abs(self.total.values))))
        err = np.max(np.abs(sum(c.values for c in comps) - self.total.values))
        if err > 1e-9 * scale:
            raise DomainError(f"components do not sum to the total (max error {err:.3g})")
        if not self.total.signed:
            tv = self.total.values
            for c in comps:
                if np.any(c.values < -1e-12) or np.any(c.values > tv + 1e-9 * scale):
                    raise DomainError("nonnegative allocation has a component outside [0, total]")

    @property
    def n_agents(self) -> int:
        return len(self.components)

    def costs(self, hs: Sequence[Distortion]) -> list[float]:
        if len(hs) != self.n_agents:
            raise DomainError("need one distortion per component")
        return [rho(h, c) for h, c in zip(hs, self.components)]

    def total_cost(self, hs: Sequence[Distortion]) -> float:
        return float(sum(self.costs(hs)))

    def matrix(self) -> np.ndarray:
        return np.array([c.values for c in self.components])

    def csv_header(self) -> list[str]:
        return ["atom", "u_low", "u_high", "total", *[f"x{i + 1}" for i in range(self.n_agents)]]

    def csv_rows(self) -> list[list]:
        n = self.total.n_atoms
        rows = []
        for k in range(n):
            row = [k + 1, k / n, (k + 1) / n, float(self.total.values[k])]
            row.extend(float(c.values[k]) for c in self.components)
            rows.append(row)
        return rows
