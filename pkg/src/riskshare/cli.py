"""Command-line entry point: solve, tabulate, brute-force, and replicate worked examples."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .distortion import (
    GRID,
    DualPower,
    Power,
    VaRIndicator,
    capped_linear,
    dominance_gap,
    from_dict as distortion_from_dict,
    infconv_fn,
    max_of,
    shifted_linear,
    unit_grid,
)
from .errors import BudgetError, DomainError
from .multi import Economy, reduce, solve_n
from .oracle import DEFAULT_LEVELS, OracleProblem, brute_min, enumerate_comonotone, enumerate_counter
from .randvar import DiscreteRV, LatticeRV, risk_from_dict, rho
from .sharing2 import (
    DEFAULT_DYADIC,
    _jsonable,
    check_existence,
    existence_witness,
    power_family_split,
    power_threshold,
    solve_linf,
    solve_lplus,
)

EXIT_OK, EXIT_FAIL, EXIT_DOMAIN, EXIT_BUDGET = 0, 1, 2, 3
COMMANDS = ("value", "allocate", "infconv-fn", "check-existence", "reduce", "oracle", "replicate")
CASES = ("ex-subadditive", "ex-pwl-figure", "ex-power-figure", "ex-finite-space", "ex-var")


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    grid: int = GRID
    lattice: int | None = None
    dyadic: int = DEFAULT_DYADIC
    levels: int = DEFAULT_LEVELS
    tolerance: float | None = None
    out: Path = Path("riskshare-out")
    case: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise DomainError(f"unknown command {self.command!r}")
        if self.grid < 2:
            raise DomainError("--grid must be at least 2")
        if self.lattice is not None and self.lattice < 1:
            raise DomainError("--lattice must be positive")
        if not 1 <= self.dyadic <= 20:
            raise DomainError("--dyadic must lie in [1, 20]")
        if self.levels < 1:
            raise DomainError("--oracle-levels must be positive")
        if self.tolerance is not None and not self.tolerance > 0:
            raise DomainError("--tolerance must be positive")


# ---------------------------------------------------------------------------
# output helpers


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_json(path: Path, data: dict) -> None:
    write_atomic(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# config parsing


def _agents(inputs: dict) -> list:
    raw = inputs.get("agents", inputs.get("hs"))
    if not isinstance(raw, list) or not raw:
        raise DomainError("config needs a nonempty 'agents' list")
    return [distortion_from_dict(a["h"] if isinstance(a, dict) and "h" in a else a) for a in raw]


def _risk(inputs: dict):
    if "risk" not in inputs:
        raise DomainError("config needs a 'risk' object")
    return risk_from_dict(inputs["risk"])


def _with_tolerance(sol_dict: dict, cfg: RunConfig) -> dict:
    if cfg.tolerance is not None and sol_dict.get("bounds"):
        lo, hi = sol_dict["bounds"]
        if isinstance(lo, float) and isinstance(hi, float):
            sol_dict["exact"] = bool(hi - lo <= cfg.tolerance)
    return sol_dict


def _solve(cfg: RunConfig):
    inputs = cfg.inputs
    mode = inputs.get("mode", "lplus")
    if mode not in ("lplus", "linf"):
        raise DomainError(f"mode must be 'lplus' or 'linf', got {mode!r}")
    hs = _agents(inputs)
    X = _risk(inputs)
    if mode == "linf":
        if len(hs) != 2:
            raise DomainError("unconstrained mode handles exactly two agents")
        sol = solve_linf(hs[0], hs[1], X, grid=cfg.grid)
        return sol.to_dict(), sol.allocation, None
    if len(hs) == 2:
        sol = solve_lplus(hs[0], hs[1], X, grid=cfg.grid, dyadic=cfg.dyadic, lattice=cfg.lattice, tol=cfg.tolerance)
        return sol.to_dict(), sol.allocation, None
    agents = [a if isinstance(a, dict) and "h" in a else {"h": a} for a in inputs.get("agents", inputs.get("hs"))]
    econ = Economy.from_dict({"agents": agents, "risk": inputs["risk"]})
    res = solve_n(econ, grid=cfg.grid, dyadic=cfg.dyadic, lattice=cfg.lattice)
    return res.to_dict(), res.allocation, res.per_agent


def cmd_value(cfg: RunConfig, require_allocation: bool = False) -> int:
    data, alloc, _ = _solve(cfg)
    data = _with_tolerance(data, cfg)
    if alloc is not None:
        path = cfg.out / "allocation.csv"
        write_atomic(path, csv_text(alloc.csv_header(), alloc.csv_rows()))
        data["allocation_csv"] = str(path)
    elif require_allocation:
        raise DomainError("no lattice allocation is available; pass --lattice with a size that embeds the risk")
    write_json(cfg.out / "result.json", data)
    print(json.dumps(_jsonable(data), sort_keys=True))
    return EXIT_OK


def cmd_infconv(cfg: RunConfig) -> int:
    hs = _agents(cfg.inputs)
    curve = infconv_fn(hs, cfg.grid)
    path = cfg.out / "curve.csv"
    write_atomic(path, csv_text(curve.csv_header(), curve.csv_rows()))
    data = {
        "method": curve.method,
        "at_one": curve.at_one(),
        "tolerance": curve.tolerance,
        "cross_check": curve.cross_check,
        "coin": curve.is_coin(),
        "curve_csv": str(path),
    }
    write_json(cfg.out / "result.json", data)
    print(json.dumps(_jsonable(data), sort_keys=True))
    return EXIT_OK


def cmd_existence(cfg: RunConfig) -> int:
    hs = _agents(cfg.inputs)
    if len(hs) != 2:
        raise DomainError("check-existence needs exactly two agents")
    exists = check_existence(hs[0], hs[1], cfg.grid)
    data: dict = {"exists": exists}
    if not exists:
        data["witness"] = existence_witness(hs[0], hs[1], cfg.grid)
    write_json(cfg.out / "result.json", data)
    print(json.dumps(_jsonable(data), sort_keys=True))
    return EXIT_OK


def cmd_reduce(cfg: RunConfig) -> int:
    econ = Economy.from_dict(cfg.inputs)
    red = reduce(econ, cfg.grid)
    data = {
        "g1": red.g1.to_dict() if red.g1 is not None else None,
        "g2": red.g2.to_dict() if red.g2 is not None else None,
        "scale": red.scale,
        "averse": [econ.agents[i].id for i in red.averse],
        "seeking": [econ.agents[i].id for i in red.seeking],
    }
    write_json(cfg.out / "result.json", data)
    print(json.dumps({k: data[k] for k in ("scale", "averse", "seeking")}, sort_keys=True))
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    hs = _agents(cfg.inputs)
    X = _risk(cfg.inputs)
    levels = int(cfg.inputs.get("levels", cfg.levels))
    if isinstance(X, LatticeRV):
        prob = OracleProblem.from_lattice(hs, X, levels, blocks=cfg.inputs.get("blocks"))
    else:
        prob = OracleProblem.from_discrete(hs, X, int(cfg.inputs.get("n_atoms", cfg.lattice or 8)), levels)
    restrict = cfg.inputs.get("restrict")
    runner = {None: brute_min, "comonotone": enumerate_comonotone, "counter": enumerate_counter}.get(restrict)
    if runner is None:
        raise DomainError(f"restrict must be 'comonotone' or 'counter', got {restrict!r}")
    res = runner(prob)
    data = {
        "value": res.value,
        "delta": res.delta,
        "candidates": res.candidates,
        "certificate": res.certificate,
        "shares": res.shares,
        "weights": prob.weights,
    }
    if res.allocation is not None:
        path = cfg.out / "allocation.csv"
        write_atomic(path, csv_text(res.allocation.csv_header(), res.allocation.csv_rows()))
        data["allocation_csv"] = str(path)
    write_json(cfg.out / "result.json", data)
    print(json.dumps(_jsonable({k: data[k] for k in ("value", "delta", "candidates", "certificate")}), sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# replication of worked examples


@dataclass
class Check:
    name: str
    computed: float
    expected: float
    tolerance: float

    @property
    def passed(self) -> bool:
        if math.isinf(self.expected) or math.isinf(self.computed):
            return self.expected == self.computed
        return abs(self.computed - self.expected) <= self.tolerance

    def row(self) -> list:
        return [self.name, _encode(self.computed), _encode(self.expected), self.tolerance, "PASS" if self.passed else "FAIL"]


def _encode(v: float):
    return "neg_inf" if v == float("-inf") else float(v)


CHECK_HEADER = ["quantity", "computed", "expected", "tolerance", "status"]


def subadditive_example() -> dict:
    """Two overlapping events on a 50-atom lattice shared by identical agents."""
    h = max_of([Power(0.5), DualPower(2.0)])
    N = 50
    a = np.zeros(N)
    b = np.zeros(N)
    a[25:44] = 1.0  # P(A) = 0.38
    b[31:50] = 1.0  # P(B) = 0.38, P(A and B) = 0.26
    Y, Z = LatticeRV(a), LatticeRV(b)
    X = Y + Z
    split = rho(h, Y) + rho(h, Z)
    whole = rho(h, X)
    return {
        "h": h,
        "split": split,
        "whole": whole,
        "split_exact": 2 * float(h(0.38)),
        "whole_exact": float(h(0.5)) + float(h(0.26)),
    }


def _case_subadditive(cfg: RunConfig):
    r = subadditive_example()
    checks = [
        Check("rho(Y)+rho(Z) vs 2h(0.38)", r["split"], r["split_exact"], 1e-9),
        Check("rho(X) vs h(0.5)+h(0.26)", r["whole"], r["whole_exact"], 1e-9),
        Check("rho(Y)+rho(Z) vs 1.233", r["split"], 1.233, 1e-3),
        Check("rho(X) vs 1.260", r["whole"], 1.260, 1e-3),
    ]
    return checks, None


def _case_pwl_figure(cfg: RunConfig):
    g1, g2 = shifted_linear(0.25), capped_linear(0.875)
    curve = infconv_fn([g1, g2], cfg.grid)
    xs = curve.grid
    closed = np.maximum(0.0, 8.0 / 7.0 * (xs - 0.25))
    split = np.minimum(xs, 0.25)
    rows = [[x, v, s[0], s[1], g1(x), g2(x), c] for x, v, s, c in zip(xs, curve.value, curve.selector, closed)]
    table = (["x", "value", "y1", "y2", "g1", "g2", "closed_form"], rows)
    checks = [
        Check("max |curve - 8/7(x-1/4)+|", float(np.max(np.abs(curve.value - closed))), 0.0, 1e-9),
        Check("max |selector - min(x,1/4)|", float(np.max(np.abs(curve.selector[:, 0] - split))), 0.0, 1e-9),
        Check("selector monotone", float(curve.is_coin()), 1.0, 0.0),
    ]
    return checks, table


def power_sweep(points: int = 50) -> list[list[float]]:
    """y*(x) for Power(2) against Power(3): a coarse sweep of [0, 1] plus ``points`` values above the switch."""
    p0 = power_threshold(2.0, 3.0)
    xs = np.union1d(np.linspace(0.0, 1.0, 21), np.linspace(p0, 1.0, points + 1)[1:])
    rows = []
    for x in xs:
        y, r = power_family_split(2.0, 3.0, float(x))
        closed = (3 * x - 1 - math.sqrt(7 - 6 * x)) / 3 if x > math.sqrt(2 / 3) else 0.0
        rows.append([float(x), y, r, closed])
    return rows


def _case_power_figure(cfg: RunConfig):
    rows = power_sweep()
    p0 = power_threshold(2.0, 3.0)
    above = [r for r in rows if r[0] > p0]
    err = max(abs(r[1] - r[3]) for r in rows)
    ys = np.array([r[1] for r in above])
    res = np.array([r[2] for r in above])
    checks = [
        Check("max |y* - closed form|", err, 0.0, 1e-9),
        Check("p0 vs sqrt(2/3)", p0, math.sqrt(2 / 3), 1e-12),
        Check("y* nondecreasing above p0", float(np.all(np.diff(ys) >= 0)), 1.0, 0.0),
        Check("residual nonincreasing above p0", float(np.all(np.diff(res) <= 0)), 1.0, 0.0),
    ]
    return checks, (["x", "y_star", "residual", "closed_form"], rows)


def finite_space_example(levels: int = DEFAULT_LEVELS) -> dict:
    """Constant 1 on a sample space of two outcomes with probabilities 1/6 and 5/6."""
    h1 = capped_linear(0.5)
    h2 = shifted_linear(2.0 / 3.0)
    X = LatticeRV(np.ones(6))
    prob = OracleProblem.from_lattice([h1, h2], X, levels, blocks=[0, 1, 1, 1, 1, 1])
    res = brute_min(prob)
    curve = infconv_fn([h1, h2])
    return {"oracle": res, "problem": prob, "benchmark": rho(curve.as_distortion(), X), "h1": h1, "h2": h2}


def _case_finite_space(cfg: RunConfig):
    r = finite_space_example(cfg.levels)
    res = r["oracle"]
    checks = [
        Check("constrained value", res.value, 5.0 / 6.0, 1e-12),
        Check("rho of inf-convolution at 1", r["benchmark"], 2.0 / 3.0, 1e-12),
    ]
    shares = np.asarray(res.shares)
    rows = [[k, float(w), *map(float, shares[:, k])] for k, w in enumerate(r["problem"].weights)]
    return checks, (["atom", "prob", "x1", "x2"], rows)


def _case_var(cfg: RunConfig):
    checks = []
    rows = []
    X = DiscreteRV([(1.0, 1.0)])
    pairs = [
        ("VaR 0.6 / VaR 0.5", VaRIndicator(0.6), VaRIndicator(0.5)),
        ("1{x=1} / sqrt", VaRIndicator(1.0, closed=True), Power(0.5)),
    ]
    for name, h1, h2 in pairs:
        sol = solve_linf(h1, h2, X, grid=cfg.grid)
        checks.append(Check(f"{name}: existence", float(check_existence(h1, h2, cfg.grid)), 0.0, 0.0))
        checks.append(Check(f"{name}: value", sol.value, float("-inf"), 0.0))
        gap, m = dominance_gap(h1, h2, cfg.grid)
        rows.append([name, gap, m, "neg_inf" if sol.unbounded else sol.value])
    return checks, (["pair", "violation", "m", "value"], rows)


REPLICATORS: dict[str, Callable] = {
    "ex-subadditive": _case_subadditive,
    "ex-pwl-figure": _case_pwl_figure,
    "ex-power-figure": _case_power_figure,
    "ex-finite-space": _case_finite_space,
    "ex-var": _case_var,
}


def cmd_replicate(cfg: RunConfig) -> int:
    case = cfg.case or "all"
    names = CASES if case == "all" else (case,)
    ok = True
    for name in names:
        if name not in REPLICATORS:
            raise DomainError(f"unknown replicate case {name!r}; choose from {', '.join(CASES)} or all")
        checks, table = REPLICATORS[name](cfg)
        write_atomic(cfg.out / f"{name}-checks.csv", csv_text(CHECK_HEADER, [c.row() for c in checks]))
        if table is not None:
            write_atomic(cfg.out / f"{name}.csv", csv_text(*table))
        passed = all(c.passed for c in checks)
        ok &= passed
        failed = [c.name for c in checks if not c.passed]
        note = f"; failed: {', '.join(failed)}" if failed else ""
        print(f"{'PASS' if passed else 'FAIL'} {name} ({len(checks)} checks{note})")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with agents, risk and options")
    common.add_argument("--out", type=Path, default=Path("riskshare-out"), help="output directory")
    common.add_argument("--grid", type=int, default=GRID, help="grid points on [0, 1]")
    common.add_argument("--lattice", type=int, default=None, help="atoms used to embed discrete risks")
    common.add_argument("--dyadic", type=int, default=DEFAULT_DYADIC, help="dyadic resolution of layered constructions")
    common.add_argument("--oracle-levels", type=int, default=DEFAULT_LEVELS, help="per-atom grid size of the oracle")
    common.add_argument("--tolerance", type=float, default=None, help="override the exactness tolerance")
    parser = argparse.ArgumentParser(prog="riskshare", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS[:-1]:
        sub.add_parser(name, parents=[common])
    rep = sub.add_parser("replicate", parents=[common])
    rep.add_argument("case", nargs="?", default="all", choices=(*CASES, "all"))
    return parser


def _load(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DomainError(f"malformed JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise DomainError("config must be a JSON object")
    return data


def run(cfg: RunConfig) -> int:
    if cfg.command != "replicate" and not cfg.inputs:
        raise DomainError(f"{cfg.command} needs --config")
    handlers = {
        "value": lambda c: cmd_value(c),
        "allocate": lambda c: cmd_value(c, require_allocation=True),
        "infconv-fn": cmd_infconv,
        "check-existence": cmd_existence,
        "reduce": cmd_reduce,
        "oracle": cmd_oracle,
        "replicate": cmd_replicate,
    }
    return handlers[cfg.command](cfg)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(
            command=args.command,
            inputs=_load(args.config),
            grid=args.grid,
            lattice=args.lattice,
            dyadic=args.dyadic,
            levels=args.oracle_levels,
            tolerance=args.tolerance,
            out=args.out,
            case=getattr(args, "case", None),
        )
        return run(cfg)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
