import numpy as np
import pytest

from riskshare import (
    Agent,
    Attitude,
    CaseTag,
    DiscreteRV,
    DomainError,
    DualPower,
    Economy,
    Identity,
    LatticeRV,
    NotCoveredError,
    ParameterError,
    PiecewiseLinear,
    Power,
    capped_linear,
    classify,
    is_comonotonic,
    is_counter_monotonic,
    max_of,
    min_of,
    pwl_n_agent,
    reduce,
    rho,
    shifted_linear,
    solve_n,
)
from riskshare.multi import disjoint_layer_split
from riskshare.distortion import infconv_fn


def econ(hs, X):
    return Economy(tuple(Agent(f"a{i + 1}", h) for i, h in enumerate(hs)), X)


def test_classification():
    assert classify(DualPower(2)) is Attitude.AVERSE
    assert classify(Identity()) is Attitude.AVERSE
    assert classify(Power(3)) is Attitude.SEEKING
    assert classify(min_of([Power(0.5), DualPower(2)])) is Attitude.AVERSE
    # the pointwise max of two concave curves kinks upward where they cross
    assert classify(max_of([Power(0.5), DualPower(2)])) is Attitude.OTHER
    wiggly = PiecewiseLinear(((0, 0), (0.3, 0.1), (0.6, 0.8), (1, 1)))
    assert classify(wiggly) is Attitude.OTHER
    with pytest.raises(DomainError):
        Agent("x", Power(3), "averse")
    with pytest.raises(DomainError):
        reduce(econ([wiggly, Power(2)], LatticeRV([0, 1])))


def test_economy_validation():
    with pytest.raises(DomainError):
        Economy((), LatticeRV([1]))
    with pytest.raises(DomainError):
        Economy((Agent("a", Power(2)), Agent("a", Power(3))), LatticeRV([1]))


def test_economy_json_round_trip():
    e = econ([DualPower(2), Power(3)], LatticeRV([0, 1, 2]))
    back = Economy.from_dict(e.to_dict())
    assert [a.id for a in back.agents] == ["a1", "a2"]
    assert back.risk == e.risk


def test_reduce_all_concave():
    X = LatticeRV([0, 1, 2, 4])
    e = econ([DualPower(2), capped_linear(0.5)], X)
    red = reduce(e)
    assert red.g2 is None and red.scale is None
    sol = solve_n(e)
    assert sol.solution.method is CaseTag.CONCAVE_MIN
    assert sol.value == pytest.approx(rho(min_of([DualPower(2), capped_linear(0.5)]), X), abs=1e-12)
    assert is_comonotonic(list(sol.allocation.components))


def test_reduce_singletons():
    g1, g2, scale = reduce(econ([DualPower(2), Power(3)], LatticeRV([0, 1])))
    ts = np.linspace(0, 1, 11)
    assert np.allclose(g1(ts), DualPower(2)(ts)) and np.allclose(g2(ts), ts**3)
    assert scale == 1.0


def test_reduce_shifted_group():
    a = (0.25, 0.125)
    red = reduce(econ([capped_linear(0.5)] + [shifted_linear(x) for x in a], LatticeRV([0, 1])))
    ts = red.seeking_curve.grid
    expected = np.maximum(0.0, (ts - sum(a)) / (1 - min(a)))
    assert np.max(np.abs(red.g2(ts) - expected)) <= 1e-12
    assert red.scale == pytest.approx((1 - sum(a)) / (1 - min(a)))


def test_single_agent_economy():
    X = LatticeRV([0, 1, 3])
    for h in (DualPower(2), Power(2)):
        sol = solve_n(econ([h], X))
        assert sol.value == pytest.approx(rho(h, X), abs=1e-12)
        assert np.array_equal(sol.allocation.components[0].values, X.values)


def test_dominated_seeker_takes_all():
    X = LatticeRV([0, 0, 1, 2, 2, 3])
    e = econ([DualPower(3), DualPower(4), Power(2)], X)
    sol = solve_n(e)
    assert sol.solution.method is CaseTag.CONVEX_DOMINATED
    assert sol.value == pytest.approx(rho(Power(2), X), abs=1e-12)
    assert np.all(sol.allocation.components[0].values == 0)
    assert np.all(sol.allocation.components[1].values == 0)


def test_mixed_economy_structure():
    X = LatticeRV(np.repeat([0.0, 1.0, 2.0], [20, 30, 50]))
    e = econ([DualPower(2), DualPower(3), Power(3), Power(4)], X)
    sol = solve_n(e)
    comps = sol.allocation.components
    assert is_comonotonic([comps[0], comps[1]])
    assert is_counter_monotonic([comps[2], comps[3]])
    total = sum(rho(a.h, c) for a, c in zip(e.agents, comps))
    assert total == pytest.approx(sol.solution.details["allocation_total"], abs=1e-12)
    d = sol.to_dict()
    assert [p["allocation_csv_column"] for p in d["per_agent"]] == ["x1", "x2", "x3", "x4"]


def test_disjoint_layer_split():
    Z = LatticeRV(np.repeat([0.0, 1.0, 3.0], [4, 8, 8]))
    curve = infconv_fn([shifted_linear(0.25), shifted_linear(0.25)])
    pieces, monotone = disjoint_layer_split(Z, curve)
    assert monotone
    assert np.allclose(sum(pieces), Z.values)
    assert np.all((pieces[0] == 0) | (pieces[1] == 0))


def test_discrete_risk_economy():
    X = DiscreteRV([(0.0, 0.5), (2.0, 0.5)])
    sol = solve_n(econ([DualPower(2), Power(3)], X), lattice=10)
    assert sol.solution.method is CaseTag.BERNOULLI
    assert sol.allocation.total.n_atoms == 10


# closed forms for piecewise-linear economies -----------------------------------------


def test_pwl_case_one_boundary():
    X = LatticeRV(np.ones(8))
    sol = pwl_n_agent([0.5], [0.5], X)
    assert sol.details["case"] == "i"
    ts = np.linspace(0, 1, 11)
    g = np.maximum(0.0, (ts - 0.5) / 0.5)
    assert sol.value == pytest.approx(g[-1])


def test_pwl_case_two():
    X = LatticeRV(np.ones(8))
    sol = pwl_n_agent([0.875], [0.25], X)
    assert sol.details["case"] == "ii"
    assert sol.value == pytest.approx((1 - 0.25) / 0.875, abs=1e-12)
    assert sol.details["lattice_gap"] == pytest.approx(0.0, abs=1e-12)


def test_pwl_case_two_many_agents():
    X = LatticeRV(np.repeat([0.0, 1.0, 2.0], [8, 6, 6]))
    b, a = [0.7, 0.9], [0.2, 0.15]
    sol = pwl_n_agent(b, a, X)
    assert sol.details["case"] == "ii"
    g = PiecewiseLinear(((0, 0), (0.35, 0), (1, 0.65 / 0.9)))
    assert sol.value == pytest.approx(rho(g, X), abs=1e-12)
    assert sol.details["lattice_gap"] == pytest.approx(0.0, abs=1e-12)


def test_pwl_parameter_checks():
    X = LatticeRV([1.0])
    with pytest.raises(ParameterError):
        pwl_n_agent([1.2], [0.3], X)
    with pytest.raises(ParameterError):
        pwl_n_agent([0.5], [0.6, 0.6], X)
    with pytest.raises(ParameterError):
        pwl_n_agent([], [0.3], X)


def test_pwl_cases_are_exhaustive():
    # either some a_i + b <= 1 or every a_i + b > 1; the middle ground is empty
    rng = np.random.default_rng(3)
    for _ in range(200):
        b = rng.uniform(0.05, 0.95, size=2)
        a = rng.dirichlet(np.ones(3))[:2] * rng.uniform(0.1, 1.0)
        try:
            pwl_n_agent(b, a, LatticeRV([0.0, 1.0]))
        except NotCoveredError:  # pragma: no cover
            pytest.fail(f"no closed form for b={b}, a={a}")
