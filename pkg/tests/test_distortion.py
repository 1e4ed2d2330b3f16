import math

import numpy as np
import pytest
from conftest import CORPUS
from reference import capped, dual_power, infconv_at, power, shifted

from riskshare import (
    GRID,
    DegenerateError,
    DomainError,
    DualPower,
    Identity,
    PiecewiseLinear,
    Power,
    Tabulated,
    VaRIndicator,
    active_part,
    alpha_of,
    capped_linear,
    dominates,
    dual,
    evaluate,
    infconv_fn,
    is_concave,
    is_convex,
    min_of,
    normalize,
    shift,
    shifted_linear,
)
from riskshare.distortion import from_dict, unit_grid

TS = unit_grid(201)


def test_eval_examples():
    assert evaluate(Power(3), 0.5) == pytest.approx(0.125, abs=1e-15)
    assert evaluate(DualPower(2), 1.0) == 1.0
    h1 = PiecewiseLinear(((0.0, 0.0), (0.5, 1.0), (1.0, 1.0)))
    assert evaluate(h1, 1 / 6) == pytest.approx(1 / 3, abs=1e-15)


@pytest.mark.parametrize("t", [-0.1, 1.2, float("nan")])
def test_eval_rejects_outside_unit_interval(t):
    with pytest.raises(DomainError):
        evaluate(Power(2), t)


def test_dual_examples():
    assert isinstance(dual(Identity()), Identity)
    d = dual(Power(3))
    assert isinstance(d, DualPower) and d.alpha == 3
    v = dual(VaRIndicator(0.3))
    # 1{t >= 0.7}: closed at the jump
    assert evaluate(v, 0.7) == 1.0
    assert evaluate(v, 0.6999) == 0.0
    assert evaluate(v, 1.0) == 1.0


def test_dual_involution_on_corpus(corpus_h):
    back = dual(dual(corpus_h))
    assert np.max(np.abs(back(TS) - corpus_h(TS))) <= 1e-12


def test_shape_checks():
    assert is_concave(DualPower(2)) and not is_convex(DualPower(2))
    assert is_convex(Power(3)) and not is_concave(Power(3))
    assert is_convex(shifted_linear(0.25))
    assert is_concave(capped_linear(0.5))
    assert is_concave(Identity()) and is_convex(Identity())
    assert is_convex(Tabulated(TS**2))


def test_dominates_examples():
    assert dominates(DualPower(2), DualPower(2))
    assert not dominates(Power(3), Power(3))
    assert not dominates(DualPower(2), Power(3))


def test_alpha_active_part_and_shift():
    h = shifted_linear(0.25)
    assert alpha_of(h) == pytest.approx(0.25, abs=1e-12)
    act = active_part(h)
    expected = np.minimum(TS / 0.75, 1.0)
    assert np.max(np.abs(act(TS) - expected)) <= 1e-12
    assert np.max(np.abs(shift(Identity(), 0.0)(TS) - TS)) == 0.0
    # h^a(t) = h((t - a)+)
    s = shift(Power(2), 0.3)
    assert s(0.2) == 0.0
    assert s(0.8) == pytest.approx(0.25)


def test_min_of_examples():
    ident = min_of([Identity()])
    assert np.max(np.abs(ident(TS) - TS)) <= 1e-12
    m = min_of([capped_linear(0.5), capped_linear(0.8)])
    assert np.max(np.abs(m(TS) - np.minimum(TS / 0.8, 1.0))) <= 1e-12
    assert min_of([DualPower(2), Power(3)])(0.9) == pytest.approx(0.729, abs=1e-12)


def test_infconv_pwl_pair_closed_form():
    curve = infconv_fn([shifted_linear(0.25), capped_linear(0.875)])
    xs = curve.grid
    assert np.max(np.abs(curve.value - np.maximum(0.0, 8 / 7 * (xs - 0.25)))) <= 1e-12
    assert np.max(np.abs(curve.selector[:, 0] - np.minimum(xs, 0.25))) <= 1e-12


@pytest.mark.parametrize("a,b", [(0.25, 0.875), (0.4, 0.7), (0.5, 0.5)])
def test_infconv_pwl_general(a, b):
    curve = infconv_fn([shifted_linear(a), capped_linear(b)])
    xs = curve.grid
    assert np.max(np.abs(curve.value - np.maximum(0.0, (xs - a) / b))) <= 1e-12
    ref = [infconv_at(shifted(a), capped(b), x)[0] for x in (0.3, 0.6, 0.95)]
    assert np.allclose([curve(x) for x in (0.3, 0.6, 0.95)], ref, atol=1e-9)


def test_infconv_dual_power_against_power():
    curve = infconv_fn([DualPower(2), Power(3)])
    below = curve.grid <= math.sqrt(2 / 3) - 2 / GRID
    assert np.max(np.abs(curve.value[below] - curve.grid[below] ** 3)) <= curve.tolerance
    # reference minimization, frozen: 0.6993438738883139 at x = 0.9
    assert curve(0.9) == pytest.approx(0.6993438738883139, abs=2 / GRID)
    for x in (0.85, 0.95, 1.0):
        ref, _ = infconv_at(dual_power(2), power(3), x)
        assert abs(curve(x) - ref) <= 2 / GRID


def test_infconv_selector_sums_and_bounds(corpus_h):
    other = Power(2)
    curve = infconv_fn([corpus_h, other], 401)
    assert np.max(np.abs(curve.selector.sum(axis=1) - curve.grid)) <= 1e-12
    assert np.all(curve.value <= np.minimum(corpus_h(curve.grid), other(curve.grid)) + 1e-12)
    assert np.all(np.diff(curve.value) >= -1e-12)


def test_infconv_associativity():
    hs = [Power(2), Power(3), DualPower(2)]
    g = 401
    three = infconv_fn(hs, g)
    pair = infconv_fn(hs[:2], g).as_distortion()
    nested = infconv_fn([pair, hs[2]], g)
    assert np.max(np.abs(three.value - nested.value)) <= 2 / g


def test_concave_closure():
    h1, h2 = DualPower(2), capped_linear(0.6)
    low = min_of([h1, h2])
    assert low.is_concave()
    curve = infconv_fn([h1, h2])
    assert np.max(np.abs(curve.value - low(curve.grid))) <= curve.tolerance


def test_tie_break_smallest_y():
    curve = infconv_fn([Identity(), Identity()], 11)
    assert np.all(curve.selector[:, 0] == 0.0)


def test_coin_selector_for_convex_pair():
    curve = infconv_fn([Power(2), Power(3)])
    assert curve.is_coin()
    resid = curve.grid - curve.selector[:, 0]
    assert np.all(np.diff(resid) >= -1e-9)


def test_normalize():
    h, s = normalize(Identity())
    assert s == 1.0 and np.allclose(h(TS), TS)
    g2 = infconv_fn([Power(2), Power(2)]).as_distortion()
    h, s = normalize(g2)
    assert s == pytest.approx(0.5, abs=1e-12)
    assert h(1.0) == pytest.approx(1.0)
    with pytest.raises(DegenerateError):
        normalize(Tabulated(np.zeros(11)))


def test_tabulated_rejects_decrease():
    with pytest.raises(DomainError):
        Tabulated([0.0, 0.6, 0.5, 1.0])


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_json_round_trip(name):
    h = CORPUS[name]
    back = from_dict(h.to_dict())
    assert np.max(np.abs(back(TS) - h(TS))) <= 1e-12


def test_unknown_family():
    with pytest.raises(DomainError):
        from_dict({"family": "cubic", "params": {}})
    with pytest.raises(DomainError):
        from_dict({"family": "power", "params": {}})
