import numpy as np
import pytest
from reference import choquet

from riskshare import (
    Allocation,
    DiscreteRV,
    DomainError,
    DualPower,
    Identity,
    LatticeError,
    LatticeRV,
    Power,
    es_at,
    is_comonotonic,
    is_counter_monotonic,
    layer_decompose,
    max_of,
    rho,
    var_at,
)
from riskshare.randvar import dyadic_approx, level_layers, risk_from_dict, to_lattice


def test_rho_identity_is_mean():
    X = LatticeRV([0, 1, 2, 3, 7])
    assert rho(Identity(), X) == pytest.approx(2.6, abs=1e-12)


def test_rho_by_hand():
    # survival 3/4, 1/2, 1/4 through 1 - (1 - t)^2
    assert rho(DualPower(2), LatticeRV([0, 1, 2, 3])) == pytest.approx(2.125, abs=1e-12)


def test_rho_scaled_indicator():
    X = DiscreteRV.bernoulli(0.3, 2.5)
    assert rho(Power(2), X) == pytest.approx(2.5 * 0.09, abs=1e-12)


def test_rho_subadditivity_counterexample():
    h = max_of([Power(0.5), DualPower(2)])
    a = np.zeros(50)
    b = np.zeros(50)
    a[25:44] = 1
    b[31:50] = 1
    whole = rho(h, LatticeRV(a + b))
    split = rho(h, LatticeRV(a)) + rho(h, LatticeRV(b))
    f = lambda t: max(t**0.5, 2 * t - t * t)  # noqa: E731
    assert whole == pytest.approx(f(0.5) + f(0.26), abs=1e-12)
    assert split == pytest.approx(2 * f(0.38), abs=1e-12)
    assert split < whole


def test_rho_matches_reference_integral():
    rng = np.random.default_rng(7)
    for _ in range(20):
        vals = rng.integers(0, 5, size=7).astype(float)
        h = DualPower(1.7)
        ref = choquet(lambda t: 1 - (1 - t) ** 1.7, vals, np.full(7, 1 / 7))
        assert rho(h, LatticeRV(vals)) == pytest.approx(ref, abs=1e-12)


def test_var_and_es():
    X = LatticeRV([0, 1, 5, 9])
    assert var_at(0.0, X) == 9.0
    assert var_at(0.5, DiscreteRV.bernoulli(0.7)) == 1.0
    assert var_at(0.5, DiscreteRV.bernoulli(0.3)) == 0.0
    assert es_at(0.5, DiscreteRV.bernoulli(0.25)) == pytest.approx(0.5, abs=1e-15)


def test_dependence_predicates():
    X = LatticeRV([0, 1, 3, 4])
    assert is_comonotonic([X, 2 * X])
    A = np.array([0, 0, 1, 1, 1], dtype=float)
    AminusB = np.array([0, 0, 1, 0, 0], dtype=float)
    B_only = A - AminusB
    assert is_counter_monotonic([LatticeRV(B_only), LatticeRV(AminusB)])
    c = 5.0
    assert is_counter_monotonic([X, LatticeRV(c - X.values)])
    assert not is_comonotonic([X, LatticeRV(c - X.values)])
    with pytest.raises(DomainError):
        is_comonotonic([X, LatticeRV([1, 2])])


def test_layer_decompose_examples():
    one = LatticeRV(np.ones(4))
    layers = layer_decompose(one, 1)
    assert len(layers) == 2
    assert all(m.all() for _, m in layers)
    bern = LatticeRV.bernoulli(0.25, 1.0, 8)
    for lvl, m in layer_decompose(bern, 3):
        assert np.array_equal(m, bern.values == 1.0)


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_layer_reconstruction(n):
    X = LatticeRV([0, 0.3, 0.77, 1.5, 2.0, 3.9])
    step = 2.0**-n
    xn = sum(step * m.astype(float) for _, m in layer_decompose(X, n))
    assert np.allclose(xn, dyadic_approx(X, n).values)
    assert np.all(xn <= X.values + 1e-12)
    bounded = X.values <= n
    assert np.all(X.values[bounded] <= xn[bounded] + step + 1e-12)


def test_level_layers_reconstruct():
    X = LatticeRV([1, 1, 2, 4])
    total = sum(h * m.astype(float) for h, m in level_layers(X))
    assert np.allclose(total, X.values)


def test_lattice_validation():
    with pytest.raises(DomainError):
        LatticeRV([0, -1])
    assert LatticeRV([0, -1], signed=True).values[1] == -1
    with pytest.raises(DomainError):
        LatticeRV([np.inf])
    with pytest.raises(LatticeError):
        LatticeRV.bernoulli(0.3, 1.0, 8)


def test_discrete_validation():
    with pytest.raises(DomainError):
        DiscreteRV([(0, 0.5), (1, 0.6)])
    with pytest.raises(DomainError):
        DiscreteRV([(1, 0.5), (1, 0.5)])


def test_lattice_embedding_agrees():
    X = DiscreteRV([(0.0, 0.25), (1.0, 0.5), (3.0, 0.25)])
    L = to_lattice(X, 8)
    for h in (Power(2), DualPower(3), Identity()):
        assert rho(h, L) == pytest.approx(rho(h, X), abs=1e-12)
    with pytest.raises(LatticeError):
        to_lattice(X, 6)


def test_signed_duality():
    X = DiscreteRV([(-1.0, 0.2), (0.5, 0.5), (2.0, 0.3)])
    h = Power(2)
    assert rho(h, -X) == pytest.approx(-rho(h.dual(), X), abs=1e-12)


def test_risk_json():
    X = risk_from_dict({"type": "discrete", "support": [[0, 0.5], [2, 0.5]]})
    assert rho(Identity(), X) == pytest.approx(1.0)
    L = risk_from_dict({"type": "lattice", "values": [0, 1]})
    assert risk_from_dict(L.to_dict()) == L
    with pytest.raises(DomainError):
        risk_from_dict({"type": "gamma"})
    with pytest.raises(DomainError):
        risk_from_dict({"type": "bernoulli"})


def test_allocation_invariants():
    X = LatticeRV([0, 1, 2])
    alloc = Allocation((LatticeRV([0, 1, 0]), LatticeRV([0, 0, 2])), X)
    assert alloc.total_cost([Identity(), Identity()]) == pytest.approx(1.0)
    assert alloc.csv_header() == ["atom", "u_low", "u_high", "total", "x1", "x2"]
    assert alloc.csv_rows()[1] == [2, 1 / 3, 2 / 3, 1.0, 1.0, 0.0]
    with pytest.raises(DomainError):
        Allocation((LatticeRV([0, 1, 0]), LatticeRV([0, 0, 1])), X)
    with pytest.raises(DomainError):
        Allocation((LatticeRV([0, 2, 0]), LatticeRV([0, -1, 2], signed=True)), X)
