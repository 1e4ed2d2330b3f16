"""Distortion risk measures, inf-convolutions, and optimal risk sharing."""

from .distortion import (
    GRID,
    DualPower,
    Identity,
    InfConvCurve,
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
    max_of,
    min_of,
    normalize,
    shift,
    shifted_linear,
)
from .errors import (
    BudgetError,
    CoinError,
    DegenerateError,
    DomainError,
    LatticeError,
    NotCoveredError,
    ParameterError,
    PreconditionError,
    RiskShareError,
)
from .multi import Agent, Attitude, Economy, classify, pwl_n_agent, reduce, solve_n
from .oracle import OracleProblem, brute_min, enumerate_comonotone, enumerate_counter, monotonicity_probe
from .randvar import (
    Allocation,
    DiscreteRV,
    LatticeRV,
    es_at,
    is_comonotonic,
    is_counter_monotonic,
    layer_decompose,
    rho,
    var_at,
)
from .sharing2 import (
    NEG_INFINITY,
    CaseTag,
    SharingSolution,
    check_existence,
    coin_construct,
    indicator_plus_constant_bounds,
    power_family_split,
    small_prob_case,
    solve_linf,
    solve_lplus,
)

__version__ = "0.1.0"
