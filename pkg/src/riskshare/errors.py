"""Exception types shared across the package."""


class RiskShareError(Exception):
    """Base class for all package errors."""


class DomainError(RiskShareError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class DegenerateError(DomainError):
    """A normalization or scaling step would divide by zero."""


class ParameterError(DomainError):
    """Family parameters violate their stated ranges."""


class PreconditionError(DomainError):
    """The hypotheses of a closed-form case do not hold.

    ``details`` carries whatever thresholds were computed while checking.
    """

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = dict(details or {})


class NotCoveredError(PreconditionError):
    """Parameters fall between the cases a closed form handles."""


class CoinError(DomainError):
    """The inf-convolution selector is not monotone where the layered construction needs it."""


class LatticeError(DomainError):
    """A required probability is not representable on the lattice."""


class BudgetError(RiskShareError):
    """A brute-force search would exceed the configured evaluation budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(f"search needs {required} candidate evaluations, budget is {budget}")
        self.required = required
        self.budget = budget
