"""Semantic exception hierarchy.

Every failure mode that callers may want to branch on gets its own class;
generic programming errors (wrong argument types etc.) raise the builtin
TypeError/ValueError as usual.
"""


class MuPricingError(Exception):
    """Base class for all library errors."""


class ParseError(MuPricingError):
    """Instance file is malformed (bad JSON, missing keys, wrong types)."""


class ValidationError(MuPricingError):
    """Instance data violates a model invariant (probabilities, NaN, shapes)."""


class DimensionError(MuPricingError):
    """Inconsistent dimensions between market objects."""


class NumericalError(MuPricingError):
    """A numerical routine produced NaN or an out-of-domain value."""


class SolverError(MuPricingError):
    """An LP or nonlinear solve failed to converge."""


class UnboundedError(MuPricingError):
    """The utility maximization problem is unbounded above (defensive)."""


class NoMartingaleMeasureError(MuPricingError):
    """The stock market itself admits arbitrage: no equivalent martingale measure."""


class ReplicableClaimError(MuPricingError):
    """A claim is replicable by trading, so price sets degenerate."""


class PrecisionError(MuPricingError):
    """Certification of a subgradient failed within the iteration budget."""


class PreconditionError(MuPricingError):
    """An operation was called outside its stated precondition."""
