"""Exception hierarchy for the biharm package."""


class BiharmError(Exception):
    """Base class for all package errors."""


class GeometryMismatch(BiharmError):
    """Operands live on different grids."""


class ExpressionError(BiharmError):
    """Coefficient expression is malformed or not evaluable.

    Carries the zero-based character position of the offending token when
    it is known.
    """

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class ConfigError(BiharmError):
    """Run configuration failed validation."""


class NonConvergence(BiharmError):
    """An iterative solve stopped above its tolerance.

    The best iterate found is attached as ``best`` so callers can degrade
    gracefully.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InfeasibleConstraint(BiharmError):
    """Constraint set is empty on the discrete grid."""


class NonPositiveEps0(BiharmError):
    """Spectral-gap margin eps0 = lambda(eta, q) - sup|h| is not positive."""


class BadSigma(BiharmError):
    """Splitting parameter sigma violates 1 - 2*sigma*sup(a+) > 0."""


class HypothesisViolated(BiharmError):
    """A solver was invoked with its certificate conditions failing."""


class ShapeNotFound(BiharmError):
    """The energy curve does not show the negative-min / positive hump shape."""


class Collapse(BiharmError):
    """Mountain-pass path maximum fell to the endpoint level: no hump."""


class DivergingNorms(BiharmError):
    """Continuation aborted: the explicit H2 bound failed along the family."""
