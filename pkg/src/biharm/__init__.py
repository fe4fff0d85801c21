"""Spectral variational solver for fourth-order equations on flat tori.

The package finds and certifies multiple solutions of

    Delta^2 u + div(a grad u) + h u = f |u|^(q-2) u

on unit-volume flat tori, with sign-changing weight f, subcritical
exponents 2 < q < N = 2n/(n-4) and the critical case q = N reached by
continuation.
"""

from .errors import (
    BadSigma,
    BiharmError,
    Collapse,
    ConfigError,
    DivergingNorms,
    ExpressionError,
    GeometryMismatch,
    HypothesisViolated,
    InfeasibleConstraint,
    NonConvergence,
    NonPositiveEps0,
    ShapeNotFound,
)
from .geometry import SpectralField, TorusGeometry
from .problem import ExponentPair, ProblemData, einstein_preset

__all__ = [
    "BadSigma",
    "BiharmError",
    "Collapse",
    "ConfigError",
    "DivergingNorms",
    "ExponentPair",
    "ExpressionError",
    "GeometryMismatch",
    "HypothesisViolated",
    "InfeasibleConstraint",
    "NonConvergence",
    "NonPositiveEps0",
    "ProblemData",
    "ShapeNotFound",
    "SpectralField",
    "TorusGeometry",
    "einstein_preset",
]

__version__ = "0.1.0"
