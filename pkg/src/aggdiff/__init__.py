"""Stationary states and critical exponents for aggregation-diffusion energies with power-law attraction."""

__version__ = "0.1.0"

from .core import (DIVERGENT, ParameterError, ProblemParams, Regime, alpha_from_q, classify_regime,
                   is_divergent, q_from_alpha)
from .quadrature import DEFAULT_RULE, REFERENCE_GRID, QuadMode, QuadratureRule

__all__ = [
    "DIVERGENT", "ParameterError", "ProblemParams", "Regime", "alpha_from_q", "classify_regime",
    "is_divergent", "q_from_alpha", "DEFAULT_RULE", "REFERENCE_GRID", "QuadMode", "QuadratureRule",
]
