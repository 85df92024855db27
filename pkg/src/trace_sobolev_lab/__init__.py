"""Numerical laboratory for the sharp trace-Sobolev curve on the half-space."""

from .kernel import Params, QuadratureConfig

__version__ = "0.1.0"

__all__ = ["Params", "QuadratureConfig", "__version__"]
