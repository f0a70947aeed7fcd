"""Finite-difference toolkit for a damped clamped-strip MEMS deflection model.

The package couples a fourth-order beam operator on the interval (-1, 1)
with the electrostatic potential of the deformed gap, and layers time
stepping, steady-state continuation, and diagnostic monitors on top.
"""

from .core import (
    DeflectionState,
    Grid1D,
    Grid2D,
    ModelParams,
    profile_polynomial_well,
    profile_zero,
)

__version__ = "0.1.0"

__all__ = [
    "DeflectionState",
    "Grid1D",
    "Grid2D",
    "ModelParams",
    "profile_polynomial_well",
    "profile_zero",
    "__version__",
]
