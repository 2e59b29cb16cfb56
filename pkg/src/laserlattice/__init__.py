"""Simulation and verification suite for dissipatively coupled qubit-laser lattices."""

from .errors import (
    ConvergenceError,
    DivergenceError,
    NumericalFailure,
    SpecValidationError,
)
from .model import (
    DerivedCoeffs,
    LatticeSpec,
    ModelParams,
    bonds,
    derive_coeffs,
    neighbors,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DivergenceError",
    "NumericalFailure",
    "SpecValidationError",
    "DerivedCoeffs",
    "LatticeSpec",
    "ModelParams",
    "bonds",
    "derive_coeffs",
    "neighbors",
    "__version__",
]
