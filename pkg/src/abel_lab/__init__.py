"""Abel-Lidskii root-vector summation laboratory for finite-rank non-selfadjoint operators."""

from .errors import (
    AmbiguousJordanStructure,
    ContourProximityError,
    DivergentTailError,
    NotPowerRegularError,
    PairingError,
    QuadratureError,
    RingTooCrowdedError,
    SpecParseError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousJordanStructure",
    "ContourProximityError",
    "DivergentTailError",
    "NotPowerRegularError",
    "PairingError",
    "QuadratureError",
    "RingTooCrowdedError",
    "SpecParseError",
    "ValidationError",
    "__version__",
]
