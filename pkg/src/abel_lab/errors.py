"""Exception types raised across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class SpecParseError(ValueError):
    """An operator or scenario file could not be parsed."""


class AmbiguousJordanStructure(RuntimeError):
    """Numerical Jordan structure cannot be decided at the requested tolerance."""


class PairingError(RuntimeError):
    """Biorthogonal pairing matrix is singular."""


class ContourProximityError(RuntimeError):
    """A contour or evaluation point is too close to the spectrum."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, worst_segment=None):
        super().__init__(message)
        self.worst_segment = worst_segment


class DivergentTailError(ArithmeticError):
    """Extrapolated counting-function tail makes an integral diverge."""


class RingTooCrowdedError(RuntimeError):
    """Every candidate radius in a ring is excluded by the margin."""


class NotPowerRegularError(ValueError):
    """Cluster sizes are not two-sided bounded by a power of the index."""
