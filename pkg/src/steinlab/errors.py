"""Exception types shared across the package."""


class SteinLabError(Exception):
    """Base class for all steinlab errors."""


class NotPositiveDefinite(SteinLabError):
    """A matrix required to be positive definite is not (within tolerance)."""


class DimensionMismatch(SteinLabError):
    """Array shapes do not agree with the declared dimension."""


class ZeroMean(SteinLabError):
    """Size biasing requested for a distribution with mean zero."""


class ZeroMass(SteinLabError):
    """A tilted distribution has zero total mass."""


class QuadratureNotConverged(SteinLabError):
    """Adaptive quadrature refinement stalled above the requested tolerance."""


class UnsupportedDimension(SteinLabError):
    """Tensor-product quadrature requested in too high a dimension."""


class ConditionalUnavailable(SteinLabError):
    """A supplied conditional-law procedure rejected the requested index."""


class TiltedSamplerFailure(SteinLabError):
    """The tilted-marginal sampler could not produce a draw."""


class InfeasibleAdjustment(SteinLabError):
    """A resampled cell count cannot be reconciled with the ball budget."""


class TooLarge(SteinLabError):
    """An exact-enumeration oracle was asked for an instance beyond its cap."""


class NonfiniteNorm(SteinLabError):
    """A bound evaluator received an infinite or NaN derivative norm."""


class AsymmetricNeighborhoods(SteinLabError):
    """A dependency-neighborhood structure is not symmetric."""
