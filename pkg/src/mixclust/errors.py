"""Exception types shared across the package."""


class MixclustError(Exception):
    """Base class for all mixclust-specific errors."""


class DimensionMismatchError(MixclustError):
    """Vector or matrix dimensions are inconsistent."""


class NotPositiveDefiniteError(MixclustError):
    """A covariance matrix is not symmetric positive definite."""


class NonPositiveDenominatorError(MixclustError):
    """The reweighted covariance denominator fell below its guard.

    Signals excessive downweighting, typically a tiny cluster combined
    with a large downweighting exponent.
    """


class DegenerateClusteringError(MixclustError):
    """Every restart collapsed (a cluster emptied repeatedly)."""


class GeometryError(MixclustError):
    """The cluster-boundary geometry is not the bounded-interval case."""


class ConstraintBoundaryError(MixclustError):
    """A functional solution sits on the eigenvalue-constraint boundary."""


class SolveError(MixclustError):
    """An iterative solver failed to converge."""


class SamplingError(MixclustError):
    """A rejection sampler could not reach its acceptance target."""


class ImageFormatError(MixclustError):
    """An image file is unsupported or corrupt."""


class SchemaError(MixclustError):
    """A JSON document does not match its shipped schema."""
