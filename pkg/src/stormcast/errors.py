"""Exception types shared across the package."""


class StormcastError(Exception):
    """Base class for all package-specific errors."""


class FormatError(StormcastError):
    """Input file header or layout does not match the declared format."""


class EmptyInputError(StormcastError):
    """Input contains no data rows."""


class ValidationError(StormcastError):
    """Input data violates a structural invariant (duplicate fix, bad row)."""


class UnimputableFieldError(StormcastError):
    """A field is missing in every fix of a track, so it cannot be interpolated."""


class DegenerateFeatureError(StormcastError):
    """A feature is constant over the fit population; min == max admits no rescaling."""


class SstUnavailableError(StormcastError):
    """No usable sea-surface temperature value near the requested node."""


class ShapeError(StormcastError):
    """Array arguments do not satisfy the declared shape contract."""


class TrainingDivergedError(StormcastError):
    """Loss became non-finite during training."""


class InsufficientDataError(StormcastError):
    """Not enough storms or windows to run the requested procedure."""
