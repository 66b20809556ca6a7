"""Exception types shared across the toolkit."""


class QnnError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(QnnError):
    """Shapes of operands do not line up."""


class ParameterError(QnnError):
    """A numeric parameter is outside its valid range."""


class InputError(QnnError):
    """Input data violates a precondition (bad label, empty tensor, ...)."""


class FormatError(QnnError):
    """A file does not conform to its on-disk format."""


class CompatibilityError(QnnError):
    """A checkpoint does not match the active model."""


class BuildError(QnnError):
    """A model spec cannot be wired into a consistent network."""


class CalibrationError(QnnError):
    """Coefficient calibration failed (e.g. singular regression)."""


class TrainingDiverged(QnnError):
    """Training aborted on a non-finite loss."""
