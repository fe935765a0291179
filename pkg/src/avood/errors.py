"""Exception hierarchy shared by all avood modules.

The CLI maps these classes onto distinct process exit codes, so new error
types should subclass the closest existing category rather than the root.
"""


class AvoodError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AvoodError):
    """Invalid configuration value or unknown config key."""


class ParameterError(ConfigError):
    """A function argument violates its documented precondition."""


class ShapeError(AvoodError):
    """Array dimensions are inconsistent with the model or data."""


class DimensionError(ShapeError):
    """Feature/model dimension mismatch (H or C disagree)."""


class DataFormatError(AvoodError):
    """A feature or model file is malformed (magic, version, size, NaN)."""


class ModelFormatError(DataFormatError):
    """A detector model file failed validation on load."""


class TrainingDivergedError(AvoodError):
    """Training produced a non-finite loss; carries epoch/batch context."""


class NonFiniteGradientError(TrainingDivergedError):
    """An optimizer step received a NaN or Inf gradient."""


class CalibrationError(AvoodError):
    """Gaussian calibration is impossible (too few or degenerate samples)."""


class ScoringError(AvoodError):
    """A sample violates a scoring guard (zero-norm feature or logits)."""


class EvaluationError(AvoodError):
    """Metric evaluation received an empty or invalid score set."""


class UnsupportedPathError(AvoodError):
    """Affine analysis was asked to decompose a non FC/ReLU path."""


class BoundViolationError(AvoodError):
    """The reconstruction-error bound check failed beyond tolerance."""
