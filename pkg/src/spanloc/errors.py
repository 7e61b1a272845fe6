"""Exception types shared across the package."""


class SpanlocError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SpanlocError):
    """Shapes or axes that violate an operation's contract."""


class ConfigError(SpanlocError):
    """Invalid hyperparameters, flags, or generator settings."""


class DataError(SpanlocError):
    """Invalid dataset contents (bad segments, overlong inputs, ...)."""


class FormatError(DataError):
    """Malformed on-disk files; messages name the offending offset/field."""


class VocabularyError(DataError):
    """Token id outside the embedding table."""


class TrainingError(SpanlocError):
    """Optimization cannot proceed (NaN gradients, degenerate supervision)."""


class MetricError(SpanlocError):
    """Evaluation requested on an empty or inconsistent sample set."""
