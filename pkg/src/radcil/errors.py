"""Exception types shared across the package, with CLI exit codes."""


class BenchError(Exception):
    """Base class; maps to exit code 4 (runtime failure) unless overridden."""

    exit_code = 4


class ConfigError(BenchError):
    """Invalid configuration: bad dims, hyperparameters, flags, or file paths."""

    exit_code = 2


class ProtocolError(ConfigError):
    """B/steps protocol does not divide the dataset's class count."""


class DataError(BenchError):
    """Empty or otherwise unusable data."""

    exit_code = 3


class FormatError(DataError):
    """Malformed dataset file; message carries the byte offset where known."""


class LabelError(DataError):
    """Label outside the valid range."""


class ShapeError(BenchError):
    """Array shape mismatch between producer and consumer."""


class StateError(BenchError):
    """Lifecycle violation: stale trace, frozen-copy tamper, duplicate prototype, released data."""


class NormalizationError(BenchError):
    """Zero-norm vector where a direction is required."""


class CorruptionError(BenchError):
    """Checkpoint failed its integrity or version check."""


class MetricError(BenchError):
    """Metric requested on an incomplete matrix or undefined index."""


class ComparisonError(ConfigError):
    """Run records are not comparable (protocol or dataset mismatch)."""
