"""Exception hierarchy used throughout the package."""


class PCAMError(Exception):
    """Base class for all package errors."""


class ParameterError(PCAMError, ValueError):
    """An argument is outside its valid domain."""


class DegenerateWeightsError(PCAMError, ValueError):
    """All correspondence weights are zero."""


class RankDeficiencyError(PCAMError, ValueError):
    """Weighted points are collinear or coincident, the rotation is undetermined."""


class NumericError(PCAMError, FloatingPointError):
    """A computation produced NaN or Inf."""


class ModeError(PCAMError, ValueError):
    """Operation requested under an incompatible map mode."""


class ConfigError(PCAMError, ValueError):
    """Invalid run or loss configuration."""


class ParseError(PCAMError, ValueError):
    """Malformed point cloud or metadata file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyCloudError(ParseError):
    """A point cloud file contained no points."""


class GenerationError(PCAMError, RuntimeError):
    """Synthetic pair generation could not satisfy its constraints."""


class CheckpointError(PCAMError, ValueError):
    """Checkpoint file is truncated, mismatched or inconsistent with the model."""
