"""
Errors Module

This module defines the exception hierarchy shared by every package. Library code raises
these; the CLI maps each category to an exit code.
"""

from typing import Optional


class AEEError(Exception):
    """Base class for all application errors."""

    category = "error"
    exit_code = 1


class DimensionError(AEEError, ValueError):
    """Raised when tensor shapes or series lengths do not line up."""

    category = "dimension"


class ParameterError(AEEError, ValueError):
    """Raised for invalid hyper-parameters."""

    category = "parameter"
    exit_code = 3


class StateError(AEEError, RuntimeError):
    """Raised when an operation needs state that is not there (trace, decoder, ...)."""

    category = "state"


class DataError(AEEError, ValueError):
    """Raised for malformed or inconsistent datasets."""

    category = "data"
    exit_code = 4


class TrainingDivergedError(AEEError, RuntimeError):
    """Raised when the training loss stops being finite."""

    category = "training"
    exit_code = 5

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"Training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class ModelFormatError(AEEError, ValueError):
    """Raised when a model file cannot be parsed."""

    category = "model-format"
    exit_code = 4


class UnsupportedVersionError(ModelFormatError):
    """Raised when a model file carries a format version this build cannot read."""

    category = "model-version"

    def __init__(self, found: int, supported: int):
        super().__init__(f"Unsupported model format version {found} (supported: {supported})")
        self.found = found
        self.supported = supported


class NumericalError(AEEError, ArithmeticError):
    """Raised when a linear system cannot be solved even after regularization."""

    category = "numerical"
    exit_code = 5


class ExplanationSetError(AEEError, ValueError):
    """Raised when explanations cannot be aggregated together."""

    category = "explanation-set"


class ConfigError(AEEError, ValueError):
    """Raised for invalid configuration trees."""

    category = "config"
    exit_code = 3


class MissingArtifactError(AEEError, FileNotFoundError):
    """Raised by the CLI when a prerequisite artifact is missing."""

    category = "missing-artifact"
    exit_code = 2

    def __init__(self, artifact: str, command: Optional[str] = None):
        message = f"Missing artifact: {artifact}"
        if command:
            message += f" (run `{command}` first to produce it)"
        super().__init__(message)
        self.artifact = artifact
        self.command = command
