from enum import IntEnum
from typing import Any, Dict

from inffusion.schemas.errors import ErrorResponse


class ExitCode(IntEnum):
    """Process exit codes shared by every CLI command"""
    OK = 0
    USAGE = 1
    IO = 2
    VALIDATION = 3


class InfFusionError(Exception):
    """Root of all domain errors; carries a stable code and structured details"""
    error_code = "INFFUSION_ERROR"
    exit_code = ExitCode.VALIDATION

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_response(self) -> ErrorResponse:
        return ErrorResponse(
            error_code=self.error_code,
            error_message=self.message,
            details=self.details or None,
        )


# Usage

class UsageError(InfFusionError):
    error_code = "USAGE_ERROR"
    exit_code = ExitCode.USAGE


# I/O

class DataIOError(InfFusionError):
    error_code = "IO_ERROR"
    exit_code = ExitCode.IO


class MissingInputError(DataIOError):
    error_code = "MISSING_INPUT"


class CubeFormatError(DataIOError):
    error_code = "CUBE_FORMAT"


class BadMagicError(CubeFormatError):
    error_code = "CUBE_BAD_MAGIC"


class UnsupportedVersionError(CubeFormatError):
    error_code = "CUBE_UNSUPPORTED_VERSION"


class TruncatedFileError(CubeFormatError):
    error_code = "CUBE_TRUNCATED"


class CheckpointFormatError(DataIOError):
    error_code = "CHECKPOINT_FORMAT"


# Validation

class ValidationError(InfFusionError):
    error_code = "VALIDATION_ERROR"
    exit_code = ExitCode.VALIDATION


class ShapeError(ValidationError):
    """Shape contract violation; `axis` names the offending dimension"""
    error_code = "SHAPE_MISMATCH"

    def __init__(self, message: str, axis: str, **details: Any):
        super().__init__(message, axis=axis, **details)
        self.axis = axis


class DivisibilityError(ShapeError):
    error_code = "NOT_DIVISIBLE"


class DataShapeError(ShapeError):
    error_code = "DATA_SHAPE_DRIFT"


class SrfFormatError(ValidationError):
    error_code = "SRF_FORMAT"


class ConfigConflictError(ValidationError):
    error_code = "CONFIG_CONFLICT"


class ArchitectureMismatchError(ValidationError):
    error_code = "ARCHITECTURE_MISMATCH"


class MissingGradientError(ValidationError):
    error_code = "MISSING_GRADIENT"


class UnknownModeError(ValidationError):
    error_code = "UNKNOWN_MODE"
