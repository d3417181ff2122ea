import logging
from typing import Union
from datetime import datetime, timezone

logger = logging.getLogger(__name__)


class NcdException(Exception):
    """Base exception for ncdetect"""
    def __init__(self, message: str, exit_code: int = 1, details: dict = None):
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class ConfigError(NcdException):
    """Configuration could not be parsed or validated"""
    def __init__(self, message: str, details: dict = None):
        super().__init__(message, 2, details)


class MissingInputError(NcdException):
    """A stage input does not exist"""
    def __init__(self, resource: str, path: Union[str, object], details: dict = None):
        message = f"{resource} not found at '{path}'"
        super().__init__(message, 3, details)


class DomainError(NcdException, ValueError):
    """A numeric operation was called outside its domain"""
    def __init__(self, message: str, details: dict = None, exit_code: int = 6):
        super().__init__(message, exit_code, details)


class DimensionMismatchError(DomainError):
    """Vectors or records of different dimension were combined"""
    def __init__(self, expected: int, actual: int, what: str = "vector", details: dict = None):
        message = f"Dimension mismatch for {what}: expected {expected}, got {actual}"
        super().__init__(message, details, exit_code=4)


class InfeasibleConfigError(DomainError):
    """A generator configuration cannot be satisfied"""


class FeatureFormatError(NcdException):
    """Binary feature or embedding container is malformed"""
    def __init__(self, message: str, path: Union[str, object, None] = None, details: dict = None):
        details = dict(details or {})
        if path is not None:
            details["path"] = str(path)
            message = f"{path}: {message}"
        super().__init__(message, 5, details)


class BadMagicError(FeatureFormatError):
    """File does not start with the expected magic bytes"""


class VersionMismatchError(FeatureFormatError):
    """File was written with an unsupported format version"""


class TruncatedPayloadError(FeatureFormatError):
    """Header promises more records than the payload holds"""


class NonFiniteValueError(FeatureFormatError):
    """NaN or infinity found where a finite value is required"""


class CorruptRecordError(FeatureFormatError):
    """A record carries an invalid flag or enum value"""


def handle_stage_exception(stage: str, exc: Exception) -> int:
    """Log a failed stage with a structured record and return its exit code"""
    error_id = f"err_{int(datetime.now(timezone.utc).timestamp())}"

    if isinstance(exc, NcdException):
        logger.error(
            f"[{stage}] {type(exc).__name__}: {exc.message}",
            extra={
                "error_id": error_id,
                "stage": stage,
                "exit_code": exc.exit_code,
                "details": exc.details,
            }
        )
        return exc.exit_code

    logger.error(
        f"[{stage}] Unhandled Exception: {str(exc)}",
        extra={
            "error_id": error_id,
            "stage": stage,
            "exception_type": type(exc).__name__,
        },
        exc_info=True
    )
    return 1
