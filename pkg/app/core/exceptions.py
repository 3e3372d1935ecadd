import logging
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_NUMERIC_FAILURE = 2


class BeamformAppException(Exception):
    """Base exception for the application."""
    def __init__(self, message: str, exit_code: int = EXIT_NUMERIC_FAILURE, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class ValidationException(BeamformAppException):
    """Exception raised for invalid inputs (shapes, symmetry, lengths)."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, exit_code=EXIT_NUMERIC_FAILURE, details=details)


class SingularPencilError(BeamformAppException):
    """The right-hand matrix of a generalized eigenproblem is not positive definite."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, exit_code=EXIT_NUMERIC_FAILURE, details=details)


class NumericFailure(BeamformAppException):
    """Bisection did not converge or a quantity became non-finite."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, exit_code=EXIT_NUMERIC_FAILURE, details=details)


class FeasibilityError(BeamformAppException):
    """A Tx/Rx split of the interfering paths exceeds the available dimensions."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, exit_code=EXIT_NUMERIC_FAILURE, details=details)


class DegenerateGeometryError(BeamformAppException):
    """The useful signal is entirely removed by a zero-forcing projection."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, exit_code=EXIT_NUMERIC_FAILURE, details=details)


class ConfigError(BeamformAppException):
    """Exception raised for sweep configuration problems."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, exit_code=EXIT_CONFIG_ERROR, details=details)


def handle_exception(exc: BeamformAppException) -> int:
    """Logs an application error and returns the process exit code."""
    if exc.details:
        logger.error("%s %s", exc.message, exc.details)
    else:
        logger.error("%s", exc.message)
    return exc.exit_code
