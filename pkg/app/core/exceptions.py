"""
Exception hierarchy

Every error raised by the library derives from QillumException. The CLI maps
each family onto a process exit code.
"""

from typing import Any, Optional


class QillumException(Exception):
    """Base class for library errors"""
    exit_code = 1


class ConfigurationException(QillumException):
    """Raised for invalid parameters, unknown families or unusable grids"""
    exit_code = 2


class NumericalToleranceException(QillumException):
    """Raised when a numerical result cannot be certified to tolerance"""
    exit_code = 3


class TruncationException(NumericalToleranceException):
    """Raised when probability mass lost to Fock truncation exceeds the tolerance"""

    def __init__(self, message: str, tail_mass: float = 0.0, tolerance: float = 0.0):
        super().__init__(message)
        self.tail_mass = tail_mass
        self.tolerance = tolerance


class SensitivityUndefinedException(NumericalToleranceException):
    """Raised when dM/deta vanishes so the error-propagation sensitivity is undefined"""

    def __init__(self, message: str, partial: Optional[Any] = None):
        super().__init__(message)
        self.partial = partial


class VerificationFailedException(QillumException):
    """Raised when one or more verification checks fail"""
    exit_code = 4
