"""Custom exceptions for the UBIC PDE discovery package"""

from typing import Optional


class UBICException(Exception):
    """Base exception for all UBIC-related errors."""
    pass


class ConfigException(UBICException):
    """Exception raised for configuration errors."""
    pass


class FieldFormatException(UBICException):
    """Exception raised for malformed field or library files."""
    pass


class SolverBlowupException(UBICException):
    """Exception raised when a PDE integration produces non-finite values."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time:.6g})")
        self.time = time


class DenoiseException(UBICException):
    """Exception raised for denoising errors."""
    pass


class LibraryException(UBICException):
    """Exception raised for weak-form library construction errors."""
    pass


class SubsetException(UBICException):
    """Exception raised for best-subset search errors."""
    pass


class SubsetBudgetException(SubsetException):
    """Exception raised when exhaustive search would exceed its subset budget."""
    pass


class PosteriorException(UBICException):
    """Exception raised for Bayesian posterior errors."""
    pass


class SelectionException(UBICException):
    """Exception raised for model selection errors."""
    pass


class StageException(UBICException):
    """Exception raised when a pipeline stage fails."""

    def __init__(self, stage: str, cause: Optional[BaseException] = None):
        message = f"stage '{stage}' failed"
        if cause is not None:
            message += f": {cause}"
        super().__init__(message)
        self.stage = stage
        self.cause = cause
