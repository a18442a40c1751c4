"""
Error types shared by every module.
"""

from typing import Optional


class DomainError(ValueError):
    """Raised when an input violates a documented precondition or invariant."""


class DegenerateSamplesError(DomainError):
    """Raised when all samples lie on one line through the origin."""


class NumericalError(RuntimeError):
    """Raised when an iterative method produces non-finite values."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        """Initialize the error.

        Args:
            message: Human readable description
            iteration: Iteration index at which the failure was detected
        """
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
