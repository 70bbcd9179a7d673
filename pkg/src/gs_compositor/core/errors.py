# src/gs_compositor/core/errors.py
"""Exception hierarchy shared by every module, with CLI exit codes"""

from pathlib import Path
from typing import Optional, Union


class CompositorError(Exception):
    """Base class for all package errors"""
    exit_code: int = 1


class ConfigError(CompositorError):
    """Invalid or inconsistent configuration"""
    exit_code = 2


class DomainError(CompositorError, ValueError):
    """Argument outside an operation's domain (range, shape, consistency)"""
    exit_code = 3


class CapacityError(DomainError):
    """Not enough input to satisfy a request (pixels, placement attempts)"""


class DataIOError(CompositorError, OSError):
    """Reading or writing an artifact failed"""
    exit_code = 3

    def __init__(self, message: str, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            message = f"{message}: {self.path}"
        super().__init__(message)


class NumericalError(CompositorError, ArithmeticError):
    """Non-finite values or singular matrices during computation"""
    exit_code = 4

    def __init__(
            self,
            message: str,
            iteration: Optional[int] = None,
            gaussian: Optional[int] = None,
    ):
        self.iteration = iteration
        self.gaussian = gaussian
        details = []
        if iteration is not None:
            details.append(f"iteration={iteration}")
        if gaussian is not None:
            details.append(f"gaussian={gaussian}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
