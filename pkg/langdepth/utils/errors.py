"""
This module contains the exception hierarchy shared by every component.

Each exception carries the process exit code the command-line surface
reports for it.
"""

from pathlib import Path
from typing import Optional, Union


class LangDepthError(Exception):
    """Base class for all errors raised by langdepth."""

    exit_code: int = 1


class ConfigurationError(LangDepthError):
    """Invalid configuration value or unknown configuration key."""

    exit_code = 2


class OrderingError(ConfigurationError):
    """Timesteps handed to a sampler in the wrong order."""


class DataError(LangDepthError):
    """Missing, corrupt or inconsistent data on disk or in memory."""

    exit_code = 3

    def __init__(
        self, message: str, path: Optional[Union[str, Path]] = None
    ) -> None:
        """
        Initialize the error.

        Args:
            message: Human readable description.
            path: The offending file, when there is one.
        """
        self.path = str(path) if path is not None else None
        if self.path is not None:
            message = f"{message}: {self.path}"
        super().__init__(message)


class ShapeError(DataError):
    """Array or tensor shapes that do not satisfy an operation contract."""


class DegenerateInputError(DataError):
    """Input that makes a fit or a normalization undefined."""


class NumericError(LangDepthError):
    """Non-finite values in a tensor, a loss or a sampling trajectory."""

    exit_code = 4

    def __init__(
        self,
        message: str,
        tensor: Optional[str] = None,
        step: Optional[int] = None,
    ) -> None:
        """
        Initialize the error.

        Args:
            message: Human readable description.
            tensor: Name of the tensor holding the non-finite value.
            step: Sampler step index at which the trajectory broke.
        """
        self.tensor = tensor
        self.step = step
        if tensor is not None:
            message = f"{message} (tensor {tensor})"
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
