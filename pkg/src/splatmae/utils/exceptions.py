"""Custom exceptions for splatmae."""

from typing import Any, Dict, Optional


class SplatMaeError(Exception):
    """Base exception for splatmae."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ValidationError(SplatMaeError):
    """Invalid input values or arguments."""


class ShapeError(ValidationError):
    """Tensor shape mismatch."""


class ConfigurationError(SplatMaeError):
    """Configuration-related errors."""


class NumericError(SplatMaeError):
    """Non-finite or singular numeric state."""


class DataFormatError(SplatMaeError):
    """Malformed files: PLY, manifests, checkpoints."""


class DataError(SplatMaeError):
    """Data that violates a domain invariant."""


class DatasetIOError(SplatMaeError):
    """Missing, unreadable or unwritable files."""


class TrainingError(SplatMaeError):
    """Training aborted."""


class ExportError(SplatMaeError):
    """Report export errors."""
