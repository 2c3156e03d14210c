"""Input validation utilities for arrays and configuration dictionaries."""

from typing import Any, Iterable, Mapping, Optional, Sequence, Sized

import numpy as np

from .exceptions import ConfigurationError, ValidationError


class ArrayValidator:
    """Reusable checks on numpy inputs."""

    @staticmethod
    def require_finite(name: str, values: Any) -> np.ndarray:
        """Return values as a float array, raising if any entry is NaN or inf."""
        array = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            bad = np.argwhere(~np.isfinite(array))
            raise ValidationError(
                f"{name} contains non-finite values",
                {"name": name, "first_index": bad[0].tolist()},
            )
        return array

    @staticmethod
    def require_matrix(
        name: str, values: Any, columns: Optional[int] = None
    ) -> np.ndarray:
        """Return values as a 2D float array with an optional column count."""
        array = np.asarray(values, dtype=np.float64)
        if array.ndim != 2:
            raise ValidationError(
                f"{name} must be a 2D array, got shape {array.shape}",
                {"name": name, "shape": list(array.shape)},
            )
        if columns is not None and array.shape[1] != columns:
            raise ValidationError(
                f"{name} must have {columns} columns, got {array.shape[1]}",
                {"name": name, "shape": list(array.shape)},
            )
        return array

    @staticmethod
    def require_same_length(names: Sequence[str], *arrays: Sized) -> int:
        """Check every array has the same leading length and return it."""
        lengths = [len(a) for a in arrays]
        if len(set(lengths)) > 1:
            raise ValidationError(
                "Length mismatch: "
                + ", ".join(f"{n}={l}" for n, l in zip(names, lengths)),
                {"lengths": dict(zip(names, lengths))},
            )
        return lengths[0] if lengths else 0

    @staticmethod
    def require_count(name: str, count: int, available: int) -> None:
        """Check that count items can be drawn from available ones."""
        if count < 1:
            raise ValidationError(f"{name} must be at least 1, got {count}")
        if count > available:
            raise ValidationError(
                f"{name}={count} exceeds available {available}",
                {"name": name, "count": count, "available": available},
            )


class ConfigValidator:
    """Validation of raw configuration dictionaries."""

    @staticmethod
    def validate_config_dict(
        data: Mapping[str, Any], schema: Mapping[str, Iterable[str]]
    ) -> None:
        """Reject unknown sections or keys in a flat-sectioned config mapping."""
        for section, values in data.items():
            if section not in schema:
                raise ConfigurationError(
                    f"Unknown config section: {section}",
                    {"section": section, "known": sorted(schema)},
                )
            if not isinstance(values, dict):
                raise ConfigurationError(f"Config section {section} must be a table")
            known = set(schema[section])
            for key in values:
                if key not in known:
                    raise ConfigurationError(
                        f"Unknown config key: {section}.{key}",
                        {"section": section, "key": key},
                    )
