"""Feature selection and per-block normalization of splat parameters."""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from ..splats.splat_set import PARAM_DIMS, PARAM_NAMES, SplatSet
from ..utils.exceptions import ConfigurationError

NORM_FLOOR = 1e-12
SH_DC_DIMS = 3


def _canonical(names: Sequence[str], role: str) -> Tuple[str, ...]:
    unknown = [n for n in names if n not in PARAM_NAMES]
    if unknown:
        raise ConfigurationError(
            f"Unknown {role} parameter(s): {', '.join(unknown)}",
            {"role": role, "unknown": unknown, "known": list(PARAM_NAMES)},
        )
    if not names:
        raise ConfigurationError(
            f"The {role} feature selection is empty", {"role": role}
        )
    return tuple(n for n in PARAM_NAMES if n in set(names))


@dataclass(frozen=True)
class FeatureSelection:
    """Which splat parameters drive grouping (G) and which are embedded (E).

    Blocks are always laid out in the canonical order C, O, S, R, SH. In the
    grouping space SH contributes only its 3 DC values; in the embedding
    space it contributes all 48 coefficients.
    """

    grouping: Tuple[str, ...] = ("C",)
    embedding: Tuple[str, ...] = ("C",)
    weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "grouping", _canonical(self.grouping, "grouping"))
        object.__setattr__(self, "embedding", _canonical(self.embedding, "embedding"))
        for name, weight in self.weights.items():
            if name not in PARAM_NAMES:
                raise ConfigurationError(f"Weight given for unknown parameter {name}")
            if weight < 0:
                raise ConfigurationError(f"Grouping weight for {name} must be >= 0")

    def weight(self, name: str) -> float:
        return float(self.weights.get(name, 1.0))

    @staticmethod
    def block_dim(name: str, dc_only: bool) -> int:
        if name == "SH" and dc_only:
            return SH_DC_DIMS
        return PARAM_DIMS[name]

    @property
    def grouping_dim(self) -> int:
        return sum(self.block_dim(n, dc_only=True) for n in self.grouping)

    @property
    def embedding_dim(self) -> int:
        return sum(self.block_dim(n, dc_only=False) for n in self.embedding)

    def embedding_slices(self) -> Dict[str, slice]:
        """Column range of each embedding parameter inside the f_E feature."""
        slices: Dict[str, slice] = {}
        start = 0
        for name in self.embedding:
            stop = start + self.block_dim(name, dc_only=False)
            slices[name] = slice(start, stop)
            start = stop
        return slices


def normalize_block(block: np.ndarray, name: str) -> np.ndarray:
    """Recenter a block and scale its largest row to unit norm.

    Quaternions pass through unchanged. A block whose largest centered row is
    below the floor becomes all zeros.
    """
    block = np.asarray(block, dtype=np.float64)
    if name == "R":
        return block.copy()
    centered = block - block.mean(axis=0, keepdims=True)
    max_norm = float(np.linalg.norm(centered, axis=1).max()) if len(centered) else 0.0
    if max_norm < NORM_FLOOR:
        return np.zeros_like(centered)
    return centered / max_norm


def normalize_features(
    splats: SplatSet, selection: FeatureSelection, role: str = "grouping"
) -> np.ndarray:
    """Per-splat normalized features for the grouping or embedding selection.

    Grouping features use SH DC terms only and are scaled by the per-block
    weights; embedding features keep every SH coefficient and are unweighted.
    """
    if role not in ("grouping", "embedding"):
        raise ConfigurationError(f"Unknown feature role: {role}")
    names = selection.grouping if role == "grouping" else selection.embedding
    dc_only = role == "grouping"

    blocks: List[np.ndarray] = []
    for name in names:
        block = splats.feature_block(name)
        if name == "SH" and dc_only:
            block = block[:, :SH_DC_DIMS]
        normalized = normalize_block(block, name)
        if dc_only:
            normalized = normalized * selection.weight(name)
        blocks.append(normalized)
    return np.concatenate(blocks, axis=1)
