"""Feature normalization, FPS/KNN and splat grouping."""

from .features import FeatureSelection, normalize_block, normalize_features
from .groups import GroupedSplats, build_groups, intra_group_variance
from .sampling import fps, knn

__all__ = [
    "FeatureSelection",
    "GroupedSplats",
    "build_groups",
    "fps",
    "intra_group_variance",
    "knn",
    "normalize_block",
    "normalize_features",
]
