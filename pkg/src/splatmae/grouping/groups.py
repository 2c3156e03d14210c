"""Splitting a splat set into fixed-size groups."""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..splats.splat_set import SplatSet
from ..utils.exceptions import ConfigurationError
from ..utils.logging_config import get_logger
from ..utils.validators import ArrayValidator
from .features import FeatureSelection, normalize_features
from .sampling import fps, knn

logger = get_logger(__name__)

POOL_SPACES = ("centroid", "grouping")


@dataclass
class GroupedSplats:
    """Groups of one object.

    Attributes:
        center_indices: n indices into the downsampled set
        neighbor_indices: n x group_size indices, each row starting at its center
        grouping_centers: n x f_G normalized grouping features of the centers
        center_xyz: n x 3 centroids of the center splats
        local_embed: n x group_size x f_E with the C block recentered per group
        raw_embed: n x group_size x f_E without recentering
        pool_neighbor_indices: n x P neighbors seen by the pooling layer
        pool_embed: n x P x f_E, C block recentered per group
        p: downsampled splat count
        embedding_slices: column range of each E parameter
    """

    center_indices: np.ndarray
    neighbor_indices: np.ndarray
    grouping_centers: np.ndarray
    center_xyz: np.ndarray
    local_embed: np.ndarray
    raw_embed: np.ndarray
    pool_neighbor_indices: np.ndarray
    pool_embed: np.ndarray
    p: int
    embedding_slices: Dict[str, slice]

    @property
    def num_groups(self) -> int:
        return len(self.center_indices)

    @property
    def group_size(self) -> int:
        return self.neighbor_indices.shape[1]

    def subset(self, groups: np.ndarray) -> "GroupedSplats":
        """Keep only the listed groups, in the given order."""
        groups = np.asarray(groups, dtype=np.int64)
        return GroupedSplats(
            center_indices=self.center_indices[groups],
            neighbor_indices=self.neighbor_indices[groups],
            grouping_centers=self.grouping_centers[groups],
            center_xyz=self.center_xyz[groups],
            local_embed=self.local_embed[groups],
            raw_embed=self.raw_embed[groups],
            pool_neighbor_indices=self.pool_neighbor_indices[groups],
            pool_embed=self.pool_embed[groups],
            p=self.p,
            embedding_slices=self.embedding_slices,
        )


def _centers_first(neighbors: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Ensure each row starts with its own center.

    The center has distance zero, so moving it to the front keeps rows
    ascending even when duplicates tie with it.
    """
    out = neighbors.copy()
    for row, center in enumerate(centers):
        if out[row, 0] == center:
            continue
        rest = [idx for idx in out[row] if idx != center]
        out[row] = [center] + rest[: out.shape[1] - 1]
    return out


def _content_start(features: np.ndarray) -> int:
    """Permutation-independent starting index: the lexicographically smallest row."""
    order = np.lexsort(features.T[::-1])
    return int(order[0])


def _recenter(
    embed: np.ndarray, centers: np.ndarray, slices: Dict[str, slice]
) -> np.ndarray:
    local = embed.copy()
    if "C" in slices:
        c = slices["C"]
        local[:, :, c] = local[:, :, c] - centers[:, None, c]
    return local


def build_groups(
    splats: SplatSet,
    selection: FeatureSelection,
    n: int,
    group_size: int,
    seed: Optional[int] = 0,
    pool_neighbors: Optional[int] = None,
    pool_space: str = "centroid",
    centroid_only_fps: bool = False,
) -> GroupedSplats:
    """FPS centers and KNN neighbors in the normalized grouping space.

    Args:
        splats: Downsampled splat set
        selection: Grouping and embedding parameters
        n: Number of groups
        group_size: Neighbors per group
        seed: FPS start seed; None derives the start from the data itself so
            the result does not depend on splat order
        pool_neighbors: P, neighbors per group handed to the pooling layer
            (default 2 * group_size, capped at the splat count)
        pool_space: "centroid" to search pooling neighbors by position,
            "grouping" to reuse the grouping space
        centroid_only_fps: Pick centers by position only
    """
    p = splats.n
    ArrayValidator.require_count("num_groups", n, p)
    ArrayValidator.require_count("group_size", group_size, p)
    if pool_space not in POOL_SPACES:
        raise ConfigurationError(
            f"Unknown pool space {pool_space}", {"known": list(POOL_SPACES)}
        )

    g_feats = normalize_features(splats, selection, role="grouping")
    fps_space = splats.centroids if centroid_only_fps else g_feats
    start = _content_start(fps_space) if seed is None else None
    centers = fps(fps_space, n, seed=seed, start_index=start)

    neighbors = _centers_first(knn(g_feats[centers], g_feats, group_size), centers)

    e_feats = normalize_features(splats, selection, role="embedding")
    slices = selection.embedding_slices()
    center_embed = e_feats[centers]
    raw_embed = e_feats[neighbors]
    local_embed = _recenter(raw_embed, center_embed, slices)

    P = min(pool_neighbors or 2 * group_size, p)
    pool_feats = splats.centroids if pool_space == "centroid" else g_feats
    pool_indices = _centers_first(knn(pool_feats[centers], pool_feats, P), centers)
    pool_embed = _recenter(e_feats[pool_indices], center_embed, slices)

    logger.debug(f"Built {n} groups of {group_size} (P={P}) from {p} splats")
    return GroupedSplats(
        center_indices=centers,
        neighbor_indices=neighbors,
        grouping_centers=g_feats[centers],
        center_xyz=splats.centroids[centers].copy(),
        local_embed=local_embed,
        raw_embed=raw_embed,
        pool_neighbor_indices=pool_indices,
        pool_embed=pool_embed,
        p=p,
        embedding_slices=slices,
    )


def intra_group_variance(values: np.ndarray, neighbor_indices: np.ndarray) -> float:
    """Mean over groups of the per-group variance of ``values``, summed over columns."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    grouped = values[neighbor_indices]
    return float(grouped.var(axis=1).sum(axis=-1).mean())
