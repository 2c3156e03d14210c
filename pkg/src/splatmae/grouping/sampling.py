"""Exact farthest-point sampling and k-nearest-neighbor search."""

from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from ..utils.validators import ArrayValidator


def fps(
    points: np.ndarray,
    n: int,
    seed: Optional[int] = 0,
    start_index: Optional[int] = None,
) -> np.ndarray:
    """Greedy farthest-point sampling.

    The first index comes from ``start_index`` when given, otherwise from a
    generator seeded with ``seed``. Each later pick maximizes the distance to
    the chosen set; ties go to the lowest index.
    """
    points = ArrayValidator.require_matrix("points", points)
    p = len(points)
    ArrayValidator.require_count("n", n, p)

    if start_index is None:
        start_index = int(np.random.default_rng(seed).integers(p))

    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = start_index
    min_dist = ((points - points[start_index]) ** 2).sum(axis=1)
    min_dist[start_index] = -np.inf
    for i in range(1, n):
        nxt = int(np.argmax(min_dist))
        chosen[i] = nxt
        dist = ((points - points[nxt]) ** 2).sum(axis=1)
        min_dist = np.minimum(min_dist, dist)
        min_dist[nxt] = -np.inf
    return chosen


def pairwise_sq_dists(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    return cdist(queries, points, metric="sqeuclidean")


def knn(queries: np.ndarray, points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest points per query, ascending; ties go to the lowest."""
    queries = ArrayValidator.require_matrix("queries", queries)
    points = ArrayValidator.require_matrix("points", points, columns=queries.shape[1])
    ArrayValidator.require_count("k", k, len(points))
    dists = pairwise_sq_dists(queries, points)
    return np.argsort(dists, axis=1, kind="stable")[:, :k]
