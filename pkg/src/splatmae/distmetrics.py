"""Set and distribution distances between splat sets or point clouds.

``chamfer`` is differentiable and is also the centroid term of the
reconstruction loss. ``jsd`` and ``mmd`` compare two objects through their
xy, xz and yz projections. MMD uses a Gaussian kernel on the projected points
with a median-distance bandwidth.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import rel_entr

from .numerics.tensor import Tensor, no_grad
from .splats.splat_set import SplatSet
from .utils.exceptions import ValidationError
from .utils.validators import ArrayValidator

PointsLike = Union[SplatSet, np.ndarray, Tensor]

HISTOGRAM_BINS = 50
HISTOGRAM_RANGE = (-1.0, 1.0)
JSD_SMOOTHING = 1e-12
VIEWS = ((0, 1), (0, 2), (1, 2))
BANDWIDTH_SAMPLE = 4096


def _points(value: PointsLike, name: str) -> np.ndarray:
    if isinstance(value, SplatSet):
        value = value.centroids
    elif isinstance(value, Tensor):
        value = value.data
    points = ArrayValidator.require_matrix(name, value, columns=3)
    if len(points) == 0:
        raise ValidationError(f"{name} is empty", {"name": name})
    return points


def _tensor(value: Union[np.ndarray, Tensor]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def chamfer_batched(pred: Tensor, truth: Tensor) -> Tuple[Tensor, np.ndarray]:
    """Per-batch symmetric Chamfer distance.

    ``pred`` is (G, m, d) and ``truth`` (G, m', d). Returns a (G,) tensor of
    mean squared nearest-neighbor distances summed over both directions, and
    the (G, m) index of the nearest truth item for every predicted item.
    """
    pred, truth = _tensor(pred), _tensor(truth)
    if pred.ndim != 3 or truth.ndim != 3 or pred.shape[-1] != truth.shape[-1]:
        raise ValidationError(
            f"Cannot compare point sets of shapes {pred.shape} and {truth.shape}",
            {"pred": list(pred.shape), "truth": list(truth.shape)},
        )
    groups, m, dim = pred.shape
    m_truth = truth.shape[1]
    diff = pred.reshape(groups, m, 1, dim) - truth.reshape(groups, 1, m_truth, dim)
    sq = (diff * diff).sum(axis=-1)
    forward = sq.min(axis=2).mean(axis=1)
    backward = sq.min(axis=1).mean(axis=1)
    nearest = np.argmin(sq.data, axis=2)
    return forward + backward, nearest


def chamfer(a: Union[np.ndarray, Tensor], b: Union[np.ndarray, Tensor]) -> Tensor:
    """Mean squared distance to the nearest item of the other set, both ways."""
    a, b = _tensor(a), _tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValidationError(
            f"Cannot compare point sets of shapes {a.shape} and {b.shape}",
            {"a": list(a.shape), "b": list(b.shape)},
        )
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("Chamfer distance needs nonempty sets")
    value, _ = chamfer_batched(a.expand_dims(0), b.expand_dims(0))
    return value.reshape(())


@dataclass
class ProjectionHistogram:
    """Counts of points projected onto the xy, xz and yz planes.

    Attributes:
        grids: 3 x bins x bins counts; each grid sums to the point count
        value_range: Range of every axis; outside points land in edge bins
    """

    grids: np.ndarray
    value_range: Tuple[float, float] = HISTOGRAM_RANGE

    @classmethod
    def from_points(
        cls,
        points: PointsLike,
        bins: int = HISTOGRAM_BINS,
        value_range: Tuple[float, float] = HISTOGRAM_RANGE,
    ) -> "ProjectionHistogram":
        pts = np.clip(_points(points, "points"), value_range[0], value_range[1])
        edges = np.linspace(value_range[0], value_range[1], bins + 1)
        grids = np.stack(
            [
                np.histogram2d(pts[:, i], pts[:, j], bins=[edges, edges])[0]
                for i, j in VIEWS
            ]
        )
        return cls(grids=grids, value_range=value_range)

    def distributions(self, smoothing: float = JSD_SMOOTHING) -> np.ndarray:
        smoothed = self.grids + smoothing
        return smoothed / smoothed.sum(axis=(1, 2), keepdims=True)


def jsd(
    p: PointsLike,
    q: PointsLike,
    bins: int = HISTOGRAM_BINS,
    value_range: Tuple[float, float] = HISTOGRAM_RANGE,
) -> float:
    """Jensen-Shannon divergence in nats, averaged over the three projections."""
    hp = ProjectionHistogram.from_points(p, bins, value_range).distributions()
    hq = ProjectionHistogram.from_points(q, bins, value_range).distributions()
    m = 0.5 * (hp + hq)
    per_view = 0.5 * (
        rel_entr(hp, m).sum(axis=(1, 2)) + rel_entr(hq, m).sum(axis=(1, 2))
    )
    return float(np.clip(per_view.mean(), 0.0, np.log(2.0)))


def _gaussian_kernel(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(x, y, metric="sqeuclidean") / (2.0 * bandwidth**2))


def _mmd_view(
    x: np.ndarray, y: np.ndarray, bandwidth: Optional[float], biased: bool
) -> float:
    if bandwidth is None:
        pooled = np.concatenate([x, y])
        if len(pooled) > BANDWIDTH_SAMPLE:
            rng = np.random.default_rng(0)
            pooled = pooled[rng.choice(len(pooled), BANDWIDTH_SAMPLE, replace=False)]
        bandwidth = float(np.median(pdist(pooled))) if len(pooled) > 1 else 1.0
        if bandwidth <= 0.0:
            bandwidth = 1.0
    kxx = _gaussian_kernel(x, x, bandwidth)
    kyy = _gaussian_kernel(y, y, bandwidth)
    kxy = _gaussian_kernel(x, y, bandwidth)

    def _within(k: np.ndarray) -> float:
        n = len(k)
        if biased or n < 2:
            return float(k.mean())
        return float((k.sum() - np.trace(k)) / (n * (n - 1)))

    return _within(kxx) + _within(kyy) - 2.0 * float(kxy.mean())


def mmd(
    p: PointsLike,
    q: PointsLike,
    bandwidth: Optional[float] = None,
    biased: bool = False,
) -> float:
    """Squared MMD with a Gaussian kernel on the three 2D projections.

    The bandwidth defaults to the median pairwise distance of the pooled
    projected sample, computed per view. The result is clamped at 0.
    """
    x, y = _points(p, "p"), _points(q, "q")
    values = [
        _mmd_view(x[:, view], y[:, view], bandwidth, biased)
        for view in map(list, VIEWS)
    ]
    return max(float(np.mean(values)), 0.0)


def compare_sets(a: PointsLike, b: PointsLike) -> Dict[str, float]:
    """All three distances for one pair of objects."""
    pa, pb = _points(a, "a"), _points(b, "b")
    with no_grad():
        chamfer_value = chamfer(pa, pb).item()
    return {"jsd": jsd(pa, pb), "mmd": mmd(pa, pb), "chamfer": chamfer_value}
