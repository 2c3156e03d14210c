"""Gaussian splat data model and per-splat math.

All values held by a ``SplatSet`` are activated: opacities are post-sigmoid,
scales post-exp, and quaternions unit-norm with a non-negative w component.
The stored (raw) forms only exist inside ``ply_io``.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np

from ..utils.exceptions import DataError, NumericError, ValidationError
from ..utils.validators import ArrayValidator

SH_C0 = 0.28209479177387814
SH_COEFFS = 48
COVARIANCE_EPS = 1e-8
QUATERNION_TOLERANCE = 1e-5

PARAM_NAMES = ("C", "O", "S", "R", "SH")
PARAM_DIMS = {"C": 3, "O": 1, "S": 3, "R": 4, "SH": SH_COEFFS}


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (..., 4) quaternions in (w, x, y, z) order."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rows = [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]
    return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)


def quaternion_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b, so the rotation of the result applies b first."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def canonicalize(q: np.ndarray) -> np.ndarray:
    """Normalize quaternions and flip sign so that w >= 0."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., :1] < 0, -q, q)


def covariance(scale: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Sigma = R S S^T R^T for one splat, or a batch of them."""
    scale = ArrayValidator.require_finite("scale", scale)
    rotation = ArrayValidator.require_finite("rotation", rotation)
    rot = quaternion_to_matrix(rotation)
    m = rot * scale[..., None, :]
    return m @ np.swapaxes(m, -1, -2)


def influence(splat_index: int, splats: "SplatSet", q: np.ndarray) -> float:
    """Opacity-weighted Gaussian falloff of one splat at point ``q``."""
    q = ArrayValidator.require_finite("q", q)
    sigma = covariance(splats.scales[splat_index], splats.rotations[splat_index])
    sigma = sigma + COVARIANCE_EPS * np.eye(3)
    delta = q - splats.centroids[splat_index]
    try:
        solved = np.linalg.solve(sigma, delta)
    except np.linalg.LinAlgError:
        raise NumericError(
            f"Singular covariance for splat {splat_index}", {"index": int(splat_index)}
        )
    mahalanobis = float(delta @ solved)
    return float(splats.opacities[splat_index, 0] * np.exp(-0.5 * mahalanobis))


def composite_ray(
    influences: Sequence[float], colors: Sequence[Sequence[float]]
) -> np.ndarray:
    """Front-to-back alpha blending of colors along one ray."""
    f = np.asarray(influences, dtype=np.float64).reshape(-1)
    if len(colors):
        c = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    else:
        c = np.zeros((0, 3))
    if len(f) != len(c):
        raise ValidationError(
            f"Got {len(f)} influences but {len(c)} colors",
            {"influences": len(f), "colors": len(c)},
        )
    if np.any((f < 0) | (f > 1)):
        raise ValidationError("Influences must lie in [0, 1]")
    transmittance = np.concatenate([[1.0], np.cumprod(1.0 - f)[:-1]]) if len(f) else f
    return (c * (f * transmittance)[:, None]).sum(axis=0)


def sh_to_rgb(sh_row: np.ndarray) -> np.ndarray:
    """Display color from the degree-0 SH terms."""
    sh_row = np.asarray(sh_row, dtype=np.float64)
    return np.clip(0.5 + SH_C0 * sh_row[..., :3], 0.0, 1.0)


@dataclass
class SplatSet:
    """N splats stored as parallel activated arrays.

    Attributes:
        centroids: N x 3 positions
        opacities: N x 1 values in [0, 1]
        scales: N x 3 positive axis lengths
        rotations: N x 4 unit quaternions (w, x, y, z), w >= 0
        sh: N x 48 SH coefficients, the three DC values first
    """

    centroids: np.ndarray
    opacities: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    sh: np.ndarray

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64).reshape(-1, 3)
        self.opacities = np.asarray(self.opacities, dtype=np.float64).reshape(-1, 1)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(-1, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 4)
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(-1, SH_COEFFS)
        ArrayValidator.require_same_length(
            PARAM_NAMES,
            self.centroids,
            self.opacities,
            self.scales,
            self.rotations,
            self.sh,
        )

    def __len__(self) -> int:
        return len(self.centroids)

    @property
    def n(self) -> int:
        return len(self.centroids)

    def feature_block(self, name: str) -> np.ndarray:
        """Return the array for parameter ``name`` (C, O, S, R or SH)."""
        blocks = {
            "C": self.centroids,
            "O": self.opacities,
            "S": self.scales,
            "R": self.rotations,
            "SH": self.sh,
        }
        if name not in blocks:
            raise ValidationError(f"Unknown splat parameter: {name}", {"name": name})
        return blocks[name]

    def take(self, indices: Sequence[int]) -> "SplatSet":
        """Row subset; attribute tuples are copied, never recomputed."""
        idx = np.asarray(indices, dtype=np.int64)
        return SplatSet(
            centroids=self.centroids[idx].copy(),
            opacities=self.opacities[idx].copy(),
            scales=self.scales[idx].copy(),
            rotations=self.rotations[idx].copy(),
            sh=self.sh[idx].copy(),
        )

    def colors(self) -> np.ndarray:
        return sh_to_rgb(self.sh)

    def validate(self) -> List[str]:
        """List every invariant violation, naming the first offending index."""
        violations: List[str] = []

        def _first(mask: np.ndarray) -> int:
            return int(np.flatnonzero(mask)[0])

        for name in PARAM_NAMES:
            rows_ok = np.all(np.isfinite(self.feature_block(name)), axis=1)
            if not np.all(rows_ok):
                violations.append(
                    f"{name} has non-finite values at index {_first(~rows_ok)}"
                )

        o = self.opacities[:, 0]
        bad = (o < 0) | (o > 1)
        if np.any(bad):
            violations.append(f"opacity outside [0, 1] at index {_first(bad)}")

        bad = ~np.all(self.scales > 0, axis=1)
        if np.any(bad):
            violations.append(f"non-positive scale at index {_first(bad)}")

        norms = np.linalg.norm(self.rotations, axis=1)
        bad = np.abs(norms - 1.0) > QUATERNION_TOLERANCE
        if np.any(bad):
            violations.append(f"quaternion not unit-norm at index {_first(bad)}")
        bad = self.rotations[:, 0] < 0
        if np.any(bad):
            violations.append(f"quaternion with negative w at index {_first(bad)}")
        return violations

    def check(self) -> "SplatSet":
        """Raise DataError on the first invariant violation."""
        violations = self.validate()
        if violations:
            raise DataError(violations[0], {"violations": violations})
        return self

    def summary(self) -> Dict[str, Any]:
        """Per-attribute min/mean/max plus the splat count and violations."""
        stats: Dict[str, Any] = {"N": self.n}
        for name in PARAM_NAMES:
            block = self.feature_block(name)
            if self.n == 0:
                stats[name] = {"min": None, "mean": None, "max": None}
                continue
            stats[name] = {
                "min": float(block.min()),
                "mean": float(block.mean()),
                "max": float(block.max()),
            }
        stats["violations"] = self.validate()
        return stats

    @classmethod
    def empty(cls) -> "SplatSet":
        return cls(
            np.zeros((0, 3)),
            np.zeros((0, 1)),
            np.zeros((0, 3)),
            np.zeros((0, 4)),
            np.zeros((0, SH_COEFFS)),
        )
