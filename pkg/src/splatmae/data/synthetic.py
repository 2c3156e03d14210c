"""Procedural splat objects with class and part labels.

Each object is sampled from the surface of a primitive. Planar regions get
flat, large, opaque splats and curved regions smaller, more transparent ones,
and every class has its own base color. Part labels follow surface regions:
cylinder and cone caps, box top and bottom faces, the inner half of a torus.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Tuple, Union

import numpy as np

from ..splats.ply_io import save_ply
from ..splats.splat_set import SH_C0, SH_COEFFS, SplatSet, canonicalize
from ..utils.exceptions import ConfigurationError, DatasetIOError
from ..utils.logging_config import get_logger
from .manifest import MANIFEST_NAME, DatasetManifest, ManifestRecord

logger = get_logger(__name__)

PRIMITIVES = ("sphere", "box", "cylinder", "torus", "cone")

CLASS_COLORS = {
    "sphere": (0.85, 0.25, 0.2),
    "box": (0.2, 0.7, 0.3),
    "cylinder": (0.2, 0.35, 0.85),
    "torus": (0.9, 0.8, 0.2),
    "cone": (0.7, 0.3, 0.8),
}

# points, normals, part ids, planar flags
Surface = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


@dataclass
class SyntheticSpec:
    """What ``synth_generate`` produces.

    Attributes:
        classes: Primitive kinds, one class each, in class-id order
        per_class: Objects per class
        splats_per_object: Splats sampled per object
        min_splats: Lower bound on ``splats_per_object`` (the group size in use)
        planar_opacity: Mean opacity on planar regions
        opacity_margin: How much lower the mean opacity is on curved regions
        planar_scale: In-plane splat radius on planar regions
        curved_scale: Splat radius on curved regions
        position_jitter: Std of positional noise, before normalization
        color_noise: Std of noise added to the class color
        part_colors: Shift the color of part 1 so parts differ in color too
        test_fraction: Share of each class assigned to the test split
        write_point_clouds: Also write a uniform surface sample as ``.xyz``
        seed: Generator seed
    """

    classes: Tuple[str, ...] = PRIMITIVES
    per_class: int = 64
    splats_per_object: int = 1024
    min_splats: int = 32
    planar_opacity: float = 0.85
    opacity_margin: float = 0.3
    planar_scale: float = 0.03
    curved_scale: float = 0.012
    position_jitter: float = 0.004
    color_noise: float = 0.05
    part_colors: bool = True
    test_fraction: float = 0.2
    write_point_clouds: bool = False
    seed: int = 0

    def validate(self) -> None:
        unknown = [c for c in self.classes if c not in PRIMITIVES]
        if unknown or not self.classes:
            raise ConfigurationError(
                f"Unknown or missing primitive classes: {unknown}",
                {"known": list(PRIMITIVES)},
            )
        if len(set(self.classes)) != len(self.classes):
            raise ConfigurationError("Primitive classes must be distinct")
        if self.per_class < 1:
            raise ConfigurationError(
                f"per_class must be positive, got {self.per_class}"
            )
        if self.splats_per_object < self.min_splats:
            raise ConfigurationError(
                f"splats_per_object {self.splats_per_object} is below the group size "
                f"{self.min_splats}",
                {
                    "splats_per_object": self.splats_per_object,
                    "min_splats": self.min_splats,
                },
            )
        low = self.planar_opacity - self.opacity_margin
        if not 0.0 < low < self.planar_opacity < 1.0:
            raise ConfigurationError("Opacity pattern must stay inside (0, 1)")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigurationError(
                f"test_fraction must be in [0, 1), got {self.test_fraction}"
            )

    @property
    def num_test(self) -> int:
        if self.per_class < 2:
            return 0
        return min(int(round(self.per_class * self.test_fraction)), self.per_class - 1)


def _choose_regions(rng: np.random.Generator, n: int, areas: List[float]) -> np.ndarray:
    probs = np.asarray(areas, dtype=np.float64)
    return rng.choice(len(areas), size=n, p=probs / probs.sum())


def _sphere(rng: np.random.Generator, n: int) -> Surface:
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    zeros = np.zeros(n, dtype=np.int64)
    return normals.copy(), normals, zeros, zeros.astype(bool)


def _box(rng: np.random.Generator, n: int) -> Surface:
    half = rng.uniform(0.5, 1.0, size=3)
    # face pairs orthogonal to x, y, z
    areas = [4 * half[1] * half[2], 4 * half[0] * half[2], 4 * half[0] * half[1]]
    axis = _choose_regions(rng, n, areas)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    points = rng.uniform(-1.0, 1.0, size=(n, 3)) * half
    rows = np.arange(n)
    points[rows, axis] = sign * half[axis]
    normals = np.zeros((n, 3))
    normals[rows, axis] = sign
    parts = (axis == 2).astype(np.int64)
    return points, normals, parts, np.ones(n, dtype=bool)


def _disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = rng.uniform(0.0, 2 * np.pi, n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _cylinder(rng: np.random.Generator, n: int) -> Surface:
    radius = rng.uniform(0.4, 0.7)
    height = rng.uniform(0.8, 1.6)
    areas = [2 * np.pi * radius * height, 2 * np.pi * radius**2]
    region = _choose_regions(rng, n, areas)
    points = np.zeros((n, 3))
    normals = np.zeros((n, 3))

    side = region == 0
    theta = rng.uniform(0.0, 2 * np.pi, side.sum())
    points[side] = np.stack(
        [
            radius * np.cos(theta),
            radius * np.sin(theta),
            rng.uniform(-height / 2, height / 2, side.sum()),
        ],
        axis=1,
    )
    normals[side] = np.stack(
        [np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=1
    )

    cap = ~side
    top = np.where(rng.random(cap.sum()) < 0.5, 1.0, -1.0)
    points[cap, :2] = _disk(rng, cap.sum(), radius)
    points[cap, 2] = top * height / 2
    normals[cap, 2] = top
    return points, normals, cap.astype(np.int64), cap


def _torus(rng: np.random.Generator, n: int) -> Surface:
    major = rng.uniform(0.55, 0.75)
    minor = rng.uniform(0.15, 0.3)
    thetas: List[np.ndarray] = []
    count = 0
    while count < n:
        theta = rng.uniform(0.0, 2 * np.pi, 2 * n)
        # area element is proportional to major + minor * cos(theta)
        keep = rng.random(2 * n) < (major + minor * np.cos(theta)) / (major + minor)
        thetas.append(theta[keep])
        count += int(keep.sum())
    theta = np.concatenate(thetas)[:n]
    phi = rng.uniform(0.0, 2 * np.pi, n)
    ring = major + minor * np.cos(theta)
    points = np.stack(
        [ring * np.cos(phi), ring * np.sin(phi), minor * np.sin(theta)], axis=1
    )
    normals = np.stack(
        [np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), np.sin(theta)],
        axis=1,
    )
    parts = (np.cos(theta) < 0).astype(np.int64)
    return points, normals, parts, np.zeros(n, dtype=bool)


def _cone(rng: np.random.Generator, n: int) -> Surface:
    radius = rng.uniform(0.5, 0.8)
    height = rng.uniform(1.0, 1.6)
    slant = np.hypot(radius, height)
    region = _choose_regions(rng, n, [np.pi * radius * slant, np.pi * radius**2])
    points = np.zeros((n, 3))
    normals = np.zeros((n, 3))

    lateral = region == 0
    m = int(lateral.sum())
    t = np.sqrt(rng.random(m))
    theta = rng.uniform(0.0, 2 * np.pi, m)
    points[lateral] = np.stack(
        [
            t * radius * np.cos(theta),
            t * radius * np.sin(theta),
            height / 2 - t * height,
        ],
        axis=1,
    )
    normals[lateral] = np.stack(
        [height * np.cos(theta), height * np.sin(theta), np.full(m, radius)], axis=1
    ) / slant

    base = ~lateral
    points[base, :2] = _disk(rng, base.sum(), radius)
    points[base, 2] = -height / 2
    normals[base, 2] = -1.0
    return points, normals, base.astype(np.int64), base


SAMPLERS: Dict[str, Callable[[np.random.Generator, int], Surface]] = {
    "sphere": _sphere,
    "box": _box,
    "cylinder": _cylinder,
    "torus": _torus,
    "cone": _cone,
}


def normal_to_quaternion(normals: np.ndarray) -> np.ndarray:
    """Quaternions rotating the local z axis onto each unit normal."""
    n = np.asarray(normals, dtype=np.float64)
    q = np.stack([1.0 + n[:, 2], -n[:, 1], n[:, 0], np.zeros(len(n))], axis=1)
    flipped = n[:, 2] < -1.0 + 1e-9
    q[flipped] = (0.0, 1.0, 0.0, 0.0)
    return canonicalize(q)


def make_object(
    kind: str, spec: SyntheticSpec, rng: np.random.Generator
) -> Tuple[SplatSet, np.ndarray]:
    """One splat object of primitive ``kind`` and its per-splat part labels."""
    n = spec.splats_per_object
    points, normals, parts, planar = SAMPLERS[kind](rng, n)
    points = points + rng.normal(0.0, spec.position_jitter, size=points.shape)

    points -= points.mean(axis=0)
    extent = np.linalg.norm(points, axis=1).max()
    points /= extent

    curved = spec.planar_opacity - spec.opacity_margin
    opacity = np.where(planar, spec.planar_opacity, curved)
    opacity = np.clip(opacity + rng.uniform(-0.05, 0.05, n), 0.01, 0.99)

    radius = np.where(planar, spec.planar_scale, spec.curved_scale)
    radius = radius * rng.uniform(0.8, 1.25, n)
    thickness = np.where(planar, 0.1, 0.35) * radius
    scales = np.stack([radius, radius, thickness], axis=1)

    rgb = np.tile(np.asarray(CLASS_COLORS[kind]), (n, 1))
    if spec.part_colors:
        rgb[parts == 1] = np.clip(rgb[parts == 1] * 0.6 + 0.15, 0.0, 1.0)
    rgb = rgb + rng.normal(0.0, spec.color_noise, size=(n, 3))
    sh = np.zeros((n, SH_COEFFS))
    sh[:, :3] = (rgb - 0.5) / SH_C0
    sh[:, 3:] = rng.normal(0.0, 0.01, size=(n, SH_COEFFS - 3))

    splats = SplatSet(points, opacity, scales, normal_to_quaternion(normals), sh)
    return splats.check(), parts


def surface_points(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform surface sample of ``kind`` normalized to the unit ball."""
    points = SAMPLERS[kind](rng, n)[0]
    points = points - points.mean(axis=0)
    return points / np.linalg.norm(points, axis=1).max()


def _write_labels(path: Path, labels: np.ndarray) -> None:
    path.write_text("".join(f"{int(v)}\n" for v in labels))


def _write_xyz(path: Path, points: np.ndarray) -> None:
    path.write_text("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in points.tolist()))


def synth_generate(spec: SyntheticSpec, out_dir: Union[str, Path]) -> DatasetManifest:
    """Write PLY files, part-label files and a manifest under ``out_dir``.

    Output is a pure function of ``spec``; reruns produce identical bytes.
    """
    spec.validate()
    out_dir = Path(out_dir)
    objects_dir = out_dir / "objects"
    try:
        objects_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetIOError(
            f"Cannot create {objects_dir}: {e}", {"path": str(objects_dir)}
        )

    records: List[ManifestRecord] = []
    first_test = spec.per_class - spec.num_test
    for class_id, kind in enumerate(spec.classes):
        for index in range(spec.per_class):
            rng = np.random.default_rng([spec.seed, class_id, index])
            splats, parts = make_object(kind, spec, rng)
            stem = f"{kind}_{index:04d}"
            save_ply(splats, objects_dir / f"{stem}.ply")
            try:
                _write_labels(objects_dir / f"{stem}.labels", parts)
                if spec.write_point_clouds:
                    cloud_rng = np.random.default_rng([spec.seed, class_id, index, 1])
                    _write_xyz(
                        objects_dir / f"{stem}.xyz",
                        surface_points(kind, spec.splats_per_object, cloud_rng),
                    )
            except OSError as e:
                raise DatasetIOError(
                    f"Cannot write files for {stem}: {e}", {"object": stem}
                )
            records.append(
                ManifestRecord(
                    path=f"objects/{stem}.ply",
                    class_id=class_id,
                    class_name=kind,
                    part_labels=f"objects/{stem}.labels",
                    split="test" if index >= first_test else "train",
                )
            )
        logger.info(f"Generated {spec.per_class} {kind} objects")

    manifest = DatasetManifest(records, out_dir)
    manifest.write(out_dir / MANIFEST_NAME)
    return manifest
