"""3DGS-compatible binary PLY reading and writing."""

from pathlib import Path
from typing import List, Union

import numpy as np
from plyfile import PlyData, PlyElement
from scipy.special import expit, logit

from ..utils.exceptions import DataError, DataFormatError, DatasetIOError
from ..utils.logging_config import get_logger
from .splat_set import SH_COEFFS, SplatSet, canonicalize

logger = get_logger(__name__)

OPACITY_CLIP = 1e-7

POSITION_PROPS = ["x", "y", "z"]
NORMAL_PROPS = ["nx", "ny", "nz"]
DC_PROPS = [f"f_dc_{i}" for i in range(3)]
REST_PROPS = [f"f_rest_{i}" for i in range(SH_COEFFS - 3)]
SCALE_PROPS = [f"scale_{i}" for i in range(3)]
ROT_PROPS = [f"rot_{i}" for i in range(4)]
REQUIRED_PROPS = (
    POSITION_PROPS + DC_PROPS + REST_PROPS + ["opacity"] + SCALE_PROPS + ROT_PROPS
)


def _columns(vertex: np.ndarray, names: List[str]) -> np.ndarray:
    return np.stack(
        [np.asarray(vertex[name], dtype=np.float64) for name in names], axis=1
    )


def load_ply(path: Union[str, Path]) -> SplatSet:
    """Read a binary little-endian 3DGS PLY and activate its parameters."""
    path = Path(path)
    if not path.exists():
        raise DatasetIOError(f"PLY file not found: {path}", {"path": str(path)})

    try:
        ply = PlyData.read(str(path))
    except Exception as e:
        raise DataFormatError(f"Cannot parse PLY file {path}: {e}", {"path": str(path)})

    if ply.text:
        raise DataFormatError(
            f"ASCII PLY is not supported, expected binary_little_endian: {path}",
            {"path": str(path)},
        )
    if ply.byte_order != "<":
        raise DataFormatError(
            f"Big-endian PLY is not supported: {path}", {"path": str(path)}
        )

    try:
        vertex = ply["vertex"].data
    except KeyError:
        raise DataFormatError(
            f"PLY file has no vertex element: {path}", {"path": str(path)}
        )

    present = set(vertex.dtype.names or ())
    for prop in REQUIRED_PROPS:
        if prop not in present:
            raise DataFormatError(
                f"PLY file {path} is missing vertex property '{prop}'",
                {"path": str(path), "property": prop},
            )

    centroids = _columns(vertex, POSITION_PROPS)
    opacities = expit(np.asarray(vertex["opacity"], dtype=np.float64))[:, None]
    scales = np.exp(_columns(vertex, SCALE_PROPS))
    with np.errstate(invalid="ignore", divide="ignore"):
        rotations = canonicalize(_columns(vertex, ROT_PROPS))
    sh = np.concatenate(
        [_columns(vertex, DC_PROPS), _columns(vertex, REST_PROPS)], axis=1
    )

    activated = np.concatenate([centroids, opacities, scales, rotations, sh], axis=1)
    bad_rows = ~np.all(np.isfinite(activated), axis=1)
    if np.any(bad_rows):
        index = int(np.flatnonzero(bad_rows)[0])
        raise DataError(
            f"Splat {index} in {path} has non-finite activated parameters",
            {"path": str(path), "index": index},
        )

    logger.debug(f"Loaded {len(centroids)} splats from {path}")
    return SplatSet(centroids, opacities, scales, rotations, sh)


def save_ply(splats: SplatSet, path: Union[str, Path]) -> Path:
    """Write a SplatSet as binary little-endian PLY, storing raw parameters."""
    path = Path(path)
    props = POSITION_PROPS + NORMAL_PROPS + REQUIRED_PROPS[3:]
    vertex = np.zeros(splats.n, dtype=[(name, "<f4") for name in props])

    clipped = np.clip(splats.opacities[:, 0], OPACITY_CLIP, 1.0 - OPACITY_CLIP)
    raw_opacity = logit(clipped)
    columns = {
        **dict(zip(POSITION_PROPS, splats.centroids.T)),
        **dict(zip(DC_PROPS, splats.sh[:, :3].T)),
        **dict(zip(REST_PROPS, splats.sh[:, 3:].T)),
        "opacity": raw_opacity,
        **dict(zip(SCALE_PROPS, np.log(splats.scales).T)),
        **dict(zip(ROT_PROPS, canonicalize(splats.rotations).T)),
    }
    for name, values in columns.items():
        vertex[name] = values

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        element = PlyElement.describe(vertex, "vertex")
        PlyData([element], text=False, byte_order="<").write(str(path))
    except OSError as e:
        raise DatasetIOError(f"Cannot write PLY file {path}: {e}", {"path": str(path)})
    return path
