"""Gaussian splat data model and PLY interchange."""

from .ply_io import load_ply, save_ply
from .splat_set import (
    PARAM_DIMS,
    PARAM_NAMES,
    SH_C0,
    SplatSet,
    canonicalize,
    composite_ray,
    covariance,
    influence,
    quaternion_multiply,
    quaternion_to_matrix,
    sh_to_rgb,
)

__all__ = [
    "PARAM_DIMS",
    "PARAM_NAMES",
    "SH_C0",
    "SplatSet",
    "canonicalize",
    "composite_ray",
    "covariance",
    "influence",
    "load_ply",
    "quaternion_multiply",
    "quaternion_to_matrix",
    "save_ply",
    "sh_to_rgb",
]
