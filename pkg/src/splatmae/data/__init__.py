"""Synthetic splat datasets, manifests and loading."""

from .loader import (
    DatasetItem,
    SplatDataset,
    downsample,
    downsample_indices,
    load_dataset,
    load_labels,
)
from .manifest import MANIFEST_HEADER, MANIFEST_NAME, DatasetManifest, ManifestRecord
from .synthetic import (
    PRIMITIVES,
    SyntheticSpec,
    make_object,
    surface_points,
    synth_generate,
)

__all__ = [
    "MANIFEST_HEADER",
    "MANIFEST_NAME",
    "PRIMITIVES",
    "DatasetItem",
    "DatasetManifest",
    "ManifestRecord",
    "SplatDataset",
    "SyntheticSpec",
    "downsample",
    "downsample_indices",
    "load_dataset",
    "load_labels",
    "make_object",
    "surface_points",
    "synth_generate",
]
