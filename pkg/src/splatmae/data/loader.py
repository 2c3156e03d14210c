"""Manifest-driven dataset loading and the downsampling front-end."""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

import numpy as np

from ..core.config_manager import DOWNSAMPLE_METHODS, RunConfig
from ..grouping.sampling import fps
from ..splats.ply_io import load_ply
from ..splats.splat_set import SplatSet
from ..utils.exceptions import (
    ConfigurationError,
    DataFormatError,
    DatasetIOError,
    ValidationError,
)
from ..utils.logging_config import get_logger
from .manifest import DatasetManifest, ManifestRecord

logger = get_logger(__name__)


def downsample_indices(
    splats: SplatSet, target: int, method: str = "fps", seed: int = 0
) -> np.ndarray:
    """Rows of a ``target``-splat subset, by FPS on centroids or at random."""
    if method not in DOWNSAMPLE_METHODS:
        raise ConfigurationError(
            f"Unknown downsample method {method}", {"known": list(DOWNSAMPLE_METHODS)}
        )
    if target < 1 or target > splats.n:
        raise ValidationError(
            f"Cannot downsample {splats.n} splats to {target}",
            {"target": target, "available": splats.n},
        )
    if target == splats.n:
        return np.arange(splats.n)
    if method == "fps":
        return fps(splats.centroids, target, seed=seed)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(splats.n, size=target, replace=False))


def downsample(
    splats: SplatSet, target: int, method: str = "fps", seed: int = 0
) -> SplatSet:
    """Subset of ``target`` splats; every parameter block uses the same rows."""
    return splats.take(downsample_indices(splats, target, method, seed))


def load_labels(path: Union[str, Path]) -> np.ndarray:
    """Part labels, one integer per line."""
    path = Path(path)
    try:
        lines = path.read_text().split()
    except OSError as e:
        raise DatasetIOError(
            f"Cannot read part labels {path}: {e}", {"path": str(path)}
        )
    try:
        return np.array([int(v) for v in lines], dtype=np.int64)
    except ValueError:
        raise DataFormatError(
            f"Part label file {path} has non-integer entries", {"path": str(path)}
        )


@dataclass
class DatasetItem:
    """One downsampled object with its labels."""

    splats: SplatSet
    class_id: int
    class_name: str
    part_labels: Optional[np.ndarray]
    path: str
    split: str


class SplatDataset:
    """Loaded objects in manifest order."""

    def __init__(self, items: List[DatasetItem], data_seed: int = 0):
        self.items = items
        self.data_seed = data_seed

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> DatasetItem:
        return self.items[index]

    def __iter__(self) -> Iterator[DatasetItem]:
        return iter(self.items)

    @property
    def class_names(self) -> Dict[int, str]:
        return {item.class_id: item.class_name for item in self.items}

    def split(self, name: str) -> List[DatasetItem]:
        return [item for item in self.items if item.split == name]

    def epoch_order(self, epoch: int) -> np.ndarray:
        rng = np.random.default_rng([self.data_seed, epoch])
        return rng.permutation(len(self.items))

    def iter_epoch(self, epoch: int) -> Iterator[DatasetItem]:
        """Items in the shuffled order of ``epoch``; same seed, same order."""
        for index in self.epoch_order(epoch):
            yield self.items[index]


def load_item(
    manifest: DatasetManifest, record: ManifestRecord, config: RunConfig
) -> DatasetItem:
    path = manifest.resolve(record.path)
    try:
        splats = load_ply(path)
    except (DatasetIOError, DataFormatError) as e:
        raise type(e)(
            f"Manifest record {record.path}: {e.message}",
            {"record": record.path, **e.details},
        )
    splats.check()

    labels = None
    if record.part_labels is not None:
        labels = load_labels(manifest.resolve(record.part_labels))
        if len(labels) != splats.n:
            raise DataFormatError(
                f"Record {record.path} has {len(labels)} part labels "
                f"for {splats.n} splats",
                {"record": record.path},
            )

    gc = config.grouping
    if splats.n < gc.num_splats:
        raise ValidationError(
            f"Record {record.path} has {splats.n} splats, "
            f"fewer than num_splats {gc.num_splats}",
            {"record": record.path, "available": splats.n, "target": gc.num_splats},
        )
    rows = downsample_indices(
        splats, gc.num_splats, gc.downsample_method, config.seeds.data
    )
    return DatasetItem(
        splats=splats.take(rows),
        class_id=record.class_id,
        class_name=record.class_name,
        part_labels=None if labels is None else labels[rows],
        path=record.path,
        split=record.split,
    )


def load_dataset(
    manifest: Union[DatasetManifest, str, Path],
    config: RunConfig,
    split: Optional[str] = None,
) -> SplatDataset:
    """Load, validate and downsample every record (of ``split`` when given)."""
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.read(manifest)
    if split is not None:
        manifest = manifest.split(split)
    manifest.check_files()
    items = [load_item(manifest, record, config) for record in manifest.records]
    logger.info(f"Loaded {len(items)} objects from {manifest.root}")
    return SplatDataset(items, config.seeds.data)
