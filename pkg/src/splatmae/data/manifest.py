"""Dataset manifest: one tab-separated record per object.

Format::

    # splatmae-manifest v1
    <path>\t<class_id>\t<class_name>\t<part_labels path or ->\t<split>

Paths are relative to the manifest's directory.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from ..utils.exceptions import DataFormatError, DatasetIOError

MANIFEST_VERSION = 1
MANIFEST_HEADER = f"# splatmae-manifest v{MANIFEST_VERSION}"
MANIFEST_NAME = "manifest.tsv"
SPLITS = ("train", "test")
NO_LABELS = "-"


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    class_id: int
    class_name: str
    part_labels: Optional[str] = None
    split: str = "train"

    def to_line(self) -> str:
        labels = self.part_labels if self.part_labels is not None else NO_LABELS
        fields = [self.path, str(self.class_id), self.class_name, labels, self.split]
        return "\t".join(fields)


@dataclass
class DatasetManifest:
    """Records of a dataset plus the directory their paths are relative to."""

    records: List[ManifestRecord] = field(default_factory=list)
    root: Path = field(default_factory=Path)
    version: int = MANIFEST_VERSION

    def __len__(self) -> int:
        return len(self.records)

    @property
    def class_names(self) -> Dict[int, str]:
        ordered = sorted(self.records, key=lambda r: r.class_id)
        return {r.class_id: r.class_name for r in ordered}

    def split(self, name: str) -> "DatasetManifest":
        return DatasetManifest(
            [r for r in self.records if r.split == name], self.root, self.version
        )

    def resolve(self, relative: str) -> Path:
        return self.root / relative

    def validate(self) -> None:
        """Class ids must be dense from 0 and splits known."""
        ids = sorted({r.class_id for r in self.records})
        if ids != list(range(len(ids))):
            raise DataFormatError(
                f"Class ids must be dense from 0, got {ids}", {"class_ids": ids}
            )
        names: Dict[int, str] = {}
        for r in self.records:
            if r.split not in SPLITS:
                raise DataFormatError(
                    f"Unknown split {r.split!r} for {r.path}", {"path": r.path}
                )
            if names.setdefault(r.class_id, r.class_name) != r.class_name:
                raise DataFormatError(
                    f"Class id {r.class_id} has two names: "
                    f"{names[r.class_id]}, {r.class_name}",
                    {"class_id": r.class_id},
                )

    def check_files(self) -> None:
        """Raise DatasetIOError naming the first record whose files are missing."""
        for r in self.records:
            for relative in (r.path, r.part_labels):
                if relative is not None and not self.resolve(relative).is_file():
                    raise DatasetIOError(
                        f"Manifest record {r.path} references missing file {relative}",
                        {"record": r.path, "file": str(self.resolve(relative))},
                    )

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        lines = [MANIFEST_HEADER] + [r.to_line() for r in self.records]
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("\n".join(lines) + "\n")
        except OSError as e:
            raise DatasetIOError(
                f"Cannot write manifest {path}: {e}", {"path": str(path)}
            )
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            text = path.read_text()
        except OSError as e:
            raise DatasetIOError(
                f"Cannot read manifest {path}: {e}", {"path": str(path)}
            )

        lines = text.splitlines()
        if not lines or lines[0].strip() != MANIFEST_HEADER:
            raise DataFormatError(
                f"{path} is not a splatmae manifest (expected '{MANIFEST_HEADER}')",
                {"path": str(path)},
            )
        records = []
        for number, line in enumerate(lines[1:], start=2):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise DataFormatError(
                    f"{path}:{number}: expected 5 tab-separated fields, "
                    f"got {len(fields)}",
                    {"path": str(path), "line": number},
                )
            rel, class_id, class_name, labels, split = fields
            try:
                cid = int(class_id)
            except ValueError:
                raise DataFormatError(
                    f"{path}:{number}: class id {class_id!r} is not an integer",
                    {"path": str(path), "line": number},
                )
            part_labels = None if labels == NO_LABELS else labels
            records.append(ManifestRecord(rel, cid, class_name, part_labels, split))
        manifest = cls(records, path.parent)
        manifest.validate()
        return manifest
