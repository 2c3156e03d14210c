"""Unit tests for the dataset manifest format."""

import pytest

from splatmae.data.manifest import MANIFEST_HEADER, DatasetManifest, ManifestRecord
from splatmae.utils.exceptions import DataFormatError, DatasetIOError


def _write(path, *lines):
    path.write_text("\n".join(lines) + "\n")
    return path


class TestManifestRead:
    """Test parsing manifest files."""

    def test_round_trip(self, tmp_path):
        """Test written records read back unchanged."""
        records = [
            ManifestRecord("a.ply", 0, "sphere", "a.labels", "train"),
            ManifestRecord("b.ply", 1, "box", None, "test"),
        ]
        DatasetManifest(records, tmp_path).write(tmp_path / "manifest.tsv")
        manifest = DatasetManifest.read(tmp_path / "manifest.tsv")
        assert manifest.records == records
        assert manifest.root == tmp_path

    def test_directory_argument(self, tmp_path):
        """Test a directory resolves to its manifest.tsv."""
        _write(tmp_path / "manifest.tsv", MANIFEST_HEADER, "x.ply\t0\tsphere\t-\ttrain")
        assert len(DatasetManifest.read(tmp_path)) == 1

    def test_comments_and_blank_lines(self, tmp_path):
        """Test comment and blank lines are skipped."""
        path = _write(
            tmp_path / "m.tsv",
            MANIFEST_HEADER,
            "",
            "# note",
            "x.ply\t0\tsphere\t-\ttrain",
        )
        assert len(DatasetManifest.read(path)) == 1

    def test_missing_header(self, tmp_path):
        """Test files without the version header are rejected."""
        path = _write(tmp_path / "m.tsv", "x.ply\t0\tsphere\t-\ttrain")
        with pytest.raises(DataFormatError):
            DatasetManifest.read(path)

    def test_wrong_field_count(self, tmp_path):
        """Test the offending line number is reported."""
        path = _write(tmp_path / "m.tsv", MANIFEST_HEADER, "x.ply\t0\tsphere")
        with pytest.raises(DataFormatError) as exc_info:
            DatasetManifest.read(path)
        assert exc_info.value.details["line"] == 2

    def test_non_integer_class(self, tmp_path):
        """Test class ids must be integers."""
        path = _write(
            tmp_path / "m.tsv", MANIFEST_HEADER, "x.ply\tzero\tsphere\t-\ttrain"
        )
        with pytest.raises(DataFormatError):
            DatasetManifest.read(path)

    def test_missing_file(self, tmp_path):
        """Test an absent manifest is an I/O error."""
        with pytest.raises(DatasetIOError):
            DatasetManifest.read(tmp_path / "none.tsv")


class TestManifestValidate:
    """Test record-level consistency checks."""

    def test_sparse_class_ids(self, tmp_path):
        """Test class ids must be dense from 0."""
        manifest = DatasetManifest([ManifestRecord("a.ply", 1, "box")], tmp_path)
        with pytest.raises(DataFormatError):
            manifest.validate()

    def test_unknown_split(self, tmp_path):
        """Test only train and test splits are allowed."""
        record = ManifestRecord("a.ply", 0, "box", split="val")
        manifest = DatasetManifest([record], tmp_path)
        with pytest.raises(DataFormatError):
            manifest.validate()

    def test_conflicting_class_names(self, tmp_path):
        """Test one id cannot carry two names."""
        manifest = DatasetManifest(
            [ManifestRecord("a.ply", 0, "box"), ManifestRecord("b.ply", 0, "cube")],
            tmp_path,
        )
        with pytest.raises(DataFormatError):
            manifest.validate()

    def test_check_files_names_record(self, tmp_path):
        """Test a missing object file is reported with its record."""
        (tmp_path / "a.ply").write_bytes(b"")
        record = ManifestRecord("a.ply", 0, "box", "a.labels")
        manifest = DatasetManifest([record], tmp_path)
        with pytest.raises(DatasetIOError) as exc_info:
            manifest.check_files()
        assert exc_info.value.details["record"] == "a.ply"

    def test_split_filter(self, tmp_path):
        """Test splits keep the root and record order."""
        manifest = DatasetManifest(
            [
                ManifestRecord("a.ply", 0, "box", split="test"),
                ManifestRecord("b.ply", 0, "box"),
                ManifestRecord("c.ply", 0, "box", split="test"),
            ],
            tmp_path,
        )
        test = manifest.split("test")
        assert [r.path for r in test.records] == ["a.ply", "c.ply"]
        assert test.root == tmp_path
