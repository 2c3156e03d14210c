"""Unit tests for the procedural splat generator."""

import numpy as np
import pytest

from splatmae.data.manifest import DatasetManifest
from splatmae.data.synthetic import (
    SyntheticSpec,
    make_object,
    normal_to_quaternion,
    surface_points,
    synth_generate,
)
from splatmae.splats.splat_set import quaternion_to_matrix
from splatmae.utils.exceptions import ConfigurationError


def _small_spec(**overrides) -> SyntheticSpec:
    values = dict(
        classes=("sphere", "box"),
        per_class=3,
        splats_per_object=48,
        min_splats=8,
        seed=5,
    )
    values.update(overrides)
    return SyntheticSpec(**values)


def _relative_files(root):
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())


class TestMakeObject:
    """Test single-object generation."""

    @pytest.mark.parametrize("kind", ["sphere", "box", "cylinder", "torus", "cone"])
    def test_valid_and_normalized(self, kind):
        """Test every primitive gives a valid set inside the unit ball."""
        spec = SyntheticSpec(splats_per_object=200)
        splats, parts = make_object(kind, spec, np.random.default_rng(0))
        assert splats.n == 200
        assert splats.validate() == []
        assert np.linalg.norm(splats.centroids, axis=1).max() == pytest.approx(1.0)
        np.testing.assert_allclose(splats.centroids.mean(axis=0), 0.0, atol=1e-12)
        assert parts.shape == (200,)

    def test_sphere_is_one_part(self):
        """Test a sphere has a single part label."""
        spec = SyntheticSpec(splats_per_object=100)
        _, parts = make_object("sphere", spec, np.random.default_rng(1))
        assert set(parts.tolist()) == {0}

    def test_cylinder_caps_are_more_opaque(self):
        """Test planar caps exceed curved sides in opacity by about the margin."""
        spec = SyntheticSpec(splats_per_object=2000, opacity_margin=0.3)
        splats, parts = make_object("cylinder", spec, np.random.default_rng(2))
        opacity = splats.opacities[:, 0]
        gap = opacity[parts == 1].mean() - opacity[parts == 0].mean()
        assert gap == pytest.approx(0.3, abs=0.02)

    def test_same_rng_same_object(self):
        """Test generation is a pure function of the generator state."""
        spec = SyntheticSpec(splats_per_object=64)
        a, _ = make_object("torus", spec, np.random.default_rng(3))
        b, _ = make_object("torus", spec, np.random.default_rng(3))
        np.testing.assert_array_equal(a.centroids, b.centroids)
        np.testing.assert_array_equal(a.sh, b.sh)

    def test_surface_points_in_unit_ball(self):
        """Test point-cloud samples are normalized."""
        points = surface_points("cone", 300, np.random.default_rng(4))
        assert points.shape == (300, 3)
        assert np.linalg.norm(points, axis=1).max() == pytest.approx(1.0)


class TestNormalToQuaternion:
    """Test splat orientation from surface normals."""

    def test_rotates_z_onto_normal(self, rng):
        """Test the rotated local z axis equals the normal."""
        normals = rng.normal(size=(20, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        normals = np.vstack([normals, [[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]])
        matrices = quaternion_to_matrix(normal_to_quaternion(normals))
        np.testing.assert_allclose(matrices[:, :, 2], normals, atol=1e-9)


class TestSpecValidation:
    """Test generator settings checks."""

    def test_unknown_class(self):
        """Test unknown primitives are rejected."""
        with pytest.raises(ConfigurationError):
            _small_spec(classes=("sphere", "teapot")).validate()

    def test_too_few_splats(self):
        """Test objects smaller than the group size are rejected."""
        with pytest.raises(ConfigurationError):
            _small_spec(splats_per_object=4).validate()

    def test_opacity_pattern_range(self):
        """Test a margin that pushes curved opacity below zero is rejected."""
        with pytest.raises(ConfigurationError):
            _small_spec(opacity_margin=0.9).validate()

    def test_test_split_size(self):
        """Test the held-out count rounds and always leaves a training object."""
        assert _small_spec(per_class=10, test_fraction=0.2).num_test == 2
        assert _small_spec(per_class=2, test_fraction=0.9).num_test == 1
        assert _small_spec(per_class=1).num_test == 0


class TestSynthGenerate:
    """Test writing a synthetic dataset."""

    def test_bytewise_deterministic(self, tmp_path):
        """Test two runs with the same settings write identical files."""
        spec = _small_spec()
        synth_generate(spec, tmp_path / "a")
        synth_generate(spec, tmp_path / "b")
        files_a = _relative_files(tmp_path / "a")
        files_b = _relative_files(tmp_path / "b")
        assert files_a == files_b
        for rel in files_a:
            first = (tmp_path / "a" / rel).read_bytes()
            assert first == (tmp_path / "b" / rel).read_bytes()

    def test_manifest_layout(self, tmp_path):
        """Test records, class ids and splits."""
        manifest = synth_generate(_small_spec(per_class=5, test_fraction=0.2), tmp_path)
        reread = DatasetManifest.read(tmp_path)
        assert len(reread) == 10
        assert reread.class_names == {0: "sphere", 1: "box"}
        assert len(manifest.split("test")) == 2
        assert reread.records[0].path == "objects/sphere_0000.ply"
        reread.check_files()

    def test_point_clouds(self, tmp_path):
        """Test optional .xyz samples are written next to each object."""
        synth_generate(_small_spec(write_point_clouds=True), tmp_path)
        lines = (tmp_path / "objects" / "box_0002.xyz").read_text().splitlines()
        assert len(lines) == 48
        assert len(lines[0].split()) == 3
