"""Unit tests for feature normalization, FPS/KNN and group construction."""

import numpy as np
import pytest

from splatmae.grouping.features import (
    FeatureSelection,
    normalize_block,
    normalize_features,
)
from splatmae.grouping.groups import build_groups, intra_group_variance
from splatmae.grouping.sampling import fps, knn
from splatmae.splats.splat_set import SH_COEFFS, SplatSet
from splatmae.utils.exceptions import ConfigurationError, ValidationError

ORACLE_INSTANCES = 100


def brute_force_fps(points: np.ndarray, n: int, start: int) -> np.ndarray:
    chosen = [start]
    while len(chosen) < n:
        best, best_dist = None, -1.0
        for i in range(len(points)):
            if i in chosen:
                continue
            d = min(float(np.sum((points[i] - points[j]) ** 2)) for j in chosen)
            if d > best_dist:
                best, best_dist = i, d
        chosen.append(best)
    return np.array(chosen)


def brute_force_knn(queries: np.ndarray, points: np.ndarray, k: int) -> np.ndarray:
    rows = []
    for q in queries:
        d = [float(np.sum((p - q) ** 2)) for p in points]
        rows.append(sorted(range(len(points)), key=lambda i: (d[i], i))[:k])
    return np.array(rows, dtype=np.int64)


def _random_cloud(rng: np.random.Generator, p: int, dim: int) -> np.ndarray:
    """Continuous points, or small integer grid points with many exact ties."""
    if rng.random() < 0.5:
        return rng.integers(-2, 3, size=(p, dim)).astype(np.float64)
    return rng.normal(size=(p, dim))


def _splats_at(centroids: np.ndarray, opacities=None) -> SplatSet:
    n = len(centroids)
    opacities = np.full(n, 0.5) if opacities is None else opacities
    return SplatSet(
        centroids,
        opacities,
        np.full((n, 3), 0.05),
        np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        np.zeros((n, SH_COEFFS)),
    )


class TestFeatureSelection:
    """Test grouping and embedding selections."""

    def test_canonical_order_and_dims(self):
        """Test blocks are reordered and SH is DC-only for grouping."""
        selection = FeatureSelection(grouping=("SH", "C"), embedding=("R", "C", "SH"))
        assert selection.grouping == ("C", "SH")
        assert selection.grouping_dim == 6
        assert selection.embedding_dim == 3 + 4 + 48
        slices = selection.embedding_slices()
        assert slices["C"] == slice(0, 3)
        assert slices["R"] == slice(3, 7)

    def test_empty_selection(self):
        """Test an empty selection is a configuration error."""
        with pytest.raises(ConfigurationError):
            FeatureSelection(grouping=(), embedding=("C",))

    def test_unknown_parameter(self):
        """Test unknown parameter names are rejected."""
        with pytest.raises(ConfigurationError):
            FeatureSelection(grouping=("C", "N"))

    def test_negative_weight(self):
        """Test grouping weights must be non-negative."""
        with pytest.raises(ConfigurationError):
            FeatureSelection(weights={"O": -1.0})


class TestNormalization:
    """Test per-block recentering and unit-ball scaling."""

    def test_cube_corners(self):
        """Test a centered block has max row norm exactly 1."""
        corners = np.array(
            [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float
        )
        out = normalize_block(corners + 5.0, "C")
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-9)
        assert np.linalg.norm(out, axis=1).max() == pytest.approx(1.0)

    def test_identical_rows_become_zero(self):
        """Test a degenerate block is all zeros."""
        np.testing.assert_array_equal(normalize_block(np.ones((4, 3)), "S"), 0.0)

    def test_opacity_column(self):
        """Test two opacities map to -1 and +1."""
        out = normalize_block(np.array([[0.2], [0.8]]), "O")
        np.testing.assert_allclose(out[:, 0], [-1.0, 1.0])

    def test_quaternions_pass_through(self, make_splats):
        """Test rotations are not recentered."""
        splats = make_splats(5)
        np.testing.assert_array_equal(
            normalize_block(splats.rotations, "R"), splats.rotations
        )

    def test_grouping_weights_scale_blocks(self, make_splats):
        """Test weights multiply grouping features only."""
        splats = make_splats(10)
        plain = FeatureSelection(grouping=("C", "O"), embedding=("C", "O"))
        weighted = FeatureSelection(
            grouping=("C", "O"), embedding=("C", "O"), weights={"O": 3.0}
        )
        g_plain = normalize_features(splats, plain, "grouping")
        g_weighted = normalize_features(splats, weighted, "grouping")
        np.testing.assert_allclose(g_weighted[:, 3], 3.0 * g_plain[:, 3])
        np.testing.assert_array_equal(
            normalize_features(splats, weighted, "embedding"),
            normalize_features(splats, plain, "embedding"),
        )


class TestSampling:
    """Test farthest-point sampling and nearest neighbors."""

    def test_fps_full_permutation(self, rng):
        """Test n = p visits every index once."""
        points = rng.normal(size=(20, 3))
        assert sorted(fps(points, 20, seed=3).tolist()) == list(range(20))

    def test_fps_square_diagonal(self):
        """Test the second pick from a square corner is the opposite corner."""
        square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        assert fps(square, 2, start_index=0).tolist() == [0, 2]

    def test_fps_matches_oracle(self):
        """Test equality with a brute-force greedy sampler on random clouds."""
        for seed in range(ORACLE_INSTANCES):
            rng = np.random.default_rng([7, seed])
            p = int(rng.integers(2, 48))
            points = _random_cloud(rng, p, int(rng.integers(1, 7)))
            n = int(rng.integers(1, min(p, 12) + 1))
            out = fps(points, n, seed=seed)
            expected = brute_force_fps(points, n, int(out[0]))
            np.testing.assert_array_equal(out, expected, err_msg=f"seed {seed}")

    def test_fps_seed_is_deterministic(self, rng):
        """Test the same seed gives the same samples."""
        points = rng.normal(size=(30, 3))
        np.testing.assert_array_equal(fps(points, 5, seed=4), fps(points, 5, seed=4))

    def test_fps_too_many(self, rng):
        """Test asking for more samples than points fails."""
        with pytest.raises(ValidationError):
            fps(rng.normal(size=(5, 3)), 6)

    def test_knn_self_match(self, rng):
        """Test a query equal to a data point finds it first."""
        points = rng.normal(size=(10, 3))
        assert knn(points[[4]], points, 1).tolist() == [[4]]

    def test_knn_on_a_line(self):
        """Test colinear points are ordered by distance."""
        points = np.array([[0.0], [1.0], [2.0], [3.0]])
        assert knn(np.array([[0.0]]), points, 2).tolist() == [[0, 1]]

    def test_knn_ties_to_lowest_index(self):
        """Test equidistant points resolve to the lower index."""
        points = np.array([[1.0], [-1.0], [1.0]])
        assert knn(np.array([[0.0]]), points, 2).tolist() == [[0, 1]]

    def test_knn_matches_oracle(self):
        """Test ordered rows, ties to the lowest index, against brute-force sorting."""
        for seed in range(ORACLE_INSTANCES):
            rng = np.random.default_rng([8, seed])
            p = int(rng.integers(1, 64))
            dim = int(rng.integers(1, 7))
            points = _random_cloud(rng, p, dim)
            queries = _random_cloud(rng, int(rng.integers(1, 6)), dim)
            k = int(rng.integers(1, p + 1))
            expected = brute_force_knn(queries, points, k)
            np.testing.assert_array_equal(
                knn(queries, points, k), expected, err_msg=f"seed {seed}"
            )

    def test_knn_too_many(self, rng):
        """Test k larger than the point count fails."""
        with pytest.raises(ValidationError):
            knn(rng.normal(size=(1, 3)), rng.normal(size=(3, 3)), 4)


class TestBuildGroups:
    """Test group construction."""

    def test_two_clusters(self, rng):
        """Test well-separated clusters end up in separate groups."""
        a = rng.normal(0.0, 0.01, size=(32, 3))
        b = rng.normal(0.0, 0.01, size=(32, 3)) + [10.0, 0.0, 0.0]
        splats = _splats_at(np.concatenate([a, b]))
        groups = build_groups(splats, FeatureSelection(), 2, 32)
        members = [set(row.tolist()) for row in groups.neighbor_indices]
        assert sorted(map(min, members)) == [0, 32]
        assert all(len(m) == 32 for m in members)
        assert set.union(*members) == set(range(64))

    def test_opacity_grouping_is_pure(self, rng):
        """Test grouping on C and O separates co-located splats by opacity."""
        centroids = np.tile(rng.normal(size=(1, 3)), (32, 1))
        opacities = np.where(np.arange(32) < 16, 0.1, 0.9)
        selection = FeatureSelection(grouping=("C", "O"), embedding=("C", "O"))
        groups = build_groups(_splats_at(centroids, opacities), selection, 2, 16)
        for row in groups.neighbor_indices:
            assert len(set(opacities[row].tolist())) == 1

    def test_group_size_one(self, make_splats):
        """Test singleton groups hold their center with zero local position."""
        groups = build_groups(make_splats(20), FeatureSelection(), 5, 1)
        np.testing.assert_array_equal(
            groups.neighbor_indices[:, 0], groups.center_indices
        )
        np.testing.assert_array_equal(groups.local_embed, 0.0)

    def test_rows_start_at_center(self, make_splats):
        """Test every neighbor row begins with its center."""
        groups = build_groups(make_splats(64), FeatureSelection(), 8, 8)
        np.testing.assert_array_equal(
            groups.neighbor_indices[:, 0], groups.center_indices
        )
        assert groups.pool_neighbor_indices.shape == (8, 16)
        assert groups.local_embed.shape == (8, 8, 3)

    def test_local_centroids_are_relative(self, make_splats):
        """Test the C block is recentered on the group center."""
        selection = FeatureSelection(embedding=("C", "O"))
        groups = build_groups(make_splats(32), selection, 4, 4)
        c = groups.embedding_slices["C"]
        o = groups.embedding_slices["O"]
        expected = groups.raw_embed[:, :, c] - groups.raw_embed[:, :1, c]
        np.testing.assert_allclose(groups.local_embed[:, :, c], expected)
        np.testing.assert_array_equal(
            groups.local_embed[:, :, o], groups.raw_embed[:, :, o]
        )

    def test_content_start_ignores_order(self, make_splats, rng):
        """Test data-derived FPS start gives the same groups for shuffled splats."""
        splats = make_splats(40)
        perm = rng.permutation(40)
        a = build_groups(splats, FeatureSelection(), 6, 5, seed=None)
        b = build_groups(splats.take(perm), FeatureSelection(), 6, 5, seed=None)
        np.testing.assert_array_equal(perm[b.center_indices], a.center_indices)
        np.testing.assert_allclose(b.grouping_centers, a.grouping_centers)

    def test_subset(self, make_splats):
        """Test subsets keep the listed groups in order."""
        groups = build_groups(make_splats(32), FeatureSelection(), 4, 4)
        sub = groups.subset(np.array([2, 0]))
        assert sub.num_groups == 2
        np.testing.assert_array_equal(sub.center_indices, groups.center_indices[[2, 0]])

    def test_unknown_pool_space(self, make_splats):
        """Test an unknown pooling space is rejected."""
        with pytest.raises(ConfigurationError):
            build_groups(make_splats(16), FeatureSelection(), 2, 4, pool_space="color")

    def test_group_size_too_large(self, make_splats):
        """Test groups larger than the set fail."""
        with pytest.raises(ValidationError):
            build_groups(make_splats(8), FeatureSelection(), 2, 9)


class TestIntraGroupVariance:
    """Test that grouping on a parameter makes groups purer in it."""

    def test_including_opacity_lowers_its_variance(self, rng):
        """Test adding O to G reduces within-group opacity variance on bimodal data."""
        centroids = rng.uniform(-1.0, 1.0, size=(128, 3))
        opacities = np.where(rng.random(128) < 0.5, 0.1, 0.9)
        splats = _splats_at(centroids, opacities)
        with_o = build_groups(splats, FeatureSelection(grouping=("C", "O")), 16, 8)
        without_o = build_groups(splats, FeatureSelection(grouping=("C",)), 16, 8)
        grouped = intra_group_variance(opacities, with_o.neighbor_indices)
        baseline = intra_group_variance(opacities, without_o.neighbor_indices)
        assert grouped <= baseline
