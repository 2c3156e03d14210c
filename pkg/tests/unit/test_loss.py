"""Unit tests for the reconstruction loss and its baseline."""

import itertools

import numpy as np
import pytest

from splatmae.model.loss import mean_baseline, recon_loss, relative_errors
from splatmae.numerics.gradcheck import grad_check
from splatmae.numerics.tensor import Tensor

ORACLE_INSTANCES = 100


def _brute_force(pred_c, true_c, pred_o, true_o):
    """Chamfer plus matched L1 for one group, by explicit loops."""
    forward = np.mean([min(np.sum((p - t) ** 2) for t in true_c) for p in pred_c])
    backward = np.mean([min(np.sum((p - t) ** 2) for p in pred_c) for t in true_c])
    matched = [int(np.argmin([np.sum((p - t) ** 2) for t in true_c])) for p in pred_c]
    l1 = np.mean([abs(pred_o[i, 0] - true_o[j, 0]) for i, j in enumerate(matched)])
    return forward + backward, l1


class TestReconLoss:
    """Test the Chamfer plus matched L1 objective."""

    def test_perfect_prediction(self, rng):
        """Test predicting the targets exactly gives zero loss."""
        targets = {"C": rng.normal(size=(2, 3, 4, 3)), "O": rng.random((2, 3, 4, 1))}
        predictions = {name: Tensor(value) for name, value in targets.items()}
        total, terms = recon_loss(predictions, targets)
        assert total.item() == pytest.approx(0.0)
        assert terms == {"C": pytest.approx(0.0), "O": pytest.approx(0.0)}

    def test_single_point_groups(self):
        """Test one-splat groups at (0,0,0) and (1,0,0) cost 1 + 1."""
        predictions = {"C": Tensor(np.zeros((1, 1, 1, 3)))}
        targets = {"C": np.array([[[[1.0, 0.0, 0.0]]]])}
        total, _ = recon_loss(predictions, targets)
        assert total.item() == pytest.approx(2.0)

    def test_matches_brute_force(self):
        """Test C and O terms against a loop-based oracle on random groups."""
        for seed in range(ORACLE_INSTANCES):
            rng = np.random.default_rng([3, seed])
            size = int(rng.integers(1, 12))
            pred_c, true_c = rng.normal(size=(size, 3)), rng.normal(size=(size, 3))
            pred_o, true_o = rng.random((size, 1)), rng.random((size, 1))
            _, terms = recon_loss(
                {"C": Tensor(pred_c[None, None]), "O": Tensor(pred_o[None, None])},
                {"C": true_c[None, None], "O": true_o[None, None]},
            )
            chamfer, l1 = _brute_force(pred_c, true_c, pred_o, true_o)
            assert terms["C"] == pytest.approx(chamfer), seed
            assert terms["O"] == pytest.approx(l1), seed

    def test_batched_groups_average_brute_force(self):
        """Test the C term over several groups is the mean of per-group oracles."""
        for seed in range(ORACLE_INSTANCES):
            rng = np.random.default_rng([4, seed])
            batch, groups, size = (int(v) for v in rng.integers(1, 5, size=3))
            pred = rng.normal(size=(batch, groups, size, 3))
            truth = rng.normal(size=(batch, groups, size, 3))
            _, terms = recon_loss({"C": Tensor(pred)}, {"C": truth})
            expected = np.mean(
                [
                    _brute_force(p, t, np.zeros((size, 1)), np.zeros((size, 1)))[0]
                    for p, t in zip(
                        pred.reshape(-1, size, 3), truth.reshape(-1, size, 3)
                    )
                ]
            )
            assert terms["C"] == pytest.approx(expected), seed

    def test_chamfer_ignores_order(self, rng):
        """Test permuting predicted items leaves the loss unchanged."""
        pred = rng.normal(size=(1, 1, 6, 3))
        truth = rng.normal(size=(1, 1, 6, 3))
        base, _ = recon_loss({"C": Tensor(pred)}, {"C": truth})
        for perm in itertools.islice(itertools.permutations(range(6)), 5):
            permuted = Tensor(pred[:, :, list(perm)])
            shuffled, _ = recon_loss({"C": permuted}, {"C": truth})
            assert shuffled.item() == pytest.approx(base.item())

    def test_without_centroids_slots_match_by_position(self, rng):
        """Test non-C parameters compare slot to slot when C is not predicted."""
        pred = rng.random((1, 2, 3, 1))
        truth = rng.random((1, 2, 3, 1))
        _, terms = recon_loss({"O": Tensor(pred)}, {"O": truth})
        assert terms["O"] == pytest.approx(np.abs(pred - truth).mean())

    def test_empty_masked_set(self):
        """Test no masked groups gives zero loss."""
        empty = np.zeros((2, 0, 4, 3))
        total, terms = recon_loss({"C": Tensor(empty)}, {"C": empty})
        assert total.item() == 0.0
        assert terms == {"C": 0.0}

    def test_grad_check(self, rng):
        """Test the Chamfer term is differentiable in the prediction."""
        truth = rng.normal(size=(1, 2, 4, 3))
        pred = Tensor(rng.normal(size=(1, 2, 4, 3)))
        assert grad_check(lambda t: recon_loss({"C": t}, {"C": truth})[0], pred) < 1e-4


class TestBaseline:
    """Test the per-group-mean predictor and relative errors."""

    def test_mean_baseline_repeats_group_mean(self, rng):
        """Test every slot predicts its group's mean."""
        targets = {"O": rng.random((2, 3, 4, 1))}
        baseline = mean_baseline(targets)["O"].data
        group_mean = targets["O"].mean(axis=2, keepdims=True)
        expected = np.broadcast_to(group_mean, baseline.shape)
        np.testing.assert_allclose(baseline, expected)

    def test_relative_error_of_perfect_model(self, rng):
        """Test exact predictions have relative error 0."""
        targets = {"C": rng.normal(size=(1, 2, 4, 3))}
        report = relative_errors({"C": Tensor(targets["C"])}, targets)
        assert report["C"]["model"] == pytest.approx(0.0)
        assert report["C"]["baseline"] > 0
        assert report["C"]["relative"] == pytest.approx(0.0)

    def test_relative_error_of_baseline_is_one(self, rng):
        """Test the baseline scored against itself gives ratio 1."""
        targets = {"O": rng.random((1, 2, 4, 1))}
        report = relative_errors(mean_baseline(targets), targets)
        assert report["O"]["relative"] == pytest.approx(1.0)

    def test_constant_targets_give_nan_ratio(self):
        """Test a zero baseline error reports NaN instead of dividing by zero."""
        targets = {"O": np.full((1, 1, 3, 1), 0.5)}
        report = relative_errors(mean_baseline(targets), targets)
        assert np.isnan(report["O"]["relative"])
