"""Integration tests for masked-autoencoder pretraining on synthetic splats."""

import numpy as np
import pytest

from splatmae.data.loader import load_dataset
from splatmae.model.mae import GaussianMaeModel, model_tensors
from splatmae.model.pretrain import evaluate_reconstruction, group_objects, pretrain
from splatmae.numerics.checkpoint import load_checkpoint
from tests.conftest import make_config

pytestmark = [pytest.mark.integration, pytest.mark.slow]


@pytest.fixture(scope="module")
def objects(synthetic_dataset):
    """Downsampled splat sets of every synthetic object."""
    dataset = load_dataset(synthetic_dataset.root, make_config())
    return [item.splats for item in dataset]


class TestPretrainLoop:
    """Test the training loop end to end."""

    def test_memorization_lowers_reconstruction_error(
        self, objects, config_factory, tmp_path
    ):
        """Test training on two objects reduces their masked reconstruction error."""
        config = config_factory(pretrain={"epochs": 60, "lr": 5e-3, "mask_ratio": 0.5})
        model = GaussianMaeModel(config)
        subset = objects[:2]
        before = evaluate_reconstruction(model, group_objects(subset, model))

        result = pretrain(model, subset, tmp_path)
        after = result.recon_report
        assert after["C"]["model"] < before["C"]["model"]
        assert len(result.epoch_losses) == 60
        assert np.mean(result.epoch_losses[-10:]) < np.mean(result.epoch_losses[:10])

    def test_zero_learning_rate_keeps_weights(self, objects, config_factory, tmp_path):
        """Test lr = 0 leaves every parameter unchanged."""
        config = config_factory(pretrain={"epochs": 1, "lr": 0.0})
        model = GaussianMaeModel(config)
        initial = {k: v.copy() for k, v in model.state_dict().items()}
        pretrain(model, objects[:2], tmp_path)
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(value, initial[name], err_msg=name)

    def test_outputs(self, objects, tiny_config, tmp_path):
        """Test the loss log, one checkpoint per epoch and the reconstruction report."""
        result = pretrain(GaussianMaeModel(tiny_config), objects, tmp_path)
        lines = result.loss_log.read_text().splitlines()
        assert lines[0] == "epoch,step,total,C,lr"
        # 8 objects, batch 2, 2 epochs
        assert len(lines) == 1 + 8
        assert [p.name for p in result.checkpoints] == [
            "ckpt_epoch0001.ckpt",
            "ckpt_epoch0002.ckpt",
        ]
        assert (tmp_path / "recon_eval.csv").is_file()
        assert load_checkpoint(result.checkpoints[-1]).tensors["meta.epoch"] == 2.0

    def test_zero_epochs(self, objects, config_factory, tmp_path):
        """Test epochs = 0 writes the initial checkpoint and a header-only log."""
        config = config_factory(pretrain={"epochs": 0})
        result = pretrain(GaussianMaeModel(config), objects[:2], tmp_path)
        assert [p.name for p in result.checkpoints] == ["ckpt_epoch0000.ckpt"]
        assert result.loss_log.read_text() == "epoch,step,total,C,lr\n"
        assert result.epoch_losses == []

    def test_reruns_are_bytewise_identical(self, objects, tiny_config, tmp_path):
        """Test the same seeds give identical loss logs and checkpoints."""
        first = pretrain(GaussianMaeModel(tiny_config), objects, tmp_path / "a")
        second = pretrain(GaussianMaeModel(tiny_config), objects, tmp_path / "b")
        assert first.loss_log.read_bytes() == second.loss_log.read_bytes()
        last = first.checkpoints[-1], second.checkpoints[-1]
        assert last[0].read_bytes() == last[1].read_bytes()

    def test_resume_follows_same_trajectory(self, objects, config_factory, tmp_path):
        """Test resuming from a middle checkpoint reaches the uninterrupted weights."""
        config = config_factory(pretrain={"epochs": 4, "checkpoint_every": 2})
        straight = pretrain(GaussianMaeModel(config), objects, tmp_path / "straight")
        middle = tmp_path / "straight" / "ckpt_epoch0002.ckpt"

        resumed = pretrain(
            GaussianMaeModel(config), objects, tmp_path / "resumed", resume_from=middle
        )
        assert [p.name for p in resumed.checkpoints] == ["ckpt_epoch0004.ckpt"]
        expected = model_tensors(load_checkpoint(straight.checkpoints[-1]).tensors)
        actual = model_tensors(load_checkpoint(resumed.checkpoints[-1]).tensors)
        for name, value in expected.items():
            np.testing.assert_allclose(
                actual[name], value, rtol=1e-4, atol=1e-6, err_msg=name
            )
        np.testing.assert_allclose(
            resumed.epoch_losses, straight.epoch_losses[2:], rtol=1e-4
        )


class TestInvariance:
    """Test results do not depend on how splats are stored."""

    def test_splat_order_does_not_change_reconstruction(self, objects, tiny_config):
        """Test shuffling splats inside each object gives the same evaluation."""
        model = GaussianMaeModel(tiny_config)
        gen = np.random.default_rng(9)
        shuffled = [splats.take(gen.permutation(splats.n)) for splats in objects[:3]]
        a = evaluate_reconstruction(model, group_objects(objects[:3], model))
        b = evaluate_reconstruction(model, group_objects(shuffled, model))
        for name in a:
            assert b[name]["model"] == pytest.approx(a[name]["model"], rel=1e-9)
            assert b[name]["baseline"] == pytest.approx(a[name]["baseline"], rel=1e-9)
