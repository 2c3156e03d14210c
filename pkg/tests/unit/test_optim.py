"""Unit tests for AdamW, the cosine schedule and checkpoints."""

import math
import struct

import numpy as np
import pytest

from splatmae.numerics.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from splatmae.numerics.nn import Parameter
from splatmae.numerics.optim import AdamW, cosine_schedule
from splatmae.utils.exceptions import (
    ConfigurationError,
    DataFormatError,
    DatasetIOError,
    TrainingError,
)


class TestAdamW:
    """Test suite for AdamW."""

    def test_zero_gradient_no_decay_leaves_params(self):
        """Test nothing changes without gradient or decay."""
        p = Parameter(np.array([1.0, -2.0]))
        opt = AdamW([("p", p)], lr=0.1, weight_decay=0.0)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_parameter_without_gradient_is_skipped(self):
        """Test a parameter that got no gradient is neither decayed nor moved."""
        used = Parameter(np.array([1.0, 1.0]))
        unused = Parameter(np.array([3.0, -4.0]))
        opt = AdamW([("used", used), ("unused", unused)], lr=0.1, weight_decay=0.5)
        used.grad = np.array([1.0, -1.0])
        for _ in range(3):
            opt.step()
        np.testing.assert_array_equal(unused.data, [3.0, -4.0])
        np.testing.assert_array_equal(opt.state.first_moment["unused"], 0.0)
        np.testing.assert_array_equal(opt.state.second_moment["unused"], 0.0)
        assert not np.array_equal(used.data, [1.0, 1.0])

    def test_decoupled_decay(self):
        """Test a zero gradient with decay scales by (1 - lr * decay)."""
        p = Parameter(np.array([2.0]))
        opt = AdamW([("p", p)], lr=0.1, weight_decay=0.5)
        p.grad = np.zeros(1)
        opt.step()
        np.testing.assert_allclose(p.data, [2.0 * (1 - 0.05)])

    def test_matches_scalar_oracle(self):
        """Test 100 steps with constant gradient against a hand-rolled AdamW."""
        lr, wd, b1, b2, eps = 0.01, 0.05, 0.9, 0.999, 1e-8
        p = Parameter(np.array([0.5]))
        opt = AdamW([("p", p)], lr=lr, weight_decay=wd, betas=(b1, b2), eps=eps)

        theta, m, v = 0.5, 0.0, 0.0
        for t in range(1, 101):
            p.grad = np.array([1.0])
            opt.step()
            m = b1 * m + (1 - b1)
            v = b2 * v + (1 - b2)
            theta *= 1 - lr * wd
            theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        assert p.data[0] == pytest.approx(theta, abs=1e-10)

    def test_non_finite_gradient_names_parameter(self):
        """Test a NaN gradient aborts with the parameter name."""
        p = Parameter(np.zeros(2))
        opt = AdamW([("encoder.weight", p)])
        p.grad = np.array([0.0, np.nan])
        with pytest.raises(TrainingError) as exc_info:
            opt.step()
        assert exc_info.value.details["parameter"] == "encoder.weight"
        np.testing.assert_array_equal(p.data, [0.0, 0.0])

    def test_state_round_trip(self):
        """Test restored moments continue the same trajectory."""
        p1 = Parameter(np.array([1.0, 2.0]))
        opt1 = AdamW([("p", p1)], lr=0.05)
        for _ in range(3):
            p1.grad = np.array([0.3, -0.1])
            opt1.step()

        p2 = Parameter(p1.data.copy())
        opt2 = AdamW([("p", p2)], lr=0.05)
        opt2.load_state_dict(opt1.state_dict())
        assert opt2.state.step == 3
        for p, opt in ((p1, opt1), (p2, opt2)):
            p.grad = np.array([0.2, 0.2])
            opt.step()
        np.testing.assert_array_equal(p1.data, p2.data)

    def test_missing_state_key(self):
        """Test loading state without a parameter's moments fails."""
        opt = AdamW([("p", Parameter(np.zeros(1)))])
        with pytest.raises(ConfigurationError):
            opt.load_state_dict({"optim.step": np.asarray(1.0)})


class TestCosineSchedule:
    """Test the warmup plus cosine learning-rate schedule."""

    def test_starts_at_zero_with_warmup(self):
        """Test step 0 gives 0 during warmup."""
        assert cosine_schedule(0, 100, 10, 1e-3) == 0.0

    def test_peak_after_warmup(self):
        """Test the schedule reaches the base rate at the end of warmup."""
        assert cosine_schedule(10, 100, 10, 1e-3) == pytest.approx(1e-3)

    def test_midpoint_is_half(self):
        """Test the middle of the cosine phase gives half the base rate."""
        assert cosine_schedule(55, 100, 10, 1e-3) == pytest.approx(5e-4)

    def test_ends_near_zero(self):
        """Test the final step is close to 0."""
        assert cosine_schedule(100, 100, 10, 1e-3) == pytest.approx(0.0, abs=1e-12)

    def test_no_warmup(self):
        """Test without warmup the first step uses the base rate."""
        assert cosine_schedule(0, 10, 0, 0.1) == pytest.approx(0.1)


class TestCheckpoint:
    """Test the binary checkpoint format."""

    def test_round_trip(self, tmp_path, rng):
        """Test tensors and config text survive within float32 precision."""
        tensors = {"a.weight": rng.normal(size=(3, 4)), "meta.epoch": np.asarray(5.0)}
        path = save_checkpoint(
            tmp_path / "run" / "c.ckpt", tensors, "[model]\ntoken_dim = 8\n"
        )
        ckpt = load_checkpoint(path)
        assert ckpt.config_text == "[model]\ntoken_dim = 8\n"
        assert ckpt.tensors["meta.epoch"].shape == ()
        np.testing.assert_allclose(
            ckpt.tensors["a.weight"], tensors["a.weight"], rtol=1e-6
        )
        assert list(ckpt.tensors) == ["a.weight", "meta.epoch"]

    def test_missing_file(self, tmp_path):
        """Test a missing checkpoint is an I/O error."""
        with pytest.raises(DatasetIOError):
            load_checkpoint(tmp_path / "none.ckpt")

    def test_bad_magic(self, tmp_path):
        """Test a foreign file is rejected."""
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"GARBAGE!" + bytes(16))
        with pytest.raises(DataFormatError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path, rng):
        """Test a cut-off file is reported as truncated."""
        path = save_checkpoint(tmp_path / "c.ckpt", {"w": rng.normal(size=100)})
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 40])
        assert data.startswith(MAGIC)
        with pytest.raises(DataFormatError, match="Truncated"):
            load_checkpoint(path)

    def test_config_not_utf8(self, tmp_path):
        """Test undecodable config text is a format error."""
        path = save_checkpoint(tmp_path / "c.ckpt", {"w": np.ones(2)}, "[model]\n")
        data = bytearray(path.read_bytes())
        data[len(MAGIC) + 8] = 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(DataFormatError, match="config is not valid UTF-8"):
            load_checkpoint(path)

    def test_tensor_name_not_utf8(self, tmp_path):
        """Test an undecodable tensor name is a format error."""
        path = save_checkpoint(tmp_path / "c.ckpt", {"w": np.ones(2)})
        data = bytearray(path.read_bytes())
        # magic, version, config length, empty config, count, name length
        data[len(MAGIC) + 4 + 4 + 4 + 2] = 0xFE
        path.write_bytes(bytes(data))
        with pytest.raises(DataFormatError, match="tensor name"):
            load_checkpoint(path)

    def test_shape_larger_than_payload(self, tmp_path):
        """Test a shape that claims more values than the file holds is rejected."""
        path = save_checkpoint(tmp_path / "c.ckpt", {"w": np.ones(2)})
        data = bytearray(path.read_bytes())
        dims_at = len(MAGIC) + 4 + 4 + 4 + 2 + 1 + 1
        data[dims_at : dims_at + 4] = struct.pack("<I", 2**31)
        path.write_bytes(bytes(data))
        with pytest.raises(DataFormatError):
            load_checkpoint(path)
