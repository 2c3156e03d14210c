"""Unit tests for layers and modules."""

import numpy as np
import pytest

from splatmae.numerics.gradcheck import grad_check_parameters
from splatmae.numerics.nn import (
    DropPath,
    LayerNorm,
    Linear,
    Module,
    ModuleDict,
    MultiHeadAttention,
    PointwiseMLP,
    TransformerStack,
)
from splatmae.numerics.tensor import Tensor
from splatmae.utils.exceptions import ConfigurationError, ShapeError


class TestModuleTree:
    """Test parameter registration and state handling."""

    def test_named_parameters_are_dotted(self, rng):
        """Test nested modules expose dotted parameter names."""
        mlp = PointwiseMLP([3, 4, 2], rng)
        names = [name for name, _ in mlp.named_parameters()]
        assert names == [
            "layers.0.weight",
            "layers.0.bias",
            "layers.1.weight",
            "layers.1.bias",
        ]
        assert mlp.num_parameters() == 3 * 4 + 4 + 4 * 2 + 2

    def test_state_dict_round_trip(self, rng):
        """Test loading a state dict restores the weights."""
        a = Linear(3, 2, rng)
        b = Linear(3, 2, rng)
        b.load_state_dict(a.state_dict())
        np.testing.assert_array_equal(a.weight.data, b.weight.data)

    def test_strict_load_reports_mismatch(self, rng):
        """Test missing and unexpected keys are listed."""
        layer = Linear(3, 2, rng)
        with pytest.raises(ConfigurationError) as exc_info:
            layer.load_state_dict({"weight": np.zeros((3, 2)), "extra": np.zeros(1)})
        assert exc_info.value.details["missing"] == ["bias"]
        assert exc_info.value.details["unexpected"] == ["extra"]

    def test_shape_mismatch_on_load(self, rng):
        """Test a wrong-shaped entry is rejected."""
        layer = Linear(3, 2, rng)
        state = layer.state_dict()
        state["weight"] = np.zeros((2, 3))
        with pytest.raises(ConfigurationError):
            layer.load_state_dict(state)

    def test_train_eval_propagates(self, rng):
        """Test mode switches reach every submodule."""
        stack = TransformerStack(8, 2, 2, rng)
        stack.eval()
        assert all(not m.training for m in stack.modules())
        stack.train()
        assert all(m.training for m in stack.modules())

    def test_module_dict(self, rng):
        """Test named containers register their children."""
        heads = ModuleDict({"C": Linear(2, 3, rng), "O": Linear(2, 1, rng)})
        assert heads.keys() == ["C", "O"]
        assert "O" in heads
        assert len(dict(heads.named_parameters())) == 4

    def test_base_forward_is_abstract(self):
        """Test the base module has no forward."""
        with pytest.raises(NotImplementedError):
            Module()(Tensor(1.0))


class TestLayers:
    """Test individual layers."""

    def test_linear_shape_error(self, rng):
        """Test Linear rejects inputs with the wrong last dim."""
        with pytest.raises(ShapeError):
            Linear(3, 2, rng)(Tensor(np.zeros((4, 5))))

    def test_layer_norm_normalizes_rows(self, rng):
        """Test rows come out with zero mean and unit variance."""
        out = LayerNorm(6)(Tensor(rng.normal(3.0, 2.0, size=(4, 6)))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)

    def test_attention_heads_must_divide_dim(self, rng):
        """Test a head count that does not divide the dim is a config error."""
        with pytest.raises(ConfigurationError):
            MultiHeadAttention(10, 3, rng)

    def test_attention_shape(self, rng):
        """Test attention preserves (B, tokens, dim)."""
        attn = MultiHeadAttention(8, 2, rng)
        assert attn(Tensor(rng.normal(size=(2, 5, 8)))).shape == (2, 5, 8)

    def test_drop_path_is_identity_in_eval(self, rng):
        """Test stochastic depth does nothing outside training."""
        layer = DropPath(0.5).eval()
        x = Tensor(rng.normal(size=(4, 3)))
        np.testing.assert_array_equal(layer(x).data, x.data)

    def test_reseed_makes_drop_path_repeatable(self, rng):
        """Test the same seed reproduces the same drop pattern."""
        stack = TransformerStack(8, 2, 2, rng, drop_path=0.5)
        x = Tensor(rng.normal(size=(6, 3, 8)))
        stack.reseed([7, 0, 0])
        first = stack(x).data
        stack.reseed([7, 0, 0])
        np.testing.assert_array_equal(stack(x).data, first)

    def test_taps_return_requested_blocks(self, rng):
        """Test forward_with_taps returns one output per tap."""
        stack = TransformerStack(8, 3, 2, rng)
        x = Tensor(rng.normal(size=(1, 4, 8)))
        out, tapped = stack.forward_with_taps(x, taps=(1, 3))
        assert len(tapped) == 2
        assert out.shape == (1, 4, 8)

    def test_transformer_passes_grad_check(self, rng):
        """Test gradients through a full block stack."""
        stack = TransformerStack(4, 1, 2, rng, mlp_ratio=2.0)
        x = Tensor(rng.normal(size=(2, 3, 4)))
        target = rng.normal(size=(2, 3, 4))

        def loss():
            diff = stack(x) - Tensor(target)
            return (diff * diff).mean()

        error = grad_check_parameters(loss, stack.parameters(), max_coords=6)
        assert error < 1e-4
