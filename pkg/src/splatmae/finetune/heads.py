"""Classification and segmentation heads over encoder features."""

from typing import Sequence

import numpy as np

from ..numerics.nn import Dropout, Linear, Module, ModuleList
from ..numerics.tensor import Tensor, concat
from ..utils.exceptions import ConfigurationError, ShapeError

FROZEN_PROTOCOLS = ("mlp-linear", "mlp-3")


def pooled_features(tokens: Tensor) -> Tensor:
    """Global feature (B, 2*dim): mean over tokens followed by elementwise max."""
    if tokens.ndim != 3 or tokens.shape[1] < 1:
        raise ShapeError(
            "Pooling expects (B, tokens, dim) with at least one token, "
            f"got {tokens.shape}"
        )
    return concat([tokens.mean(axis=1), tokens.max(axis=1)], axis=-1)


class _MLP(Module):
    """Linear layers with GELU and dropout between them."""

    def __init__(
        self,
        dims: Sequence[int],
        rng: np.random.Generator,
        dropout: float = 0.0,
    ):
        super().__init__()
        self.layers = ModuleList(
            [Linear(d_in, d_out, rng) for d_in, d_out in zip(dims[:-1], dims[1:])]
        )
        self.dropouts = ModuleList([Dropout(dropout) for _ in range(len(dims) - 2)])

    def forward(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last:
                x = self.dropouts[i](x.gelu())
        return x


class ClassifierHead(Module):
    """Class logits from a pooled global feature.

    ``mlp-linear`` is a single affine layer; ``full`` and ``mlp-3`` use a
    three-layer MLP with hidden sizes ``hidden``.
    """

    def __init__(
        self,
        in_dim: int,
        num_classes: int,
        protocol: str,
        rng: np.random.Generator,
        hidden: Sequence[int] = (512, 256),
        dropout: float = 0.5,
    ):
        super().__init__()
        if num_classes < 2:
            raise ConfigurationError(
                f"Classification needs at least 2 classes, got {num_classes}"
            )
        if protocol == "mlp-linear":
            dims = [in_dim, num_classes]
        elif protocol in ("full", "mlp-3"):
            if len(hidden) != 2:
                raise ConfigurationError(
                    f"Three-layer head needs two hidden sizes, got {list(hidden)}"
                )
            dims = [in_dim, *hidden, num_classes]
        else:
            raise ConfigurationError(
                f"Unknown protocol {protocol}", {"protocol": protocol}
            )
        self.protocol = protocol
        self.num_classes = num_classes
        self.mlp = _MLP(dims, rng, dropout)

    @property
    def num_layers(self) -> int:
        return len(self.mlp.layers)

    def forward(self, features: Tensor) -> Tensor:
        return self.mlp(features)


class SegmentationHead(Module):
    """Pointwise map from propagated plus global features to per-point part logits."""

    def __init__(
        self,
        in_dim: int,
        num_parts: int,
        rng: np.random.Generator,
        hidden: Sequence[int] = (512, 256),
        dropout: float = 0.5,
        k: int = 3,
        power: float = 2.0,
    ):
        super().__init__()
        if num_parts < 2:
            raise ConfigurationError(
                f"Segmentation needs at least 2 parts, got {num_parts}"
            )
        self.num_parts = num_parts
        self.k = k
        self.power = power
        self.mlp = _MLP([in_dim, *hidden, num_parts], rng, dropout)

    def forward(self, point_features: Tensor) -> Tensor:
        return self.mlp(point_features)
