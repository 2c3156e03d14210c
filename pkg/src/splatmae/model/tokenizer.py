"""Splats pooling layer and the group tokenizer."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..numerics.nn import Module, Parameter, PointwiseMLP
from ..numerics.tensor import Tensor
from ..utils.exceptions import ConfigurationError, NumericError

TEMPERATURE_FLOOR = 1e-3
INITIAL_TEMPERATURE_RANGE = (0.1, 10.0)


def canonical_neighbor_order(embed: np.ndarray) -> np.ndarray:
    """Sort each group's neighbor rows lexicographically.

    ``embed`` is (..., P, f). Any permutation of the P rows maps to the same
    output array.
    """
    keys = np.moveaxis(embed, -1, 0)[::-1]
    order = np.lexsort(keys)
    return np.take_along_axis(embed, order[..., None], axis=-2)


def initial_log_temperatures(slots: int) -> np.ndarray:
    """Log-spaced starting gamma values; a single slot starts at t = 1."""
    if slots == 1:
        return np.zeros(1)
    return np.log(np.geomspace(*INITIAL_TEMPERATURE_RANGE, slots))


class SplatsPooling(Module):
    """Temperature-scaled softmax aggregation of P neighbor features into k slots.

    For each group the elementwise max over neighbors acts as the query; each
    slot j weights neighbors by softmax(-||query - F_p||^2 / t_j) with
    t_j = exp(gamma_j) + beta_j, clamped from below. Slots start at distinct,
    log-spaced temperatures so no two slots hold the same weights.
    """

    def __init__(self, slots: int):
        super().__init__()
        if slots < 1:
            raise ConfigurationError(f"Pooling needs at least one slot, got {slots}")
        self.slots = slots
        self.gamma = Parameter(initial_log_temperatures(slots))
        self.beta = Parameter(np.zeros(slots))

    def temperatures(self) -> Tensor:
        """Per-slot temperatures t_j of shape (k,)."""
        return (self.gamma.exp() + self.beta).clamp_min(TEMPERATURE_FLOOR)

    def weights(self, features: Tensor) -> Tensor:
        """Softmax weights W of shape (B, n, k, P)."""
        if features.ndim != 4:
            raise ConfigurationError(
                f"Pooling expects (B, n, P, D) features, got shape {features.shape}"
            )
        if not np.all(np.isfinite(features.data)):
            raise NumericError("Non-finite features entered the pooling layer")
        batch, groups, neighbors, _ = features.shape
        query = features.max(axis=2, keepdims=True)
        diff = query - features
        dists = (diff * diff).sum(axis=-1).reshape(batch, groups, 1, neighbors)
        t = self.temperatures().reshape(self.slots, 1)
        return (-(dists / t)).softmax(axis=-1)

    def forward(self, features: Tensor) -> Tensor:
        return self.weights(features) @ features


@dataclass
class TokenBatch:
    """Tokens of one batch and the grouping-space centers they came from."""

    tokens: Tensor
    centers: np.ndarray


class GroupTokenizer(Module):
    """Lift neighbor features, pool them into slots, project and max-pool to one token.

    With ``use_pooling`` off the pooling stage is skipped and the projected
    neighbor features are max-pooled directly.
    """

    def __init__(
        self,
        embed_dim: int,
        token_dim: int,
        rng: np.random.Generator,
        lift_dim: int = 128,
        slots: int = 32,
        use_pooling: bool = True,
    ):
        super().__init__()
        self.embed_dim = embed_dim
        self.use_pooling = use_pooling
        self.lift = PointwiseMLP([embed_dim, lift_dim, lift_dim], rng)
        self.pooling = SplatsPooling(slots) if use_pooling else None
        self.project = PointwiseMLP([lift_dim, token_dim, token_dim], rng)

    def forward(self, embed: np.ndarray) -> Tensor:
        """Tokens (B, n, token_dim) from neighbor features (B, n, P, f_E)."""
        embed = np.asarray(embed, dtype=np.float64)
        if embed.ndim != 4 or embed.shape[-1] != self.embed_dim:
            raise ConfigurationError(
                f"Tokenizer expects (B, n, P, {self.embed_dim}) input, "
                f"got {embed.shape}",
                {"shape": list(embed.shape)},
            )
        x = self.lift(Tensor(canonical_neighbor_order(embed)))
        if self.pooling is not None:
            x = self.pooling(x)
        return self.project(x).max(axis=2)


class PositionalEmbedding(Module):
    """Two-layer pointwise MLP on normalized group centers."""

    def __init__(
        self,
        center_dim: int,
        token_dim: int,
        rng: np.random.Generator,
        hidden: int = 128,
    ):
        super().__init__()
        self.mlp = PointwiseMLP([center_dim, hidden, token_dim], rng)

    def forward(self, centers: np.ndarray) -> Tensor:
        return self.mlp(Tensor(centers))


def tokenizer_input(
    groups, use_pooling: bool, indices: Optional[np.ndarray] = None
) -> np.ndarray:
    """Neighbor features the tokenizer consumes for one object's groups."""
    embed = groups.pool_embed if use_pooling else groups.local_embed
    return embed if indices is None else embed[indices]


def tokenize(groups_batch, model, indices: Optional[np.ndarray] = None) -> TokenBatch:
    """Tokens for a batch of grouped objects, optionally only some groups per object.

    Args:
        groups_batch: Sequence of GroupedSplats with equal group counts
        model: Object with a ``tokenizer`` attribute
        indices: Optional (B, r) group indices to tokenize
    """
    use_pooling = model.tokenizer.use_pooling
    rows = []
    centers = []
    for b, groups in enumerate(groups_batch):
        idx = None if indices is None else indices[b]
        rows.append(tokenizer_input(groups, use_pooling, idx))
        grid = groups.grouping_centers
        centers.append(grid if idx is None else grid[idx])
    embed, center_arr = _stack(rows), _stack(centers)
    return TokenBatch(tokens=model.tokenizer(embed), centers=center_arr)


def _stack(arrays) -> np.ndarray:
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ConfigurationError(
            "Batch entries have different group layouts",
            {"shapes": [list(s) for s in sorted(shapes)]},
        )
    return np.stack(arrays)


def pooling_entropy(weights: np.ndarray) -> np.ndarray:
    """Row entropy (nats) of pooling weights over the neighbor axis."""
    w = np.clip(weights, 1e-300, None)
    return -(weights * np.log(w)).sum(axis=-1)
