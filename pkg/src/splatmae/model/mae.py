"""Gaussian masked autoencoder: masking, encoder/decoder and projection heads."""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Union

import numpy as np

from ..core.config_manager import RunConfig
from ..grouping.features import FeatureSelection
from ..grouping.groups import GroupedSplats
from ..numerics.checkpoint import load_checkpoint
from ..numerics.nn import Linear, Module, ModuleDict, Parameter, TransformerStack
from ..numerics.tensor import Tensor, concat
from ..utils.exceptions import ConfigurationError
from ..utils.logging_config import get_logger
from .tokenizer import GroupTokenizer, PositionalEmbedding, tokenize

logger = get_logger(__name__)

SeedLike = Union[int, Sequence[int]]


@dataclass
class MaskPlan:
    """Which groups of one object the encoder sees.

    Attributes:
        ratio: Requested mask ratio
        visible: Sorted indices of visible groups
        masked: Sorted indices of masked groups
        seed: Seed the plan was drawn with
    """

    ratio: float
    visible: np.ndarray
    masked: np.ndarray
    seed: SeedLike = 0

    @property
    def n(self) -> int:
        return len(self.visible) + len(self.masked)


def make_mask(n: int, ratio: float, seed: SeedLike = 0) -> MaskPlan:
    """Mask exactly floor(ratio * n) groups, uniformly without replacement."""
    if not 0.0 <= ratio < 1.0:
        raise ConfigurationError(
            f"Mask ratio must be in [0, 1), got {ratio}", {"ratio": ratio}
        )
    if n < 1:
        raise ConfigurationError(f"Cannot mask {n} groups")
    num_masked = int(math.floor(ratio * n + 1e-9))
    rng = np.random.default_rng(seed)
    masked = np.sort(rng.choice(n, size=num_masked, replace=False)).astype(np.int64)
    visible = np.setdiff1d(np.arange(n), masked).astype(np.int64)
    return MaskPlan(ratio=ratio, visible=visible, masked=masked, seed=seed)


@dataclass
class PretrainOutput:
    """Predictions and targets of one masked forward pass.

    Attributes:
        predictions: Per E parameter, (B, M, group_size, dim) tensors
        targets: Per E parameter, (B, M, group_size, dim) arrays; C is local
        latent: Encoder output for the visible groups, (B, V, token_dim)
    """

    predictions: Dict[str, Tensor]
    targets: Dict[str, np.ndarray]
    latent: Tensor
    masked_count: int = 0


class GaussianMaeModel(Module):
    """Tokenizer, transformer encoder and decoder, mask token and per-parameter heads.

    Example:
        ```python
        model = GaussianMaeModel(config)
        out = forward_pretrain(model, batch, plans)
        total, terms = recon_loss(out.predictions, out.targets)
        ```
    """

    def __init__(self, config: RunConfig):
        super().__init__()
        self.config = config
        self.selection: FeatureSelection = config.features.selection()
        self.group_size = config.grouping.group_size
        self.use_pooling = config.grouping.use_pooling
        self.token_dim = config.model.token_dim
        self.embedding_slices = self.selection.embedding_slices()

        rng = np.random.default_rng(config.seeds.init)
        mc = config.model
        self.tokenizer = GroupTokenizer(
            embed_dim=self.selection.embedding_dim,
            token_dim=mc.token_dim,
            rng=rng,
            lift_dim=config.grouping.lift_dim,
            slots=config.grouping.resolved_pool_slots,
            use_pooling=config.grouping.use_pooling,
        )
        center_dim = self.selection.grouping_dim
        self.encoder_pos = PositionalEmbedding(center_dim, mc.token_dim, rng)
        self.encoder = TransformerStack(
            mc.token_dim,
            mc.encoder_depth,
            mc.num_heads,
            rng,
            mc.mlp_ratio,
            mc.drop_path,
        )
        self.decoder_pos = PositionalEmbedding(center_dim, mc.token_dim, rng)
        self.decoder = TransformerStack(
            mc.token_dim,
            mc.decoder_depth,
            mc.num_heads,
            rng,
            mc.mlp_ratio,
            mc.drop_path,
        )
        self.mask_token = Parameter(rng.normal(0.0, 0.02, size=(1, 1, mc.token_dim)))
        self.heads = ModuleDict(
            {
                name: Linear(
                    mc.token_dim, self.group_size * (cols.stop - cols.start), rng
                )
                for name, cols in self.embedding_slices.items()
            }
        )

    def encode(
        self,
        groups_batch: Sequence[GroupedSplats],
        indices: Optional[np.ndarray] = None,
        taps: Sequence[int] = (),
    ):
        """Encode the listed groups (all when None); returns (latent, taps, centers)."""
        batch = tokenize(groups_batch, self, indices)
        pos = self.encoder_pos(batch.centers)
        latent, tapped = self.encoder.forward_with_taps(batch.tokens, pos, taps)
        return latent, tapped, batch.centers

    @classmethod
    def from_checkpoint(cls, path) -> "GaussianMaeModel":
        """Rebuild a model from the config and weights stored in a checkpoint."""
        ckpt = load_checkpoint(path)
        config = RunConfig.from_toml(ckpt.config_text)
        model = cls(config)
        model.load_state_dict(model_tensors(ckpt.tensors))
        logger.info(f"Loaded model weights from {path}")
        return model


def model_tensors(tensors: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Drop optimizer and bookkeeping entries from a checkpoint tensor map."""
    return {k: v for k, v in tensors.items() if not k.startswith(("optim.", "meta."))}


def _targets(
    groups_batch: Sequence[GroupedSplats], masked: np.ndarray, slices: Dict[str, slice]
) -> Dict[str, np.ndarray]:
    targets: Dict[str, np.ndarray] = {}
    for name, cols in slices.items():
        source = "local_embed" if name == "C" else "raw_embed"
        targets[name] = np.stack(
            [getattr(g, source)[m][:, :, cols] for g, m in zip(groups_batch, masked)]
        )
    return targets


def forward_pretrain(
    model: GaussianMaeModel,
    groups_batch: Sequence[GroupedSplats],
    plans: Sequence[MaskPlan],
) -> PretrainOutput:
    """Encode visible groups, decode mask queries and project them per parameter."""
    if len(groups_batch) != len(plans):
        raise ConfigurationError("Need one mask plan per object")
    for groups, plan in zip(groups_batch, plans):
        if plan.n != groups.num_groups:
            raise ConfigurationError(
                f"Mask plan covers {plan.n} groups, object has {groups.num_groups}"
            )

    visible = np.stack([plan.visible for plan in plans])
    masked = np.stack([plan.masked for plan in plans])
    batch, num_visible = visible.shape
    num_masked = masked.shape[1]

    latent, _, _ = model.encode(groups_batch, visible)
    targets = _targets(groups_batch, masked, model.embedding_slices)

    if num_masked == 0:
        empty = {
            name: Tensor(np.zeros((batch, 0, model.group_size, cols.stop - cols.start)))
            for name, cols in model.embedding_slices.items()
        }
        return PretrainOutput(predictions=empty, targets=targets, latent=latent)

    masked_centers = np.stack(
        [g.grouping_centers[m] for g, m in zip(groups_batch, masked)]
    )
    visible_centers = np.stack(
        [g.grouping_centers[v] for g, v in zip(groups_batch, visible)]
    )
    queries = model.mask_token + Tensor(np.zeros((batch, num_masked, model.token_dim)))
    x = concat([latent, queries], axis=1)
    pos = model.decoder_pos(np.concatenate([visible_centers, masked_centers], axis=1))
    decoded = model.decoder(x, pos)[:, num_visible:]

    predictions: Dict[str, Tensor] = {}
    for name, cols in model.embedding_slices.items():
        width = cols.stop - cols.start
        predictions[name] = model.heads[name](decoded).reshape(
            batch, num_masked, model.group_size, width
        )
    return PretrainOutput(
        predictions=predictions,
        targets=targets,
        latent=latent,
        masked_count=num_masked,
    )
