"""Group tokenizer, Gaussian masked autoencoder and its pretraining loop."""

from .loss import mean_baseline, recon_loss, relative_errors
from .mae import (
    GaussianMaeModel,
    MaskPlan,
    PretrainOutput,
    forward_pretrain,
    make_mask,
    model_tensors,
)
from .pretrain import (
    PretrainResult,
    checkpoint_name,
    epoch_order,
    evaluate_reconstruction,
    group_objects,
    pretrain,
    select_last_checkpoints,
)
from .tokenizer import (
    GroupTokenizer,
    PositionalEmbedding,
    SplatsPooling,
    TokenBatch,
    canonical_neighbor_order,
    pooling_entropy,
    tokenize,
)

__all__ = [
    "GaussianMaeModel",
    "GroupTokenizer",
    "MaskPlan",
    "PositionalEmbedding",
    "PretrainOutput",
    "PretrainResult",
    "SplatsPooling",
    "TokenBatch",
    "canonical_neighbor_order",
    "checkpoint_name",
    "epoch_order",
    "evaluate_reconstruction",
    "forward_pretrain",
    "group_objects",
    "make_mask",
    "mean_baseline",
    "model_tensors",
    "pooling_entropy",
    "pretrain",
    "recon_loss",
    "relative_errors",
    "select_last_checkpoints",
    "tokenize",
]
