"""Part segmentation: multi-block encoder features interpolated back to splats."""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from ..grouping.groups import GroupedSplats
from ..model.mae import GaussianMaeModel
from ..model.pretrain import group_objects
from ..numerics.tensor import Tensor, concat, no_grad
from ..utils.exceptions import ConfigurationError, DataError, ValidationError
from ..utils.logging_config import get_logger, get_run_logger
from .classify import load_backbone
from .heads import FROZEN_PROTOCOLS, SegmentationHead, pooled_features
from .metrics import class_miou, instance_miou
from .trainer import cross_entropy, fit, named_trainables

logger = get_logger(__name__)

INTERP_EPS = 1e-8
HEAD_SEED_OFFSET = 202


def segmentation_taps(depth: int) -> Tuple[int, int, int]:
    """Three evenly spaced 1-based encoder blocks, the last one being ``depth``."""
    return (math.ceil(depth / 3), math.ceil(2 * depth / 3), depth)


def interpolation_weights(
    centers: np.ndarray, queries: np.ndarray, k: int = 3, power: float = 2.0
) -> np.ndarray:
    """Dense (m, p') weights over the k nearest centers of each query.

    Weights are proportional to 1 / (d**power + 1e-8) and sum to one per row.
    A query that coincides with a center takes that center's row exactly.
    """
    centers = np.asarray(centers, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if len(centers) < k:
        raise ValidationError(
            f"Interpolation needs at least k={k} centers, got {len(centers)}",
            {"k": k, "centers": len(centers)},
        )
    dists = cdist(queries, centers)
    nearest = np.argsort(dists, axis=1, kind="stable")[:, :k]
    near_d = np.take_along_axis(dists, nearest, axis=1)
    raw = 1.0 / (near_d**power + INTERP_EPS)
    exact = near_d[:, 0] == 0.0
    raw[exact] = 0.0
    raw[exact, 0] = 1.0

    weights = np.zeros((len(queries), len(centers)))
    np.put_along_axis(weights, nearest, raw / raw.sum(axis=1, keepdims=True), axis=1)
    return weights


def propagate_features(
    center_features,
    centers: np.ndarray,
    queries: np.ndarray,
    k: int = 3,
    power: float = 2.0,
):
    """Inverse-distance interpolation of center features onto query points.

    Works on arrays and on tensors; with a tensor the result stays differentiable
    in the features.
    """
    weights = interpolation_weights(centers, queries, k, power)
    if isinstance(center_features, Tensor):
        return Tensor(weights) @ center_features
    return weights @ np.asarray(center_features, dtype=np.float64)


@dataclass
class SegmentResult:
    """Trained head and mIoU report of one segmentation run.

    Attributes:
        class_miou: Mean over categories of per-category object IoU
        instance_miou: Mean over objects of object IoU
        per_class: Mean object IoU per class name
    """

    protocol: str
    head: SegmentationHead
    class_miou: float
    instance_miou: float
    per_class: Dict[str, float] = field(default_factory=dict)
    epoch_losses: List[float] = field(default_factory=list)
    checkpoint: Optional[str] = None


def _point_features(
    model: GaussianMaeModel,
    groups: Sequence[GroupedSplats],
    queries: Sequence[np.ndarray],
    taps: Tuple[int, ...],
) -> Tensor:
    """(B, p, 5*token_dim) per-point inputs to the segmentation head."""
    unique = sorted(set(taps))
    latent, tapped, _ = model.encode(groups, taps=unique)
    by_block = dict(zip(unique, tapped))
    block_feats = concat([by_block[t] for t in taps], axis=-1)

    fc = model.config.finetune
    weights = np.stack(
        [
            interpolation_weights(g.center_xyz, q, fc.interp_k, fc.interp_power)
            for g, q in zip(groups, queries)
        ]
    )
    propagated = Tensor(weights) @ block_feats
    glob = pooled_features(latent).expand_dims(1)
    glob = glob + Tensor(np.zeros((len(groups), weights.shape[1], glob.shape[-1])))
    return concat([propagated, glob], axis=-1)


def _part_labels(items: Sequence, num_parts: int) -> List[np.ndarray]:
    labels = []
    for i, item in enumerate(items):
        if item.part_labels is None:
            raise DataError(f"Object {i} has no part labels", {"object": i})
        values = np.asarray(item.part_labels, dtype=np.int64)
        if len(values) != item.splats.n:
            raise DataError(
                f"Object {i} has {len(values)} part labels for {item.splats.n} splats",
                {"object": i},
            )
        bad = np.flatnonzero((values < 0) | (values >= num_parts))
        if len(bad):
            raise DataError(
                f"Part label {values[bad[0]]} at splat {bad[0]} of object {i} "
                f"is outside [0, {num_parts})",
                {"object": i, "index": int(bad[0]), "num_parts": num_parts},
            )
        labels.append(values)
    return labels


def finetune_segment(
    model: GaussianMaeModel,
    train_items: Sequence,
    test_items: Sequence,
    protocol: Optional[str] = None,
    checkpoint: Optional[Union[str, Path]] = None,
) -> SegmentResult:
    """Train a per-splat part classifier and report class and instance mIoU.

    Query points are the splat centroids of each (downsampled) object, which
    carry the part labels. Features from three encoder blocks are
    interpolated from the group centers, joined with the global feature and
    mapped pointwise to part logits.
    """
    config = model.config
    fc = config.finetune
    protocol = protocol or fc.protocol
    if protocol not in ("full",) + FROZEN_PROTOCOLS:
        raise ConfigurationError(f"Unknown protocol {protocol}", {"protocol": protocol})
    if not train_items or not test_items:
        raise ValidationError("Segmentation needs nonempty train and test splits")
    if checkpoint is not None:
        load_backbone(model, checkpoint)

    all_items = list(train_items) + list(test_items)
    num_parts = fc.num_parts
    if not num_parts:
        labelled = [item.part_labels for item in all_items]
        num_parts = 1 + max(
            (int(np.max(p)) for p in labelled if p is not None), default=1
        )
    train_labels = _part_labels(train_items, num_parts)
    test_labels = _part_labels(test_items, num_parts)

    run_logger = get_run_logger()
    run_logger.log_stage("finetune_seg", "started", protocol=protocol, parts=num_parts)

    taps = segmentation_taps(config.model.encoder_depth)
    train_groups = group_objects([item.splats for item in train_items], model)
    test_groups = group_objects([item.splats for item in test_items], model)
    train_queries = [item.splats.centroids for item in train_items]
    test_queries = [item.splats.centroids for item in test_items]

    head = SegmentationHead(
        5 * model.token_dim,
        num_parts,
        np.random.default_rng([config.seeds.init, HEAD_SEED_OFFSET]),
        hidden=fc.head_hidden,
        dropout=fc.head_dropout,
        k=fc.interp_k,
        power=fc.interp_power,
    )

    def frozen(groups, queries) -> List[np.ndarray]:
        model.eval()
        with no_grad():
            return [
                _point_features(model, [g], [q], taps).data[0]
                for g, q in zip(groups, queries)
            ]

    if protocol in FROZEN_PROTOCOLS:
        train_feats = frozen(train_groups, train_queries)
        head.train()

        def step(index: np.ndarray) -> Tensor:
            feats = np.stack([train_feats[i] for i in index])
            labels = np.stack([train_labels[i] for i in index])
            return cross_entropy(head(Tensor(feats)), labels)

        params = named_trainables([("head", head)])
        reseed = [head]
    else:
        model.train()
        head.train()

        def step(index: np.ndarray) -> Tensor:
            feats = _point_features(
                model,
                [train_groups[i] for i in index],
                [train_queries[i] for i in index],
                taps,
            )
            labels = np.stack([train_labels[i] for i in index])
            return cross_entropy(head(feats), labels)

        params = named_trainables([("backbone", model), ("head", head)])
        reseed = [model, head]

    losses = fit(params, len(train_groups), step, fc, config.seeds.data, reseed)

    head.eval()
    with no_grad():
        preds = [
            np.argmax(head(Tensor(f)).data, axis=-1)
            for f in frozen(test_groups, test_queries)
        ]
    categories = [item.class_id for item in test_items]
    per_category = class_miou(preds, test_labels, categories)
    names = {str(item.class_id): item.class_name for item in test_items}
    result = SegmentResult(
        protocol=protocol,
        head=head,
        class_miou=per_category.pop("class_miou"),
        instance_miou=instance_miou(preds, test_labels),
        per_class={names[c]: v for c, v in per_category.items()},
        epoch_losses=losses,
        checkpoint=None if checkpoint is None else str(checkpoint),
    )
    run_logger.log_stage(
        "finetune_seg",
        "completed",
        class_miou=result.class_miou,
        instance_miou=result.instance_miou,
    )
    return result
