"""Shape classification under full finetuning and frozen-backbone heads."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..grouping.groups import GroupedSplats
from ..model.mae import GaussianMaeModel, model_tensors
from ..model.pretrain import group_objects
from ..numerics.checkpoint import load_checkpoint
from ..numerics.tensor import Tensor, no_grad
from ..utils.exceptions import ConfigurationError, ValidationError
from ..utils.logging_config import get_logger, get_run_logger
from .heads import FROZEN_PROTOCOLS, ClassifierHead, pooled_features
from .metrics import accuracy, per_class_accuracy
from .trainer import cross_entropy, fit, named_trainables

logger = get_logger(__name__)

HEAD_SEED_OFFSET = 101


@dataclass
class ClassifyResult:
    """Trained head and accuracy report of one classification run.

    Attributes:
        protocol: full, mlp-linear or mlp-3
        accuracy: Overall accuracy on the held-out objects
        train_accuracy: Accuracy on the training objects after training
        per_class: Held-out accuracy per class name
        epoch_losses: Mean training loss per epoch
        checkpoint: Checkpoint the backbone was loaded from, if any
    """

    protocol: str
    head: ClassifierHead
    accuracy: float
    train_accuracy: float
    per_class: Dict[str, float] = field(default_factory=dict)
    epoch_losses: List[float] = field(default_factory=list)
    checkpoint: Optional[str] = None


def load_backbone(model: GaussianMaeModel, checkpoint: Union[str, Path]) -> None:
    """Load pretrained weights into ``model``; configs must agree on every shape."""
    ckpt = load_checkpoint(checkpoint)
    try:
        model.load_state_dict(model_tensors(ckpt.tensors))
    except ConfigurationError as e:
        raise ConfigurationError(
            f"Checkpoint {checkpoint} does not fit the model config: {e.message}",
            {"checkpoint": str(checkpoint), **e.details},
        )
    logger.info(f"Loaded backbone from {checkpoint}")


def global_features(model: GaussianMaeModel, groups: Sequence[GroupedSplats]) -> Tensor:
    """Pooled encoder output over every group of each object, (B, 2*token_dim)."""
    latent, _, _ = model.encode(groups)
    return pooled_features(latent)


def frozen_features(
    model: GaussianMaeModel, groups: Sequence[GroupedSplats], batch_size: int
) -> np.ndarray:
    """Global features in evaluation mode without gradient tracking."""
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            chunks = [
                global_features(model, groups[i : i + batch_size]).data
                for i in range(0, len(groups), batch_size)
            ]
    finally:
        model.train(was_training)
    return np.concatenate(chunks, axis=0)


def train_head(
    head: ClassifierHead,
    features: np.ndarray,
    labels: np.ndarray,
    config,
    seed: int = 0,
) -> List[float]:
    """Fit ``head`` alone on precomputed features."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    head.train()

    def step(index: np.ndarray) -> Tensor:
        return cross_entropy(head(Tensor(features[index])), labels[index])

    params = named_trainables([("head", head)])
    return fit(params, len(labels), step, config, seed, [head])


def predict_head(head: ClassifierHead, features: np.ndarray) -> np.ndarray:
    head.eval()
    with no_grad():
        logits = head(Tensor(np.asarray(features, dtype=np.float64)))
    return np.argmax(logits.data, axis=-1)


def _class_count(configured: int, labels: np.ndarray) -> int:
    inferred = int(labels.max()) + 1
    if configured and inferred > configured:
        raise ConfigurationError(
            f"Labels reach class id {inferred - 1} but the config declares "
            f"{configured} classes",
            {"configured": configured, "max_label": inferred - 1},
        )
    return configured or inferred


def finetune_classify(
    model: GaussianMaeModel,
    train_items: Sequence,
    test_items: Sequence,
    protocol: Optional[str] = None,
    checkpoint: Optional[Union[str, Path]] = None,
) -> ClassifyResult:
    """Train a classifier on ``train_items`` and report accuracy on ``test_items``.

    Items need ``splats``, ``class_id`` and ``class_name`` attributes. The
    ``full`` protocol updates backbone and head; frozen protocols train the
    head on frozen features and leave every backbone weight untouched.

    Raises:
        ConfigurationError: Unknown protocol, class-count mismatch or a
            checkpoint that does not fit the model
        ValidationError: Empty training or test split
    """
    config = model.config
    fc = config.finetune
    protocol = protocol or fc.protocol
    if protocol not in ("full",) + FROZEN_PROTOCOLS:
        raise ConfigurationError(f"Unknown protocol {protocol}", {"protocol": protocol})
    if not train_items or not test_items:
        raise ValidationError("Classification needs nonempty train and test splits")
    if checkpoint is not None:
        load_backbone(model, checkpoint)

    train_labels = np.array([item.class_id for item in train_items], dtype=np.int64)
    test_labels = np.array([item.class_id for item in test_items], dtype=np.int64)
    all_labels = np.concatenate([train_labels, test_labels])
    num_classes = _class_count(fc.num_classes, all_labels)
    names = {
        item.class_id: item.class_name
        for item in list(train_items) + list(test_items)
    }

    run_logger = get_run_logger()
    run_logger.log_stage(
        "finetune_cls", "started", protocol=protocol, classes=num_classes
    )

    train_groups = group_objects([item.splats for item in train_items], model)
    test_groups = group_objects([item.splats for item in test_items], model)
    head = ClassifierHead(
        2 * model.token_dim,
        num_classes,
        protocol,
        np.random.default_rng([config.seeds.init, HEAD_SEED_OFFSET]),
        hidden=fc.head_hidden,
        dropout=fc.head_dropout,
    )

    if protocol in FROZEN_PROTOCOLS:
        train_feats = frozen_features(model, train_groups, fc.batch_size)
        test_feats = frozen_features(model, test_groups, fc.batch_size)
        losses = train_head(head, train_feats, train_labels, fc, config.seeds.data)
        train_pred = predict_head(head, train_feats)
        test_pred = predict_head(head, test_feats)
    else:
        model.train()
        head.train()

        def step(index: np.ndarray) -> Tensor:
            batch = [train_groups[i] for i in index]
            logits = head(global_features(model, batch))
            return cross_entropy(logits, train_labels[index])

        params = named_trainables([("backbone", model), ("head", head)])
        losses = fit(
            params, len(train_groups), step, fc, config.seeds.data, [model, head]
        )
        model.eval()
        train_feats = frozen_features(model, train_groups, fc.batch_size)
        test_feats = frozen_features(model, test_groups, fc.batch_size)
        train_pred = predict_head(head, train_feats)
        test_pred = predict_head(head, test_feats)

    result = ClassifyResult(
        protocol=protocol,
        head=head,
        accuracy=accuracy(test_pred, test_labels),
        train_accuracy=accuracy(train_pred, train_labels),
        per_class={
            names[c]: acc
            for c, acc in per_class_accuracy(test_pred, test_labels).items()
        },
        epoch_losses=losses,
        checkpoint=None if checkpoint is None else str(checkpoint),
    )
    run_logger.log_stage(
        "finetune_cls",
        "completed",
        protocol=protocol,
        accuracy=result.accuracy,
        train_accuracy=result.train_accuracy,
    )
    return result
