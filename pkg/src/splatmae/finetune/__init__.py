"""Downstream classification and part segmentation on pretrained encoders."""

from .classify import (
    ClassifyResult,
    finetune_classify,
    frozen_features,
    load_backbone,
    predict_head,
    train_head,
)
from .heads import FROZEN_PROTOCOLS, ClassifierHead, SegmentationHead, pooled_features
from .metrics import (
    accuracy,
    class_miou,
    instance_miou,
    object_miou,
    part_ious,
    per_class_accuracy,
)
from .segment import (
    SegmentResult,
    finetune_segment,
    interpolation_weights,
    propagate_features,
    segmentation_taps,
)
from .trainer import cross_entropy, fit

__all__ = [
    "FROZEN_PROTOCOLS",
    "ClassifierHead",
    "ClassifyResult",
    "SegmentResult",
    "SegmentationHead",
    "accuracy",
    "class_miou",
    "cross_entropy",
    "finetune_classify",
    "finetune_segment",
    "fit",
    "frozen_features",
    "instance_miou",
    "interpolation_weights",
    "load_backbone",
    "object_miou",
    "part_ious",
    "per_class_accuracy",
    "pooled_features",
    "predict_head",
    "propagate_features",
    "segmentation_taps",
    "train_head",
]
