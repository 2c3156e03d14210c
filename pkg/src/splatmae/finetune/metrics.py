"""Accuracy and IoU metrics for classification and part segmentation."""

from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..utils.exceptions import ValidationError


def _labels(preds, labels) -> tuple:
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.size == 0 or labels.size == 0:
        raise ValidationError("Metrics need at least one prediction")
    if preds.shape != labels.shape:
        raise ValidationError(
            f"{preds.size} predictions for {labels.size} labels",
            {"predictions": int(preds.size), "labels": int(labels.size)},
        )
    return preds, labels


def accuracy(preds, labels) -> float:
    preds, labels = _labels(preds, labels)
    return float(np.mean(preds == labels))


def per_class_accuracy(preds, labels) -> Dict[int, float]:
    """Accuracy restricted to each class present in ``labels``."""
    preds, labels = _labels(preds, labels)
    return {
        int(c): float(np.mean(preds[labels == c] == c)) for c in np.unique(labels)
    }


def part_ious(preds, labels, parts: Optional[Iterable[int]] = None) -> Dict[int, float]:
    """IoU = TP / (TP + FP + FN) per part; parts absent from both are skipped."""
    preds, labels = _labels(preds, labels)
    candidates = np.union1d(preds, labels) if parts is None else np.asarray(list(parts))
    ious = {}
    for part in candidates:
        in_pred = preds == part
        in_truth = labels == part
        union = np.count_nonzero(in_pred | in_truth)
        if union == 0:
            continue
        ious[int(part)] = np.count_nonzero(in_pred & in_truth) / union
    return ious


def object_miou(preds, labels, parts: Optional[Iterable[int]] = None) -> float:
    ious = part_ious(preds, labels, parts)
    return float(np.mean(list(ious.values())))


def instance_miou(preds: Sequence[np.ndarray], labels: Sequence[np.ndarray]) -> float:
    """Mean over objects of each object's mean part IoU."""
    if len(preds) == 0:
        raise ValidationError("Metrics need at least one object")
    return float(np.mean([object_miou(p, t) for p, t in zip(preds, labels)]))


def class_miou(
    preds: Sequence[np.ndarray],
    labels: Sequence[np.ndarray],
    categories: Sequence[int],
) -> Dict[str, float]:
    """Per-category mean of object IoUs plus their average under ``"class_miou"``."""
    if len(preds) == 0:
        raise ValidationError("Metrics need at least one object")
    if not len(preds) == len(labels) == len(categories):
        raise ValidationError("Predictions, labels and categories differ in length")
    by_category: Dict[int, List[float]] = defaultdict(list)
    for p, t, c in zip(preds, labels, categories):
        by_category[int(c)].append(object_miou(p, t))
    result = {str(c): float(np.mean(v)) for c, v in sorted(by_category.items())}
    result["class_miou"] = float(np.mean([v for v in result.values()]))
    return result
