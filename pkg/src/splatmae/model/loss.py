"""Reconstruction loss: centroid Chamfer plus L1 on the remaining parameters."""

from typing import Dict, Mapping, Tuple

import numpy as np

from ..distmetrics import chamfer_batched
from ..numerics.tensor import Tensor, no_grad


def _flatten(value: np.ndarray) -> np.ndarray:
    return value.reshape((-1,) + value.shape[-2:])


def recon_loss(
    predictions: Mapping[str, Tensor],
    targets: Mapping[str, np.ndarray],
) -> Tuple[Tensor, Dict[str, float]]:
    """Total loss and per-parameter terms over every masked group.

    The C term is the symmetric Chamfer distance on local coordinates,
    averaged over groups. Other terms are the mean absolute error over every
    matched element, where each predicted item is matched to its nearest
    ground-truth centroid when C is present and to the same slot otherwise.
    An empty masked set gives zero.
    """
    names = list(predictions)
    first = predictions[names[0]]
    groups = int(np.prod(first.shape[:-2])) if first.ndim >= 2 else 0
    if groups == 0:
        return Tensor(0.0), {name: 0.0 for name in names}

    terms: Dict[str, Tensor] = {}
    matched = None
    if "C" in predictions:
        pred_c = predictions["C"].reshape((groups,) + predictions["C"].shape[-2:])
        chamfer, nearest = chamfer_batched(pred_c, Tensor(_flatten(targets["C"])))
        terms["C"] = chamfer.mean()
        matched = nearest

    for name in names:
        if name == "C":
            continue
        pred = predictions[name].reshape((groups,) + predictions[name].shape[-2:])
        truth = _flatten(np.asarray(targets[name], dtype=np.float64))
        if matched is not None:
            truth = np.take_along_axis(truth, matched[:, :, None], axis=1)
        terms[name] = (pred - truth).abs().mean()

    total = None
    for name in names:
        total = terms[name] if total is None else total + terms[name]
    return total, {name: terms[name].item() for name in names}


def mean_baseline(targets: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
    """Predict every slot of a group as that group's mean target."""
    baseline = {}
    for name, value in targets.items():
        group_mean = value.mean(axis=-2, keepdims=True)
        baseline[name] = Tensor(np.broadcast_to(group_mean, value.shape).copy())
    return baseline


def relative_errors(
    predictions: Mapping[str, Tensor], targets: Mapping[str, np.ndarray]
) -> Dict[str, Dict[str, float]]:
    """Per parameter: model error, per-group-mean baseline error and their ratio."""
    with no_grad():
        _, model_terms = recon_loss(predictions, targets)
        _, base_terms = recon_loss(mean_baseline(targets), targets)
    report = {}
    for name, value in model_terms.items():
        baseline = base_terms[name]
        report[name] = {
            "model": value,
            "baseline": baseline,
            "relative": value / baseline if baseline > 0 else float("nan"),
        }
    return report
