"""Shared supervised loop for classification and segmentation heads."""

import math
from typing import Callable, Iterable, List, Sequence, Tuple

import numpy as np

from ..core.config_manager import FinetuneConfig
from ..numerics.nn import Module, Parameter
from ..numerics.optim import AdamW, cosine_schedule
from ..numerics.tensor import Tensor
from ..utils.exceptions import TrainingError
from ..utils.logging_config import get_logger, get_run_logger

logger = get_logger(__name__)

StepFn = Callable[[np.ndarray], Tensor]


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits`` (..., C)."""
    labels = np.asarray(labels, dtype=np.int64)
    flat = logits.reshape(-1, logits.shape[-1])
    log_probs = flat.log_softmax(axis=-1)
    picked = log_probs[np.arange(flat.shape[0]), labels.reshape(-1)]
    return -picked.mean()


def named_trainables(
    modules: Sequence[Tuple[str, Module]],
) -> List[Tuple[str, Parameter]]:
    return [
        (f"{prefix}.{name}", param)
        for prefix, module in modules
        for name, param in module.named_parameters()
    ]


def fit(
    named_params: Iterable[Tuple[str, Parameter]],
    num_items: int,
    step_fn: StepFn,
    config: FinetuneConfig,
    seed: int,
    reseed: Sequence[Module] = (),
) -> List[float]:
    """Run ``config.epochs`` epochs of AdamW over shuffled minibatches.

    ``step_fn`` gets the item indices of one minibatch and returns its loss.
    Returns the mean loss of every epoch.
    """
    run_logger = get_run_logger()
    optimizer = AdamW(named_params, lr=config.lr, weight_decay=config.weight_decay)
    steps_per_epoch = math.ceil(num_items / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    warmup_steps = config.warmup_epochs * steps_per_epoch

    epoch_losses = []
    for epoch in range(config.epochs):
        order = np.random.default_rng([seed, epoch]).permutation(num_items)
        running = 0.0
        for local_step in range(steps_per_epoch):
            step = epoch * steps_per_epoch + local_step
            first = local_step * config.batch_size
            index = order[first : first + config.batch_size]
            for module in reseed:
                module.reseed([seed, epoch, step])
            optimizer.zero_grad()
            loss = step_fn(index)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"Non-finite loss at epoch {epoch + 1}, step {step + 1}",
                    {"epoch": epoch + 1, "step": step + 1},
                )
            loss.backward()
            lr = cosine_schedule(step, total_steps, warmup_steps, config.lr)
            optimizer.step(lr=lr)
            running += value
        epoch_losses.append(running / steps_per_epoch)
        run_logger.log_epoch(epoch + 1, loss=epoch_losses[-1])
    return epoch_losses
