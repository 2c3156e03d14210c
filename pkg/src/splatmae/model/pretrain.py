"""Masked-autoencoder pretraining loop with CSV loss log and periodic checkpoints."""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from ..core.export_manager import LossLog, ReportExporter
from ..grouping.groups import GroupedSplats, build_groups
from ..numerics.checkpoint import load_checkpoint, save_checkpoint
from ..numerics.optim import AdamW, cosine_schedule
from ..numerics.tensor import no_grad
from ..splats.splat_set import SplatSet
from ..utils.exceptions import ConfigurationError, TrainingError, ValidationError
from ..utils.logging_config import get_logger, get_run_logger
from .loss import mean_baseline, recon_loss
from .mae import GaussianMaeModel, forward_pretrain, make_mask, model_tensors

logger = get_logger(__name__)

LOSS_LOG_NAME = "loss_log.csv"
EVAL_SEED_OFFSET = 1_000_003

ProgressCallback = Callable[[str, float], None]


@dataclass
class PretrainResult:
    """Outputs of one pretraining run.

    Attributes:
        loss_log: Path of the per-step loss CSV
        checkpoints: Checkpoints written by this run, oldest first
        epoch_losses: Mean total loss per finished epoch
        recon_report: Per-parameter model/baseline/relative reconstruction errors
    """

    loss_log: Path
    checkpoints: List[Path] = field(default_factory=list)
    epoch_losses: List[float] = field(default_factory=list)
    recon_report: Dict[str, Dict[str, float]] = field(default_factory=dict)


def checkpoint_name(epoch: int) -> str:
    return f"ckpt_epoch{epoch:04d}.ckpt"


def select_last_checkpoints(run_dir: Union[str, Path], count: int = 3) -> List[Path]:
    """The ``count`` most recent periodic checkpoints in ``run_dir``, oldest first."""
    found = []
    for path in Path(run_dir).glob("ckpt_epoch*.ckpt"):
        digits = path.stem[len("ckpt_epoch") :]
        if digits.isdigit():
            found.append((int(digits), path))
    found.sort()
    return [path for _, path in found[-count:]] if count > 0 else []


def group_objects(
    objects: Sequence[SplatSet], model: GaussianMaeModel
) -> List[GroupedSplats]:
    """Build groups once per object with the model's grouping settings.

    FPS starts from a content-derived splat, so the groups (and everything
    computed from them) do not depend on the order splats are stored in.
    """
    config = model.config
    gc = config.grouping
    return [
        build_groups(
            splats,
            model.selection,
            gc.num_groups,
            gc.group_size,
            seed=None,
            pool_neighbors=gc.resolved_pool_neighbors,
            pool_space=config.features.pool_space,
            centroid_only_fps=config.features.centroid_only_fps,
        )
        for splats in objects
    ]


def epoch_order(count: int, data_seed: int, epoch: int) -> np.ndarray:
    """Object visiting order for one epoch; depends only on the seed and epoch."""
    return np.random.default_rng([data_seed, epoch]).permutation(count)


def evaluate_reconstruction(
    model: GaussianMaeModel,
    groups: Sequence[GroupedSplats],
    batch_size: int = 8,
) -> Dict[str, Dict[str, float]]:
    """Masked reconstruction error per parameter against the per-group-mean predictor.

    Uses fixed evaluation masks, so repeated calls on the same weights agree.
    """
    if not groups:
        raise ValidationError("Cannot evaluate reconstruction on an empty dataset")
    config = model.config
    was_training = model.training
    model.eval()
    model_sums: Dict[str, float] = {}
    base_sums: Dict[str, float] = {}
    try:
        with no_grad():
            for start in range(0, len(groups), batch_size):
                batch = list(groups[start : start + batch_size])
                plans = [
                    make_mask(
                        g.num_groups,
                        config.pretrain.mask_ratio,
                        [config.seeds.mask, EVAL_SEED_OFFSET, start + b],
                    )
                    for b, g in enumerate(batch)
                ]
                out = forward_pretrain(model, batch, plans)
                _, terms = recon_loss(out.predictions, out.targets)
                _, base = recon_loss(mean_baseline(out.targets), out.targets)
                weight = len(batch)
                for name in terms:
                    model_sums[name] = model_sums.get(name, 0.0) + terms[name] * weight
                    base_sums[name] = base_sums.get(name, 0.0) + base[name] * weight
    finally:
        model.train(was_training)

    report = {}
    for name, total in model_sums.items():
        model_err = total / len(groups)
        base_err = base_sums[name] / len(groups)
        report[name] = {
            "model": model_err,
            "baseline": base_err,
            "relative": model_err / base_err if base_err > 0 else float("nan"),
        }
    return report


def _save(
    path: Path, model: GaussianMaeModel, optimizer: AdamW, epoch: int
) -> Path:
    tensors = dict(model.state_dict())
    tensors.update(optimizer.state_dict())
    tensors["meta.epoch"] = np.asarray(float(epoch))
    return save_checkpoint(path, tensors, model.config.to_toml())


def pretrain(
    model: GaussianMaeModel,
    objects: Sequence[SplatSet],
    out_dir: Union[str, Path],
    resume_from: Optional[Union[str, Path]] = None,
    progress_callback: Optional[ProgressCallback] = None,
) -> PretrainResult:
    """Train ``model`` to reconstruct masked groups of ``objects``.

    Each step draws masks from ``[mask_seed, epoch, step, b]`` and reseeds the
    stochastic layers from ``[init_seed, epoch, step]``, so a run resumed from
    a checkpoint follows the same trajectory as an uninterrupted one.

    Args:
        model: Model to train in place
        objects: Downsampled splat sets
        out_dir: Directory for the loss log, checkpoints and reconstruction report
        resume_from: Checkpoint written by an earlier run of this loop
        progress_callback: Called with (message, percent)

    Raises:
        ValidationError: If ``objects`` is empty
        TrainingError: If the loss or a gradient becomes non-finite
    """
    if not objects:
        raise ValidationError("Pretraining needs at least one object")

    config = model.config
    pc = config.pretrain
    out_dir = Path(out_dir)
    run_logger = get_run_logger()
    exporter = ReportExporter(out_dir)

    groups = group_objects(objects, model)
    steps_per_epoch = math.ceil(len(groups) / pc.batch_size)
    total_steps = pc.epochs * steps_per_epoch
    warmup_steps = pc.warmup_epochs * steps_per_epoch

    optimizer = AdamW(
        model.named_parameters(), lr=pc.lr, weight_decay=pc.weight_decay
    )
    start_epoch = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if "meta.epoch" not in ckpt.tensors:
            raise ConfigurationError(
                f"Checkpoint {resume_from} has no training state to resume from",
                {"path": str(resume_from)},
            )
        model.load_state_dict(model_tensors(ckpt.tensors))
        optimizer.load_state_dict(ckpt.tensors)
        start_epoch = int(round(float(ckpt.tensors["meta.epoch"])))
        logger.info(
            f"Resuming pretraining after epoch {start_epoch} from {resume_from}"
        )

    run_logger.log_stage(
        "pretrain",
        "started",
        objects=len(groups),
        epochs=pc.epochs,
        steps_per_epoch=steps_per_epoch,
        parameters=model.num_parameters(),
    )
    result = PretrainResult(loss_log=out_dir / LOSS_LOG_NAME)

    if pc.epochs == 0:
        initial = _save(out_dir / checkpoint_name(0), model, optimizer, 0)
        result.checkpoints.append(initial)

    model.train()
    with LossLog(result.loss_log, list(model.embedding_slices)) as loss_log:
        for epoch in range(start_epoch, pc.epochs):
            order = epoch_order(len(groups), config.seeds.data, epoch)
            epoch_total = 0.0
            for local_step in range(steps_per_epoch):
                step = epoch * steps_per_epoch + local_step
                first = local_step * pc.batch_size
                index = order[first : first + pc.batch_size]
                batch = [groups[i] for i in index]
                plans = [
                    make_mask(
                        g.num_groups,
                        pc.mask_ratio,
                        [config.seeds.mask, epoch, step, b],
                    )
                    for b, g in enumerate(batch)
                ]
                model.reseed([config.seeds.init, epoch, step])
                lr = cosine_schedule(step, total_steps, warmup_steps, pc.lr)

                optimizer.zero_grad()
                out = forward_pretrain(model, batch, plans)
                total, terms = recon_loss(out.predictions, out.targets)
                loss_value = total.item()
                if not math.isfinite(loss_value):
                    run_logger.log_error(
                        "non_finite_loss",
                        "Loss became non-finite",
                        epoch=epoch + 1,
                        step=step + 1,
                    )
                    raise TrainingError(
                        f"Non-finite loss at epoch {epoch + 1}, step {step + 1}",
                        {"epoch": epoch + 1, "step": step + 1, "terms": terms},
                    )
                total.backward()
                optimizer.step(lr=lr)

                loss_log.append(epoch + 1, step + 1, loss_value, terms, lr)
                epoch_total += loss_value

            epoch_mean = epoch_total / steps_per_epoch
            result.epoch_losses.append(epoch_mean)
            run_logger.log_epoch(epoch + 1, loss=epoch_mean)
            if progress_callback:
                progress_callback(
                    f"Epoch {epoch + 1}/{pc.epochs} loss {epoch_mean:.6f}",
                    100.0 * (epoch + 1) / pc.epochs,
                )

            finished = epoch + 1
            if finished == pc.epochs or (
                pc.checkpoint_every > 0 and finished % pc.checkpoint_every == 0
            ):
                path = _save(
                    out_dir / checkpoint_name(finished), model, optimizer, finished
                )
                result.checkpoints.append(path)
                run_logger.log_checkpoint(path, finished)

    result.recon_report = evaluate_reconstruction(model, groups, pc.batch_size)
    exporter.write_recon_eval(result.recon_report)
    run_logger.log_stage("pretrain", "completed", checkpoints=len(result.checkpoints))
    return result
