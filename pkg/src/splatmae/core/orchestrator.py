"""Staged execution of synth, pretrain, finetune and metrics runs."""

import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from ..data.loader import load_dataset
from ..data.manifest import MANIFEST_NAME
from ..data.synthetic import synth_generate
from ..distmetrics import chamfer, jsd, mmd
from ..finetune.classify import finetune_classify
from ..finetune.segment import finetune_segment
from ..grouping.features import normalize_block
from ..model.mae import GaussianMaeModel
from ..model.pretrain import pretrain, select_last_checkpoints
from ..numerics.checkpoint import load_checkpoint
from ..numerics.tensor import no_grad
from ..splats.ply_io import load_ply
from ..utils.exceptions import (
    DataFormatError,
    DatasetIOError,
    SplatMaeError,
    ValidationError,
)
from ..utils.logging_config import get_logger, get_run_logger
from .config_manager import ConfigManager, RunConfig
from .export_manager import ReportExporter

METRICS = ("jsd", "mmd", "chamfer")

PIPELINES: Dict[str, List[str]] = {
    "synth": ["validate_configuration", "generate", "finalize"],
    "pretrain": [
        "validate_configuration",
        "load_data",
        "build_model",
        "pretrain",
        "finalize",
    ],
    "finetune": [
        "validate_configuration",
        "load_data",
        "select_checkpoints",
        "finetune",
        "finalize",
    ],
}


class RunStatus(Enum):
    """Run execution status."""

    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELLED = "cancelled"


@dataclass
class RunResult:
    """Result of one orchestrated run.

    Attributes:
        status: Final status
        outputs: Named output paths and values (reports, checkpoints, scores)
        stages_completed: Stage names in completion order
        execution_time: Wall-clock seconds
        error: The exception that failed the run, if any
    """

    kind: str
    status: RunStatus = RunStatus.PENDING
    outputs: Dict[str, Any] = field(default_factory=dict)
    stages_completed: List[str] = field(default_factory=list)
    execution_time: float = 0.0
    error_message: Optional[str] = None
    error: Optional[SplatMaeError] = None


def read_points(path: Union[str, Path]) -> np.ndarray:
    """Unit-ball normalized centroids of a PLY file or rows of an ``.xyz`` file."""
    path = Path(path)
    if path.suffix == ".xyz":
        if not path.is_file():
            raise DatasetIOError(f"Point file not found: {path}", {"path": str(path)})
        try:
            points = np.loadtxt(path, dtype=np.float64, ndmin=2)
        except ValueError as e:
            raise DataFormatError(
                f"Cannot parse point file {path}: {e}", {"path": str(path)}
            )
    else:
        points = load_ply(path).centroids
    if points.ndim != 2 or points.shape[1] != 3 or len(points) == 0:
        raise DataFormatError(f"{path} holds no 3D points", {"path": str(path)})
    return normalize_block(points, "C")


class RunOrchestrator:
    """Runs one command as a sequence of named stages.

    Each stage is a ``_stage_<name>`` method that reads and extends a shared
    state dict. Progress goes to an optional callback and stage transitions to
    the structured run log. Failures end the run with status FAILED and keep
    the exception on the result so callers can map it to an exit code.

    Example:
        ```python
        orchestrator = RunOrchestrator(config_manager)
        orchestrator.set_progress_callback(print_progress)
        result = orchestrator.run_pretrain(manifest_path, out_dir)
        ```
    """

    def __init__(self, config_manager: ConfigManager):
        self.config_manager = config_manager
        self.logger = get_logger(__name__)
        self.run_logger = get_run_logger()
        self.is_cancelled = False
        self.progress_callback: Optional[Callable[[str, float], None]] = None
        self.stages: List[str] = []
        self.current_stage = 0

    @property
    def config(self) -> RunConfig:
        return self.config_manager.config

    def set_progress_callback(self, callback: Callable[[str, float], None]) -> None:
        self.progress_callback = callback

    def _update_progress(
        self, message: str, percentage: Optional[float] = None
    ) -> None:
        if self.progress_callback:
            if percentage is None:
                percentage = 100.0 * self.current_stage / max(len(self.stages), 1)
            self.progress_callback(message, percentage)

    def cancel(self) -> None:
        """Stop before the next stage starts."""
        self.is_cancelled = True
        self.logger.info("Run cancellation requested")

    # Entry points

    def run_synth(self, spec, out_dir: Union[str, Path]) -> RunResult:
        return self._run("synth", {"spec": spec, "out_dir": Path(out_dir)})

    def run_pretrain(
        self,
        manifest: Union[str, Path],
        out_dir: Union[str, Path],
        resume_from: Optional[Union[str, Path]] = None,
    ) -> RunResult:
        state = {
            "manifest": manifest,
            "out_dir": Path(out_dir),
            "resume_from": resume_from,
        }
        return self._run("pretrain", state)

    def run_finetune(
        self,
        manifest: Union[str, Path],
        out_dir: Union[str, Path],
        checkpoint: Optional[Union[str, Path]] = None,
        select_best: bool = False,
    ) -> RunResult:
        state = {
            "manifest": manifest,
            "out_dir": Path(out_dir),
            "checkpoint": checkpoint,
            "select_best": select_best,
        }
        return self._run("finetune", state)

    def run_metrics(
        self,
        a: Union[str, Path],
        b: Union[str, Path],
        metric: str = "all",
        out_dir: Optional[Union[str, Path]] = None,
    ) -> Dict[str, Any]:
        """One CSV-ready row comparing two point sets."""
        if metric != "all" and metric not in METRICS:
            raise ValidationError(f"Unknown metric {metric}", {"known": list(METRICS)})
        pa, pb = read_points(a), read_points(b)
        row: Dict[str, Any] = {"object_id": Path(a).stem}
        wanted = METRICS if metric == "all" else (metric,)
        for name in wanted:
            if name == "jsd":
                row["jsd"] = jsd(pa, pb)
            elif name == "mmd":
                row["mmd"] = mmd(pa, pb)
            else:
                with no_grad():
                    row["chamfer"] = chamfer(pa, pb).item()
        if out_dir is not None:
            self.config_manager.write_resolved(out_dir)
            ReportExporter(out_dir).write_metrics([row])
        return row

    # Execution

    def _run(self, kind: str, state: Dict[str, Any]) -> RunResult:
        start = time.monotonic()
        result = RunResult(kind=kind, status=RunStatus.RUNNING)
        self.stages = PIPELINES[kind]
        self.is_cancelled = False
        self.logger.info(f"Starting {kind} run")
        self.run_logger.log_run_event("run_started", kind=kind)

        try:
            for stage in self.stages:
                if self.is_cancelled:
                    result.status = RunStatus.CANCELLED
                    self.logger.info(f"{kind} run cancelled before {stage}")
                    return result
                self._execute_stage(stage, result, state)
            result.status = RunStatus.COMPLETED
            self.run_logger.log_run_event(
                "run_completed", kind=kind, execution_time=time.monotonic() - start
            )
        except SplatMaeError as e:
            result.status = RunStatus.FAILED
            result.error = e
            result.error_message = e.message
            self.logger.error(f"{kind} run failed: {e.message}")
            self.run_logger.log_error(
                type(e).__name__, e.message, kind=kind, **e.details
            )
        finally:
            result.execution_time = time.monotonic() - start
        return result

    def _execute_stage(
        self, stage_name: str, result: RunResult, state: Dict[str, Any]
    ) -> None:
        self.current_stage = self.stages.index(stage_name)
        number = self.current_stage + 1
        self.logger.info(f"Executing stage {number}: {stage_name}")
        self._update_progress(f"Stage {number}: {stage_name.replace('_', ' ').title()}")
        self.run_logger.log_stage(stage_name, "started")

        method = getattr(self, f"_stage_{stage_name}")
        try:
            method(state, result)
        except SplatMaeError:
            self.run_logger.log_stage(stage_name, "failed")
            raise
        except (ArithmeticError, ValueError) as e:
            self.run_logger.log_stage(stage_name, "failed")
            raise SplatMaeError(
                f"Stage {stage_name} failed: {e}", {"stage": stage_name}
            )

        result.stages_completed.append(stage_name)
        self.run_logger.log_stage(stage_name, "completed")

    # Stages

    def _stage_validate_configuration(
        self, state: Dict[str, Any], result: RunResult
    ) -> None:
        self.config.validate()
        out_dir: Path = state["out_dir"]
        out_dir.mkdir(parents=True, exist_ok=True)
        result.outputs["resolved_config"] = self.config_manager.write_resolved(out_dir)

    def _stage_generate(self, state: Dict[str, Any], result: RunResult) -> None:
        manifest = synth_generate(state["spec"], state["out_dir"])
        result.outputs["manifest"] = manifest.root / MANIFEST_NAME
        result.outputs["objects"] = len(manifest)

    def _stage_load_data(self, state: Dict[str, Any], result: RunResult) -> None:
        dataset = load_dataset(state["manifest"], self.config)
        if len(dataset) == 0:
            raise ValidationError(
                "Manifest lists no objects", {"manifest": str(state["manifest"])}
            )
        state["dataset"] = dataset
        result.outputs["objects"] = len(dataset)

    def _stage_build_model(self, state: Dict[str, Any], result: RunResult) -> None:
        model = GaussianMaeModel(self.config)
        state["model"] = model
        result.outputs["parameters"] = model.num_parameters()
        self.logger.info(f"Model has {model.num_parameters()} parameters")

    def _stage_pretrain(self, state: Dict[str, Any], result: RunResult) -> None:
        def progress(message: str, pct: float) -> None:
            self._update_progress(message, pct)

        outcome = pretrain(
            state["model"],
            [item.splats for item in state["dataset"]],
            state["out_dir"],
            resume_from=state.get("resume_from"),
            progress_callback=progress,
        )
        result.outputs["loss_log"] = outcome.loss_log
        result.outputs["checkpoints"] = outcome.checkpoints
        result.outputs["epoch_losses"] = outcome.epoch_losses
        result.outputs["recon_report"] = outcome.recon_report

    def _stage_select_checkpoints(
        self, state: Dict[str, Any], result: RunResult
    ) -> None:
        checkpoint = state.get("checkpoint")
        if checkpoint is None:
            candidates: List[Optional[Path]] = [None]
        else:
            path = Path(checkpoint)
            if path.is_dir():
                count = 3 if state.get("select_best") else 1
                candidates = list(select_last_checkpoints(path, count))
                if not candidates:
                    raise DatasetIOError(
                        f"No checkpoints found in {path}", {"path": str(path)}
                    )
            elif path.is_file():
                candidates = [path]
            else:
                raise DatasetIOError(
                    f"Checkpoint not found: {path}", {"path": str(path)}
                )
        state["candidates"] = candidates
        result.outputs["candidates"] = [str(c) for c in candidates if c is not None]

    def _finetune_config(self, checkpoint: Optional[Path]) -> RunConfig:
        """Current config with the architecture sections taken from ``checkpoint``."""
        if checkpoint is None:
            return self.config
        stored = RunConfig.from_toml(load_checkpoint(checkpoint).config_text)
        data = self.config.to_dict()
        data["features"] = stored.to_dict()["features"]
        data["model"] = stored.to_dict()["model"]
        grouping = stored.to_dict()["grouping"]
        grouping["num_splats"] = self.config.grouping.num_splats
        grouping["downsample_method"] = self.config.grouping.downsample_method
        data["grouping"] = grouping
        return RunConfig.from_dict(data)

    def _stage_finetune(self, state: Dict[str, Any], result: RunResult) -> None:
        dataset = state["dataset"]
        train, test = dataset.split("train"), dataset.split("test")
        task = self.config.finetune.task
        scores = []
        for candidate in state["candidates"]:
            config = self._finetune_config(candidate)
            model = GaussianMaeModel(config)
            if task == "cls":
                outcome = finetune_classify(model, train, test, checkpoint=candidate)
                score = outcome.accuracy
            else:
                outcome = finetune_segment(model, train, test, checkpoint=candidate)
                score = outcome.class_miou
            label = "none" if candidate is None else str(candidate)
            self.logger.info(f"Finetuned from {label}: score {score:.4f}")
            scores.append((score, label, outcome))

        best_score, best_label, best = max(scores, key=lambda s: s[0])
        state["best"] = best
        result.outputs["score"] = best_score
        result.outputs["best_checkpoint"] = best_label
        result.outputs["candidate_scores"] = {
            label: score for score, label, _ in scores
        }

    def _stage_finalize(self, state: Dict[str, Any], result: RunResult) -> None:
        exporter = ReportExporter(state["out_dir"])
        best = state.get("best")
        if best is None:
            return
        if self.config.finetune.task == "cls":
            result.outputs["report"] = exporter.write_classification_report(
                best.per_class, best.accuracy, best.checkpoint
            )
        else:
            result.outputs["report"] = exporter.write_segmentation_report(
                best.per_class, best.class_miou, best.instance_miou, best.checkpoint
            )
        if len(result.outputs.get("candidate_scores", {})) > 1:
            exporter.write_rows(
                "candidates.csv",
                ["checkpoint", "score"],
                sorted(result.outputs["candidate_scores"].items()),
            )
