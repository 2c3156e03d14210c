"""Command-line entry point for splatmae."""

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from . import __version__
from .core.config_manager import ConfigManager, resolve_output_path
from .core.orchestrator import METRICS, RunOrchestrator, RunResult, RunStatus
from .data.synthetic import PRIMITIVES, SyntheticSpec
from .splats.ply_io import load_ply
from .utils.exceptions import (
    ConfigurationError,
    DataError,
    DataFormatError,
    DatasetIOError,
    NumericError,
    SplatMaeError,
    TrainingError,
)
from .utils.logging_config import NumericSanitizer, get_logger, setup_logging

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DATA = 3
EXIT_CONFIG = 4
EXIT_TRAINING = 5

PROTOCOL_ALIASES = {
    "full": "full",
    "linear": "mlp-linear",
    "mlp-linear": "mlp-linear",
    "mlp3": "mlp-3",
    "mlp-3": "mlp-3",
}


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (DataError, DataFormatError, DatasetIOError)):
        return EXIT_DATA
    if isinstance(error, ConfigurationError):
        return EXIT_CONFIG
    if isinstance(error, (TrainingError, NumericError)):
        return EXIT_TRAINING
    return EXIT_ERROR


def error_line(error: BaseException) -> str:
    """One-line JSON description of a failure."""
    if isinstance(error, SplatMaeError):
        details = {
            k: NumericSanitizer.sanitize_value(v) for k, v in error.details.items()
        }
        payload = {
            "error": type(error).__name__,
            "message": error.message,
            "details": details,
        }
    else:
        payload = {"error": type(error).__name__, "message": str(error), "details": {}}
    return json.dumps(payload, default=str, sort_keys=True)


def _split_list(value: Optional[str]) -> Optional[List[str]]:
    return None if value is None else [v.strip() for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="TOML run configuration")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override any config value; may repeat",
    )
    common.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default="WARNING",
        help="Logging level (default: WARNING)",
    )
    common.add_argument("--log-file", type=str, help="Also log to this file")
    common.add_argument("--debug", action="store_true", help="Enable debug logging")

    model_flags = argparse.ArgumentParser(add_help=False)
    model_flags.add_argument(
        "--preset", choices=["base", "desk"], help="Model size preset"
    )
    model_flags.add_argument("--epochs", type=int, help="Training epochs")
    model_flags.add_argument("--warmup-epochs", type=int, help="Warmup epochs")
    model_flags.add_argument("--lr", type=float, help="Base learning rate")
    model_flags.add_argument("--batch-size", type=int, help="Objects per step")
    model_flags.add_argument("--mask-ratio", type=float, help="Share of groups hidden")
    model_flags.add_argument(
        "--num-splats", type=int, help="Splats per object after downsampling"
    )
    model_flags.add_argument("--num-groups", type=int, help="Groups per object")
    model_flags.add_argument("--group-size", type=int, help="Splats per group")
    model_flags.add_argument(
        "--grouping", type=str, help="Grouping parameters, e.g. C,O"
    )
    model_flags.add_argument(
        "--embedding", type=str, help="Embedding parameters, e.g. C,O,S,R"
    )
    model_flags.add_argument(
        "--no-pooling",
        action="store_true",
        help="Replace splats pooling with plain max pooling",
    )
    model_flags.add_argument(
        "--data-seed", type=int, help="Shuffle and downsampling seed"
    )
    model_flags.add_argument("--mask-seed", type=int, help="Masking seed")
    model_flags.add_argument("--init-seed", type=int, help="Weight initialization seed")

    parser = argparse.ArgumentParser(
        prog="splatmae",
        description=(
            "Masked-autoencoder pretraining and evaluation on 3D Gaussian splats"
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"splatmae {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser(
        "synth", parents=[common], help="Generate a synthetic splat dataset"
    )
    synth.add_argument("--out", required=True, help="Output directory")
    synth.add_argument(
        "--classes",
        type=str,
        help=f"Primitive classes from {','.join(PRIMITIVES)}",
    )
    synth.add_argument("--per-class", type=int, default=64, help="Objects per class")
    synth.add_argument("--splats", type=int, default=1024, help="Splats per object")
    synth.add_argument(
        "--test-fraction", type=float, default=0.2, help="Test share per class"
    )
    synth.add_argument("--seed", type=int, default=0, help="Generator seed")
    synth.add_argument(
        "--write-point-clouds",
        action="store_true",
        help="Also write a uniform surface sample per object as .xyz",
    )

    pretrain = sub.add_parser(
        "pretrain", parents=[common, model_flags], help="Masked-autoencoder pretraining"
    )
    pretrain.add_argument(
        "--data", required=True, help="Manifest file or dataset directory"
    )
    pretrain.add_argument("--out", required=True, help="Run directory")
    pretrain.add_argument("--resume", type=str, help="Checkpoint to resume from")

    finetune = sub.add_parser(
        "finetune",
        parents=[common, model_flags],
        help="Classification or segmentation transfer",
    )
    finetune.add_argument(
        "--data", required=True, help="Manifest file or dataset directory"
    )
    finetune.add_argument("--out", required=True, help="Report directory")
    finetune.add_argument(
        "--ckpt",
        type=str,
        help="Pretrained checkpoint, or a run directory holding them",
    )
    finetune.add_argument(
        "--protocol", choices=sorted(PROTOCOL_ALIASES), help="Transfer protocol"
    )
    finetune.add_argument("--task", choices=["cls", "seg"], help="Downstream task")
    finetune.add_argument(
        "--select-best",
        action="store_true",
        help="Finetune from each of the last three checkpoints and report the best",
    )

    metrics = sub.add_parser(
        "metrics",
        parents=[common],
        help="Compare two point sets",
        description=(
            "Compare splat centroids or .xyz point sets after unit-ball "
            "normalization. JSD uses 50x50 histograms of the xy, xz and yz "
            "projections; MMD is an unbiased Gaussian-kernel estimate on the "
            "projected points of the same views."
        ),
    )
    metrics.add_argument("--metric", choices=list(METRICS) + ["all"], default="all")
    metrics.add_argument("--a", required=True, help="First PLY or .xyz file")
    metrics.add_argument("--b", required=True, help="Second PLY or .xyz file")
    metrics.add_argument("--out", type=str, help="Also write metrics.csv here")

    inspect = sub.add_parser(
        "inspect", parents=[common], help="Summarize a splat PLY file"
    )
    inspect.add_argument("file", help="PLY file")
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted config overrides from flags; ``--set`` entries come last and win."""
    overrides: Dict[str, Any] = {}
    flag_keys = {
        "preset": "model.preset",
        "mask_ratio": "pretrain.mask_ratio",
        "num_splats": "grouping.num_splats",
        "num_groups": "grouping.num_groups",
        "group_size": "grouping.group_size",
        "data_seed": "seeds.data",
        "mask_seed": "seeds.mask",
        "init_seed": "seeds.init",
    }
    for attr, key in flag_keys.items():
        overrides[key] = getattr(args, attr, None)

    section = "finetune" if args.command == "finetune" else "pretrain"
    for attr in ("epochs", "warmup_epochs", "lr", "batch_size"):
        overrides[f"{section}.{attr}"] = getattr(args, attr, None)

    overrides["features.grouping"] = _split_list(getattr(args, "grouping", None))
    overrides["features.embedding"] = _split_list(getattr(args, "embedding", None))
    if getattr(args, "no_pooling", False):
        overrides["grouping.use_pooling"] = False
    if getattr(args, "protocol", None):
        overrides["finetune.protocol"] = PROTOCOL_ALIASES[args.protocol]
    if getattr(args, "task", None):
        overrides["finetune.task"] = args.task

    for item in args.overrides:
        if "=" not in item:
            raise ConfigurationError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def initialize_logging(args: argparse.Namespace):
    level = "DEBUG" if args.debug else args.log_level
    setup_logging(
        level=level,
        log_file=args.log_file,
        enable_console=True,
        enable_structured=True,
    )
    logger = get_logger(__name__)
    logger.info(f"splatmae {__version__} - {args.command}")
    return logger


def _finish(result: RunResult) -> RunResult:
    if result.status == RunStatus.FAILED and result.error is not None:
        raise result.error
    return result


def cmd_synth(args: argparse.Namespace, manager: ConfigManager) -> int:
    spec = SyntheticSpec(
        classes=tuple(_split_list(args.classes) or PRIMITIVES),
        per_class=args.per_class,
        splats_per_object=args.splats,
        min_splats=manager.config.grouping.group_size,
        test_fraction=args.test_fraction,
        write_point_clouds=args.write_point_clouds,
        seed=args.seed,
    )
    out_dir = resolve_output_path(args.out)
    result = _finish(RunOrchestrator(manager).run_synth(spec, out_dir))
    print(f"manifest: {result.outputs['manifest']}")
    print(f"objects: {result.outputs['objects']}")
    return EXIT_OK


def cmd_pretrain(args: argparse.Namespace, manager: ConfigManager) -> int:
    out_dir = resolve_output_path(args.out)
    orchestrator = RunOrchestrator(manager)
    result = _finish(orchestrator.run_pretrain(args.data, out_dir, args.resume))
    print(f"loss_log: {result.outputs['loss_log']}")
    for path in result.outputs["checkpoints"]:
        print(f"checkpoint: {path}")
    return EXIT_OK


def cmd_finetune(args: argparse.Namespace, manager: ConfigManager) -> int:
    out_dir = resolve_output_path(args.out)
    orchestrator = RunOrchestrator(manager)
    result = _finish(
        orchestrator.run_finetune(args.data, out_dir, args.ckpt, args.select_best)
    )
    print(f"report: {result.outputs['report']}")
    print(f"score: {result.outputs['score']!r}")
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace, manager: ConfigManager) -> int:
    out_dir = resolve_output_path(args.out) if args.out else None
    row = RunOrchestrator(manager).run_metrics(args.a, args.b, args.metric, out_dir)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(list(row))
    writer.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace, manager: ConfigManager) -> int:
    summary = load_ply(args.file).summary()
    print(f"file: {args.file}")
    print(f"N: {summary['N']}")
    for name in ("C", "O", "S", "R", "SH"):
        stats = summary[name]
        if stats["min"] is None:
            print(f"{name}: empty")
        else:
            print(
                f"{name}: min {stats['min']:.6g} mean {stats['mean']:.6g} "
                f"max {stats['max']:.6g}"
            )
    violations = summary["violations"]
    print(f"violations: {len(violations)}")
    for violation in violations:
        print(f"  {violation}")
    if violations:
        raise DataError(violations[0], {"file": args.file, "violations": violations})
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "metrics": cmd_metrics,
    "inspect": cmd_inspect,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse flags, run one command and return its exit code."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    logger = initialize_logging(args)

    try:
        manager = ConfigManager(args.config)
        manager.apply_overrides(collect_overrides(args))
        manager.config.validate()
        return COMMANDS[args.command](args, manager)
    except SplatMaeError as e:
        logger.error(f"{args.command} failed: {e.message}")
        print(error_line(e), file=sys.stderr)
        return exit_code_for(e)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 130
    except Exception as e:
        logger.critical(f"Unexpected error: {e}", exc_info=True)
        print(error_line(e), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
