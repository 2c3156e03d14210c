"""Logging configuration for splatmae runs."""

import logging
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np
import structlog


class NumericSanitizer:
    """Make numpy values in log events JSON-friendly."""

    @classmethod
    def sanitize_value(cls, value: Any) -> Any:
        """Convert numpy scalars to Python numbers and summarize arrays."""
        if isinstance(value, np.generic):
            return value.item()
        elif isinstance(value, np.ndarray):
            if value.size == 1:
                return value.reshape(()).item()
            return {"shape": list(value.shape), "dtype": str(value.dtype)}
        elif isinstance(value, dict):
            return {k: cls.sanitize_value(v) for k, v in value.items()}
        elif isinstance(value, (list, tuple)):
            return [cls.sanitize_value(v) for v in value]
        else:
            return value


def setup_logging(
    level: str = "INFO",
    log_file: Optional[str] = None,
    enable_console: bool = True,
    enable_structured: bool = True,
) -> None:
    """Setup logging configuration."""

    # Clear existing handlers
    logging.getLogger().handlers.clear()

    log_level = getattr(logging, level.upper(), logging.INFO)

    if enable_structured:
        processors = [
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            lambda _, __, event_dict: {
                k: NumericSanitizer.sanitize_value(v) for k, v in event_dict.items()
            },
            structlog.processors.JSONRenderer(),
        ]

        structlog.configure(
            processors=processors,
            wrapper_class=structlog.stdlib.BoundLogger,
            logger_factory=structlog.stdlib.LoggerFactory(),
            context_class=dict,
            cache_logger_on_first_use=True,
        )

    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    # Console goes to stderr; stdout carries CSV rows
    if enable_console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(log_level)
        console_handler.setFormatter(formatter)
        logging.getLogger().addHandler(console_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(log_path)
        file_handler.setLevel(log_level)
        file_handler.setFormatter(
            logging.Formatter(
                "%(asctime)s - %(name)s - %(levelname)s - "
                "%(funcName)s:%(lineno)d - %(message)s"
            )
        )
        logging.getLogger().addHandler(file_handler)

    logging.getLogger().setLevel(log_level)

    # Suppress noisy third-party loggers
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("numba").setLevel(logging.WARNING)


class RunEventLogger:
    """Structured logger for training and evaluation events."""

    def __init__(self, name: str = "splatmae.run"):
        self.logger = structlog.get_logger(name)

    def log_run_event(self, event_type: str, severity: str = "INFO", **kwargs) -> None:
        """Log a structured run event."""
        fields = {k: NumericSanitizer.sanitize_value(v) for k, v in kwargs.items()}
        log_method = getattr(self.logger, severity.lower(), self.logger.info)
        log_method("run_event", event_type=event_type, **fields)

    def log_stage(self, stage: str, status: str, **kwargs) -> None:
        """Log a pipeline stage transition."""
        self.log_run_event("stage", stage=stage, status=status, **kwargs)

    def log_epoch(self, epoch: int, **losses) -> None:
        """Log the averaged losses of a finished epoch."""
        self.log_run_event("epoch_completed", epoch=epoch, **losses)

    def log_checkpoint(self, path: Path, epoch: int) -> None:
        """Log a written checkpoint."""
        self.log_run_event("checkpoint_saved", path=str(path), epoch=epoch)

    def log_error(self, error_type: str, error_message: str, **kwargs) -> None:
        """Log an error event."""
        self.log_run_event(
            "error_occurred",
            severity="ERROR",
            error_type=error_type,
            error_message=error_message,
            **kwargs,
        )


def get_logger(name: str) -> logging.Logger:
    """Get a configured logger instance."""
    return logging.getLogger(name)


def get_run_logger() -> RunEventLogger:
    """Get run event logger instance."""
    return RunEventLogger()
