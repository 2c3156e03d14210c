"""CSV reports and run sidecar files."""

import csv
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from ..utils.exceptions import ExportError
from ..utils.logging_config import get_logger


def format_value(value: Any) -> str:
    """Stable text for a CSV cell; floats use repr so reruns are bytewise equal."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(float(value))
    if hasattr(value, "item"):
        return format_value(value.item())
    return str(value)


class LossLog:
    """Streaming per-step loss log with columns epoch, step, total, <terms>, lr."""

    def __init__(self, path: Union[str, Path], term_names: Sequence[str]):
        self.path = Path(path)
        self.term_names = list(term_names)
        self.header = ["epoch", "step", "total"] + self.term_names + ["lr"]
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(self.path, "w", newline="")
        except OSError as e:
            raise ExportError(
                f"Cannot open loss log {self.path}: {e}", {"path": str(self.path)}
            )
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(self.header)

    def append(
        self, epoch: int, step: int, total: float, terms: Dict[str, float], lr: float
    ) -> None:
        row = [epoch, step, float(total)] + [float(terms[n]) for n in self.term_names]
        self._writer.writerow([format_value(v) for v in row + [float(lr)]])
        self._handle.flush()

    def close(self) -> None:
        if not self._handle.closed:
            self._handle.close()

    def __enter__(self) -> "LossLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class ReportExporter:
    """Write run reports as CSV files with a header row.

    Example:
        ```python
        exporter = ReportExporter(out_dir)
        exporter.write_rows("cls_report.csv", ["class", "accuracy"], rows)
        ```
    """

    def __init__(self, out_dir: Union[str, Path]):
        self.logger = get_logger(__name__)
        self.out_dir = Path(out_dir)

    def write_rows(
        self,
        filename: str,
        header: Sequence[str],
        rows: Iterable[Sequence[Any]],
    ) -> Path:
        path = self.out_dir / filename
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(list(header))
                for row in rows:
                    writer.writerow([format_value(v) for v in row])
        except OSError as e:
            self.logger.error(f"Failed to write {path}: {e}")
            raise ExportError(
                f"Failed to write report {path}: {e}", {"path": str(path)}
            )
        self.logger.info(f"Report written to {path}")
        return path

    def write_recon_eval(self, report: Dict[str, Dict[str, float]]) -> Path:
        rows = [
            [name, values["model"], values["baseline"], values["relative"]]
            for name, values in report.items()
        ]
        return self.write_rows(
            "recon_eval.csv",
            ["parameter", "model_error", "baseline_error", "relative_error"],
            rows,
        )

    def write_classification_report(
        self,
        per_class: Dict[str, float],
        overall: float,
        checkpoint: Optional[str] = None,
        filename: str = "cls_report.csv",
    ) -> Path:
        rows: List[List[Any]] = [[name, acc] for name, acc in per_class.items()]
        rows.append(["overall", overall])
        if checkpoint is not None:
            rows.append(["checkpoint", checkpoint])
        return self.write_rows(filename, ["class", "accuracy"], rows)

    def write_segmentation_report(
        self,
        per_class: Dict[str, float],
        class_miou: float,
        instance_miou: float,
        checkpoint: Optional[str] = None,
        filename: str = "seg_report.csv",
    ) -> Path:
        rows: List[List[Any]] = [[name, miou] for name, miou in per_class.items()]
        rows.append(["class_miou", class_miou])
        rows.append(["instance_miou", instance_miou])
        if checkpoint is not None:
            rows.append(["checkpoint", checkpoint])
        return self.write_rows(filename, ["class", "miou"], rows)

    def write_metrics(
        self, rows: Iterable[Dict[str, Any]], filename: str = "metrics.csv"
    ) -> Path:
        header = ["object_id", "jsd", "mmd", "chamfer"]
        body = ([r.get(h, "") for h in header] for r in rows)
        return self.write_rows(filename, header, body)
