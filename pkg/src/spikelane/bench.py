"""Efficiency reporting: parameter, storage, memory, and epoch-time figures."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .model import Model, model_params, param_count
from .checkpoint import model_to_bytes
from .training import EpochLog

# float64 parameters; adam keeps two extra accumulators per parameter
_BYTES_PER_PARAM = 8


@dataclass(frozen=True)
class BenchReport:
    param_count: int
    checkpoint_bytes: int
    train_memory_bytes: int   # parameters plus optimizer accumulators
    epochs_run: int
    mean_epoch_time_s: float
    min_epoch_time_s: float
    max_epoch_time_s: float
    final_accuracy: float
    macro_auc: float


def make_bench_report(
    model: Model,
    logs: Sequence[EpochLog],
    final_accuracy: float,
    macro_auc: float,
    optimizer: str = "adam",
) -> BenchReport:
    times = [log.wall_time_s for log in logs]
    copies = 3 if optimizer == "adam" else 1
    memory = sum(p.size for p in model_params(model)) * _BYTES_PER_PARAM * copies
    return BenchReport(
        param_count=param_count(model),
        checkpoint_bytes=len(model_to_bytes(model)),
        train_memory_bytes=memory,
        epochs_run=len(logs),
        mean_epoch_time_s=sum(times) / len(times) if times else 0.0,
        min_epoch_time_s=min(times) if times else 0.0,
        max_epoch_time_s=max(times) if times else 0.0,
        final_accuracy=final_accuracy,
        macro_auc=macro_auc,
    )


def format_bench_report(report: BenchReport) -> str:
    lines = [
        f"parameters: {report.param_count}",
        f"checkpoint_bytes: {report.checkpoint_bytes}",
        f"train_memory_bytes: {report.train_memory_bytes}",
        f"epochs_run: {report.epochs_run}",
        f"mean_epoch_time_s: {report.mean_epoch_time_s:.6f}",
        f"min_epoch_time_s: {report.min_epoch_time_s:.6f}",
        f"max_epoch_time_s: {report.max_epoch_time_s:.6f}",
        f"final_accuracy: {report.final_accuracy:.6f}",
        f"macro_auc: {report.macro_auc:.6f}",
    ]
    return "\n".join(lines) + "\n"


def write_bench_report(report: BenchReport, out_dir: str | Path) -> list[Path]:
    """Write bench_report.txt and a one-row bench_report.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = out_dir / "bench_report.txt"
    text.write_text(format_bench_report(report), encoding="utf-8")
    table = out_dir / "bench_report.csv"
    fields = (
        "param_count",
        "checkpoint_bytes",
        "train_memory_bytes",
        "epochs_run",
        "mean_epoch_time_s",
        "min_epoch_time_s",
        "max_epoch_time_s",
        "final_accuracy",
        "macro_auc",
    )
    with open(table, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(fields)
        writer.writerow(
            [
                report.param_count,
                report.checkpoint_bytes,
                report.train_memory_bytes,
                report.epochs_run,
            ]
            + [
                format(v, ".9g")
                for v in (
                    report.mean_epoch_time_s,
                    report.min_epoch_time_s,
                    report.max_epoch_time_s,
                    report.final_accuracy,
                    report.macro_auc,
                )
            ]
        )
    return [text, table]
