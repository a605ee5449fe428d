"""Benchmark tables, diagnostics and pooled-estimate exports."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import pandas as pd

from . import __version__
from .inference import MetricsReport, PooledEstimate

logger = logging.getLogger(__name__)


def provenance(config: dict, seed: int, **extra: Any) -> dict:
    """Metadata block embedded in every output file."""
    return {"version": __version__, "seed": seed, "config": config, **extra}


@dataclass
class BenchmarkTable:
    """Per-method metric rows for one scenario."""
    scenario: str
    rows: list[MetricsReport] = field(default_factory=list)
    include_accuracy: bool = False
    provenance: dict = field(default_factory=dict)

    @property
    def methods(self) -> list[str]:
        return [row.method for row in self.rows]

    def row(self, method: str) -> MetricsReport:
        for row in self.rows:
            if row.method == method:
                return row
        raise KeyError(method)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_row(self.include_accuracy) for row in self.rows])

    def summary(self) -> str:
        lines = [f"Scenario: {self.scenario}"]
        for row in self.rows:
            mse = "-" if row.imp_mse is None else f"{row.imp_mse:.4f}"
            sd = "-" if row.sd_across_mc is None else f"{row.sd_across_mc:.4f}"
            line = (
                f"  {row.method:<14} time {row.wall_seconds_per_imputation:8.3f}s  "
                f"imp MSE {mse:>8}  bias {row.bias:+.4f}  CR {row.coverage_rate:.2f}  "
                f"SE {row.mean_se:.4f}  SD {sd}"
            )
            if self.include_accuracy and row.imp_accuracy is not None:
                line += f"  accu {row.imp_accuracy:.3f}"
            if row.failures:
                line += f"  ({row.failures} failed replicates)"
            lines.append(line)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "include_accuracy": self.include_accuracy,
            "provenance": self.provenance,
            "rows": [row.to_dict() for row in self.rows],
        }


def _write_json(payload: dict, output_path: Path) -> None:
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with output_path.open("w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)


def export_benchmark_table(
    table: BenchmarkTable,
    output_path: str | Path,
    format: str = "csv",
) -> None:
    """Write a benchmark table as csv, json or text."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    if format == "csv":
        table.to_frame().to_csv(output_path, index=False)
    elif format == "json":
        _write_json(table.to_dict(), output_path)
    elif format == "text":
        with output_path.open("w", encoding="utf-8") as f:
            f.write(table.summary())
            f.write("\n")
    else:
        raise ValueError(f"Unknown format: {format}")
    logger.info("Benchmark table written to %s", output_path)


def export_pooled(pooled: PooledEstimate, output_path: str | Path, meta: dict) -> None:
    payload = {"pooled": pooled.to_dict(), "provenance": meta}
    _write_json(payload, Path(output_path))
    logger.info("Pooled estimates written to %s", output_path)


def export_diagnostics(diagnostics: dict, output_path: str | Path, meta: dict) -> None:
    payload = {"diagnostics": diagnostics, "provenance": meta}
    _write_json(payload, Path(output_path))
    logger.info("Diagnostics written to %s", output_path)
