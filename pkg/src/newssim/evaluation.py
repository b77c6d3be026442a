"""Metric suite and the per-dimension comparison report.

Every cell of the report crosses one similarity dimension with one scoring
approach (cosine baseline or trained head) and carries MSE, tolerance
accuracies, Pearson r, n, and the constant-predictor MSE reference line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DegenerateError, IncompleteError, RangeError
from .features import MetricKind
from .model import mse_loss

APPROACH_BASELINE = "baseline-cosine"
APPROACH_FFN = "ffn"
APPROACHES = (APPROACH_BASELINE, APPROACH_FFN)

DEFAULT_TOLERANCES = (0.2, 0.33, 0.5)


def _check_series(preds: Sequence[float], targets: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.ndim != 1 or preds.shape[0] == 0:
        raise ArgumentError(
            f"need equal non-empty series, got {preds.shape} vs {targets.shape}"
        )
    return preds, targets


def tolerance_accuracy(preds: Sequence[float], targets: Sequence[float], tol: float) -> float:
    """Fraction of predictions with |pred - target| strictly below tol;
    a difference exactly equal to the tolerance counts as false."""
    if tol <= 0:
        raise RangeError(f"tolerance must be > 0, got {tol}")
    preds, targets = _check_series(preds, targets)
    return float(np.mean(np.abs(preds - targets) < tol))


def pearson(preds: Sequence[float], targets: Sequence[float]) -> float:
    preds, targets = _check_series(preds, targets)
    if preds.shape[0] < 2:
        raise ArgumentError("pearson needs at least two points")
    pc = preds - preds.mean()
    tc = targets - targets.mean()
    denom = np.sqrt((pc @ pc) * (tc @ tc))
    if denom == 0.0:
        raise DegenerateError("pearson undefined when either series has zero variance")
    return float(pc @ tc / denom)


def constant_predictor_mse(targets: Sequence[float]) -> float:
    """MSE of always predicting the target mean: the population variance."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 1 or targets.shape[0] == 0:
        raise ArgumentError("need a non-empty target series")
    centered = targets - targets.mean()
    return float(centered @ centered / centered.shape[0])


@dataclass
class ReportCell:
    metric: str
    approach: str
    mse: float
    tolerance_accuracies: dict[float, float]
    pearson: float
    n: int
    constant_mse: float

    def as_dict(self) -> dict:
        row = {
            "metric": self.metric,
            "approach": self.approach,
            "mse": self.mse,
        }
        for tol, acc in self.tolerance_accuracies.items():
            row[f"acc@{tol:g}"] = acc
        row["pearson"] = self.pearson
        row["n"] = self.n
        row["constant_mse"] = self.constant_mse
        return row


@dataclass
class EvalReport:
    tolerances: list[float]
    cells: list[ReportCell]

    def cell(self, metric: MetricKind | str, approach: str) -> ReportCell:
        name = metric.value if isinstance(metric, MetricKind) else metric
        for cell in self.cells:
            if cell.metric == name and cell.approach == approach:
                return cell
        raise IncompleteError(name, approach)

    def to_json(self) -> str:
        payload = {
            "tolerances": self.tolerances,
            "cells": [c.as_dict() for c in self.cells],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        tolerances = [float(t) for t in payload["tolerances"]]
        cells = []
        for row in payload["cells"]:
            cells.append(
                ReportCell(
                    metric=row["metric"],
                    approach=row["approach"],
                    mse=row["mse"],
                    tolerance_accuracies={t: row[f"acc@{t:g}"] for t in tolerances},
                    pearson=row["pearson"],
                    n=row["n"],
                    constant_mse=row["constant_mse"],
                )
            )
        return cls(tolerances=tolerances, cells=cells)

    def render_text(self) -> str:
        headers = ["metric", "approach", "mse"]
        headers += [f"acc@{t:g}" for t in self.tolerances]
        headers += ["pearson", "n", "const_mse"]
        rows = [headers]
        for c in self.cells:
            row = [c.metric, c.approach, f"{c.mse:.4f}"]
            row += [f"{c.tolerance_accuracies[t]:.4f}" for t in self.tolerances]
            row += [f"{c.pearson:.4f}", str(c.n), f"{c.constant_mse:.4f}"]
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
        lines = []
        for i, row in enumerate(rows):
            lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


ScoredPairs = dict[MetricKind, dict[str, tuple[Sequence[float], Sequence[float]]]]


def build_report(scored: ScoredPairs, tolerances: Sequence[float] = DEFAULT_TOLERANCES) -> EvalReport:
    """Fill the 7 x |approaches| grid; any missing or undersized cell is an
    error naming that cell."""
    cells = []
    for metric in MetricKind:
        by_approach = scored.get(metric, {})
        for approach in APPROACHES:
            if approach not in by_approach:
                raise IncompleteError(metric.value, approach)
            preds, targets = by_approach[approach]
            if len(preds) < 2:
                raise IncompleteError(metric.value, approach)
            cells.append(
                ReportCell(
                    metric=metric.value,
                    approach=approach,
                    mse=mse_loss(preds, targets),
                    tolerance_accuracies={
                        t: tolerance_accuracy(preds, targets, t) for t in tolerances
                    },
                    pearson=pearson(preds, targets),
                    n=len(preds),
                    constant_mse=constant_predictor_mse(targets),
                )
            )
    return EvalReport(tolerances=[float(t) for t in tolerances], cells=cells)


def write_report(report: EvalReport, json_path: Path | str, text_path: Path | str | None = None) -> None:
    Path(json_path).write_text(report.to_json() + "\n", encoding="utf-8")
    if text_path is not None:
        Path(text_path).write_text(report.render_text(), encoding="utf-8")
