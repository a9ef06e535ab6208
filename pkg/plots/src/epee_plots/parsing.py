"""Strict parsers for the evaluation output files.

These parsers accept exactly the documented schemas and nothing else:
the grid CSV (``tau,patience,accuracy,macro_f1,speedup,n_samples``),
the budgeted-curve CSV (``layer,accuracy,mean_entropy``), and the
frontier JSON (array of objects with tau/patience/speedup/accuracy).
Unknown columns or keys are rejected, and every number plotted later
comes verbatim from the values parsed here; nothing is recomputed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GRID_COLUMNS = ("tau", "patience", "accuracy", "macro_f1", "speedup", "n_samples")
CURVE_COLUMNS = ("layer", "accuracy", "mean_entropy")
FRONTIER_KEYS = {"tau", "patience", "speedup", "accuracy"}


class SchemaError(ValueError):
    """Input file does not match the documented schema."""


@dataclass(frozen=True)
class GridTable:
    """Grid rows pivoted into dense (tau x patience) matrices."""

    tau_values: tuple[float, ...]
    patience_values: tuple[int, ...]
    accuracy: np.ndarray   # shape (len(tau_values), len(patience_values))
    macro_f1: np.ndarray
    speedup: np.ndarray

    def cell(self, tau: float, patience: int) -> dict:
        i = self.tau_values.index(tau)
        j = self.patience_values.index(patience)
        return {"tau": tau, "patience": patience,
                "accuracy": float(self.accuracy[i, j]),
                "macro_f1": float(self.macro_f1[i, j]),
                "speedup": float(self.speedup[i, j])}


def _check_header(found, expected, path):
    if tuple(found or ()) != tuple(expected):
        missing = [c for c in expected if c not in (found or ())]
        extra = [c for c in (found or ()) if c not in expected]
        detail = []
        if missing:
            detail.append(f"missing column(s) {missing}")
        if extra:
            detail.append(f"unknown column(s) {extra}")
        if not detail:
            detail.append(f"column order must be {','.join(expected)}")
        raise SchemaError(f"{path}: bad header: {'; '.join(detail)}")


def parse_grid(path: str | Path) -> GridTable:
    """Read a grid CSV into dense matrices; the grid must be complete."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        _check_header(header, GRID_COLUMNS, path)
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(GRID_COLUMNS):
                raise SchemaError(f"{path}:{lineno}: expected "
                                  f"{len(GRID_COLUMNS)} fields, got {len(row)}")
            try:
                tau, patience = float(row[0]), int(row[1])
                values = tuple(float(v) for v in row[2:5])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
            if (tau, patience) in rows:
                raise SchemaError(f"{path}:{lineno}: duplicate cell "
                                  f"({tau}, {patience})")
            rows[(tau, patience)] = values
    if not rows:
        raise SchemaError(f"{path}: no grid rows")

    taus = tuple(sorted({t for t, _ in rows}))
    patiences = tuple(sorted({p for _, p in rows}))
    shape = (len(taus), len(patiences))
    acc, f1, speed = (np.full(shape, np.nan) for _ in range(3))
    for (tau, patience), (a, f, s) in rows.items():
        i, j = taus.index(tau), patiences.index(patience)
        acc[i, j], f1[i, j], speed[i, j] = a, f, s
    if np.isnan(acc).any():
        missing = [(taus[i], patiences[j]) for i, j in zip(*np.where(np.isnan(acc)))]
        raise SchemaError(f"{path}: incomplete grid, missing cells {missing[:5]}")
    return GridTable(taus, patiences, acc, f1, speed)


def parse_curve(path: str | Path) -> list[dict]:
    """Read a budgeted-curve CSV into per-layer records."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        _check_header(header, CURVE_COLUMNS, path)
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CURVE_COLUMNS):
                raise SchemaError(f"{path}:{lineno}: expected "
                                  f"{len(CURVE_COLUMNS)} fields, got {len(row)}")
            try:
                out.append({"layer": int(row[0]), "accuracy": float(row[1]),
                            "mean_entropy": float(row[2])})
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    if not out:
        raise SchemaError(f"{path}: no curve rows")
    if [r["layer"] for r in out] != list(range(1, len(out) + 1)):
        raise SchemaError(f"{path}: layers must run 1..M in order")
    return out


def parse_frontier(path: str | Path) -> list[dict]:
    """Read a frontier JSON array; keys must be exactly the documented set."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if not isinstance(payload, list) or not payload:
        raise SchemaError(f"{path}: expected a nonempty JSON array")
    out = []
    for i, item in enumerate(payload):
        if not isinstance(item, dict) or set(item) != FRONTIER_KEYS:
            raise SchemaError(
                f"{path}: entry {i} must have exactly keys "
                f"{sorted(FRONTIER_KEYS)}, got "
                f"{sorted(item) if isinstance(item, dict) else type(item).__name__}")
        out.append({"tau": float(item["tau"]), "patience": int(item["patience"]),
                    "speedup": float(item["speedup"]),
                    "accuracy": float(item["accuracy"])})
    return out
