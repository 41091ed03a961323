"""Strict readers for the cooploc CSV artifact schemas.

This package talks to the simulator only through its documented delimited
files; the column headers below are that contract, duplicated here on
purpose so the renderer stays importable without the simulator installed.
"""

from __future__ import annotations

import csv
import os

import numpy as np

TRUTH_COLUMNS = ["step", "robot", "x_m", "y_m", "theta_rad"]
BELIEF_COLUMNS = [
    "step",
    "robot",
    "x_m",
    "y_m",
    "theta_rad",
    "s11_m2",
    "s12_m2",
    "s13_mrad",
    "s22_m2",
    "s23_mrad",
    "s33_rad2",
]
ERROR_COLUMNS = [
    "step",
    "robot",
    "position_error_m",
    "orientation_error_rad",
    "nees",
    "running_mean_position_error_m",
    "running_mean_orientation_error_rad",
]
SWEEP_SUMMARY_COLUMNS = [
    "availability",
    "n_seeds",
    "mean_paper_rmse_position_m",
    "std_paper_rmse_position_m",
    "stderr_paper_rmse_position_m",
]

ESTIMATOR_LABELS = {
    "dr": "DR",
    "de_ekf": "DE-EKF",
    "l_ekf": "L-EKF",
    "oracle": "Joint EKF",
}


class SchemaError(ValueError):
    """An input file does not match the documented artifact schema."""


def _read_table(path: str, columns: list[str]) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{os.path.basename(path)}: file is empty") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(
                f"{os.path.basename(path)}: missing column(s) {', '.join(missing)}"
            )
        if header != columns:
            raise SchemaError(
                f"{os.path.basename(path)}: header {header} does not match "
                f"schema {columns}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise SchemaError(
                    f"{os.path.basename(path)}, line {lineno}: expected "
                    f"{len(columns)} fields, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise SchemaError(
                    f"{os.path.basename(path)}, line {lineno}: {exc}"
                ) from None
    if not rows:
        raise SchemaError(f"{os.path.basename(path)}: no data rows")
    return np.asarray(rows, dtype=float)


def robot_track(table: np.ndarray, robot: int) -> np.ndarray:
    """Rows of one robot, ordered by step; columns (step, x, y)."""
    rows = table[table[:, 1] == robot]
    if rows.shape[0] == 0:
        available = sorted({int(r) for r in table[:, 1]})
        raise SchemaError(f"no rows for robot {robot}; file has robots {available}")
    return rows[np.argsort(rows[:, 0])][:, [0, 2, 3]]


def read_truth(path: str) -> np.ndarray:
    return _read_table(path, TRUTH_COLUMNS)


def read_beliefs(path: str) -> np.ndarray:
    return _read_table(path, BELIEF_COLUMNS)


def read_errors(path: str) -> np.ndarray:
    return _read_table(path, ERROR_COLUMNS)


def read_sweep_summary(path: str) -> np.ndarray:
    table = _read_table(path, SWEEP_SUMMARY_COLUMNS)
    return table[np.argsort(table[:, 0])]


def estimator_name(filename: str, prefix: str) -> str:
    stem = os.path.basename(filename)
    return stem[len(prefix) : -len(".csv")]


def estimator_label(name: str) -> str:
    return ESTIMATOR_LABELS.get(name, name)


def discover(directory: str, prefix: str) -> list[str]:
    """Paths of per-estimator files (beliefs_*.csv or errors_*.csv)."""
    out = [
        os.path.join(directory, name)
        for name in sorted(os.listdir(directory))
        if name.startswith(prefix) and name.endswith(".csv")
    ]
    return out
