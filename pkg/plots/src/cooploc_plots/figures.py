"""Render cooploc CSV artifacts into the three standard figures.

All figures are rendered with the Agg backend at a fixed size and dpi and
with the PNG Software tag stripped, so identical inputs produce identical
image bytes. Inputs are opened read-only and never touched.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .readers import (
    SchemaError,
    discover,
    estimator_label,
    estimator_name,
    read_beliefs,
    read_errors,
    read_sweep_summary,
    read_truth,
    robot_track,
)

FIGURE_KINDS = ("trajectory", "rmse_compare", "dropout_sweep")

_SAVE_OPTIONS = dict(dpi=150, metadata={"Software": None})

# One fixed color per estimator so multi-figure reports stay consistent.
_COLORS = {"DR": "tab:red", "DE-EKF": "tab:blue", "L-EKF": "tab:green"}


def _color(label: str):
    return _COLORS.get(label)


def plot_trajectory(truth_path: str, belief_paths: list[str], out_path: str, robot: int = 0) -> str:
    """One robot's planar path: ground truth plus one curve per estimator."""
    truth = robot_track(read_truth(truth_path), robot)
    estimators = []
    for path in belief_paths:
        name = estimator_name(path, "beliefs_")
        estimators.append((estimator_label(name), robot_track(read_beliefs(path), robot)))
    if not estimators:
        raise SchemaError("no beliefs_*.csv inputs given")

    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    single_point = truth.shape[0] == 1
    style = dict(marker="o") if single_point else {}
    ax.plot(truth[:, 1], truth[:, 2], color="black", label="ground truth", **style)
    for label, track in estimators:
        ax.plot(
            track[:, 1],
            track[:, 2],
            label=label,
            color=_color(label),
            linestyle="--" if label == "DR" else "-",
            marker="o" if track.shape[0] == 1 else None,
        )
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"Robot {robot} trajectory")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_OPTIONS)
    plt.close(fig)
    return out_path


def _fleet_running_mean(table: np.ndarray, column: int) -> tuple[np.ndarray, np.ndarray]:
    """Fleet-mean running-mean error per step from an errors_* table."""
    steps = np.unique(table[:, 0])
    values = np.empty_like(steps)
    for i, step in enumerate(steps):
        values[i] = table[table[:, 0] == step, column].mean()
    return steps, values


def plot_rmse_compare(error_paths: list[str], out_path: str) -> str:
    """Position and orientation running-mean error, one curve per estimator."""
    if not error_paths:
        raise SchemaError("no errors_*.csv inputs given")
    fig, (ax_pos, ax_ori) = plt.subplots(1, 2, figsize=(10.0, 4.2))
    for path in error_paths:
        label = estimator_label(estimator_name(path, "errors_"))
        table = read_errors(path)
        steps, position = _fleet_running_mean(table, 5)
        _, orientation = _fleet_running_mean(table, 6)
        marker = "o" if len(steps) == 1 else None
        ax_pos.plot(steps, position, label=label, color=_color(label), marker=marker)
        ax_ori.plot(steps, orientation, label=label, color=_color(label), marker=marker)
    ax_pos.set_xlabel("step")
    ax_pos.set_ylabel("position error, running mean [m]")
    ax_pos.set_title("(a) position")
    ax_pos.legend()
    ax_pos.grid(True, alpha=0.3)
    ax_ori.set_xlabel("step")
    ax_ori.set_ylabel("orientation error, running mean [rad]")
    ax_ori.set_title("(b) orientation")
    ax_ori.legend()
    ax_ori.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_OPTIONS)
    plt.close(fig)
    return out_path


def plot_dropout(summary_path: str, out_path: str) -> str:
    """Mean paper-RMSE vs measurement availability, std error bars."""
    table = read_sweep_summary(summary_path)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.errorbar(
        table[:, 0],
        table[:, 2],
        yerr=table[:, 3],
        fmt="o-",
        color="tab:blue",
        capsize=3,
    )
    ax.set_xlabel("measurement availability")
    ax.set_ylabel("paper-RMSE (mean Euclidean error) [m]")
    ax.set_title("Accuracy under measurement dropout")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_OPTIONS)
    plt.close(fig)
    return out_path


def render(kind: str, in_dir: str, out_path: str, robot: int = 0) -> str:
    """Dispatch one figure kind against an artifact directory."""
    if kind == "trajectory":
        truth_path = os.path.join(in_dir, "truth.csv")
        if not os.path.exists(truth_path):
            raise SchemaError("truth.csv not found in input directory")
        return plot_trajectory(truth_path, discover(in_dir, "beliefs_"), out_path, robot)
    if kind == "rmse_compare":
        return plot_rmse_compare(discover(in_dir, "errors_"), out_path)
    if kind == "dropout_sweep":
        summary = os.path.join(in_dir, "sweep_summary.csv")
        if not os.path.exists(summary):
            raise SchemaError("sweep_summary.csv not found in input directory")
        return plot_dropout(summary, out_path)
    raise SchemaError(f"unknown figure kind {kind!r}, expected one of {FIGURE_KINDS}")
