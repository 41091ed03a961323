"""Re-run the decentralized filter over recorded odometry and measurements.

The log directory is the stand-in for live hardware: it must contain
``odometry.csv`` (one control row per robot per step) and may contain
``measurements.csv`` and ``truth.csv`` in the standard artifact schemas.
Steps without measurement rows simply run prediction-only. The stationary
assignment is re-derived from the scenario configuration (policy and seed),
so replaying a directory produced by ``simulate`` with the same
configuration reproduces its belief series bit for bit.

Initial beliefs are seeded from the log's step-0 ground truth when present;
otherwise the configuration's explicit initial poses are taken as the exact
initial means (no noise is invented for data we did not simulate).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .artifacts import read_measurements, read_odometry, read_truth
from .config import ScenarioConfig
from .coordination import StepSchedule, build_schedule, select_stationary
from .core import Belief, Pose
from .ekf import NeighborObservation, correct_sequential
from .errors import ReplayFormatError
from .models import Control, RelativeMeasurement
from .sim import _predict_all, initial_beliefs


@dataclass(frozen=True, eq=False, slots=True)
class ReplayResult:
    """Belief series recomputed from a log, plus everything needed to report it."""

    config: ScenarioConfig
    n_steps: int
    controls: list[list[Control]]
    measurements: dict[int, list[RelativeMeasurement]]
    schedules: list[StepSchedule]
    initial_beliefs: tuple[Belief, ...]
    beliefs: list[tuple[Belief, ...]]
    used: list[frozenset[tuple[int, int]]]
    rejected: list[int]
    truth: dict[int, list[Pose]] | None


def _replay_initial_beliefs(
    config: ScenarioConfig, truth: dict[int, list[Pose]] | None
) -> tuple[Belief, ...]:
    if truth is not None and 0 in truth:
        return initial_beliefs(config, truth[0])
    if config.initial.poses is not None:
        cov = np.diag(
            [
                config.initial.sigma_x**2,
                config.initial.sigma_y**2,
                config.initial.sigma_theta**2,
            ]
        )
        return tuple(
            Belief(mean=Pose(*p), covariance=cov, robot=i, step=0)
            for i, p in enumerate(config.initial.poses)
        )
    raise ReplayFormatError(
        "truth.csv",
        0,
        "log has no step-0 ground truth and the configuration sets no "
        "initial.poses; cannot place initial beliefs",
    )


def run_replay(config: ScenarioConfig, log_dir: str) -> ReplayResult:
    """Run the decentralized EKF over a recorded log directory."""
    odometry_path = os.path.join(log_dir, "odometry.csv")
    if not os.path.exists(odometry_path):
        raise ReplayFormatError(odometry_path, 0, "odometry.csv is required")
    controls = read_odometry(odometry_path, config.n_robots)
    n_steps = len(controls)

    measurements_path = os.path.join(log_dir, "measurements.csv")
    if os.path.exists(measurements_path):
        measurements = read_measurements(measurements_path, config.n_robots)
    else:
        measurements = {}
    for step in measurements:
        if step > n_steps:
            raise ReplayFormatError(
                measurements_path, 0, f"measurement step {step} beyond odometry ({n_steps})"
            )

    truth_path = os.path.join(log_dir, "truth.csv")
    truth = read_truth(truth_path, config.n_robots) if os.path.exists(truth_path) else None

    fleet = config.fleet()
    beliefs = list(_replay_initial_beliefs(config, truth))
    init = tuple(beliefs)
    gate = config.gate()

    rows: list[tuple[Belief, ...]] = []
    schedules: list[StepSchedule] = []
    used_rows: list[frozenset[tuple[int, int]]] = []
    rejected_rows: list[int] = []
    for t in range(n_steps):
        epoch_index = t // config.epoch.epoch_length
        anchor = select_stationary(fleet, epoch_index, config.epoch, config.seed)
        step_measurements = measurements.get(t + 1, [])
        schedule = build_schedule(fleet, anchor, step_measurements)
        beliefs = _predict_all(beliefs, anchor, controls[t], config)
        by_pair = {(m.observer, m.target): m for m in step_measurements}
        used: set[tuple[int, int]] = set()
        rejected = 0
        for robot, sources in schedule.correction_order:
            if not sources:
                continue
            observations = [
                NeighborObservation(beliefs[src], by_pair[(robot, src)])
                for src in sources
            ]
            result = correct_sequential(
                beliefs[robot],
                observations,
                config.sensor.noise,
                gate_threshold=gate,
                joseph_form=config.joseph_form,
            )
            beliefs[robot] = result.belief
            rejected += result.rejected
            for src, ok in zip(sources, result.outcomes):
                if ok:
                    used.add((robot, src))
        rows.append(tuple(beliefs))
        schedules.append(schedule)
        used_rows.append(frozenset(used))
        rejected_rows.append(rejected)

    return ReplayResult(
        config=config,
        n_steps=n_steps,
        controls=controls,
        measurements=measurements,
        schedules=schedules,
        initial_beliefs=init,
        beliefs=rows,
        used=used_rows,
        rejected=rejected_rows,
        truth=truth,
    )
