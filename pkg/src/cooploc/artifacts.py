"""CSV artifact schemas, writers, readers, and the run manifest.

Column names carry their unit as a suffix (x_m, theta_rad, v_mps), so the
header row documents both the column and its unit. Floats are serialized
with the shortest round-trip decimal representation, which makes replays and
repeat runs byte-comparable. The manifest is written atomically and embeds
the effective configuration plus the seed, so it alone suffices to rerun an
experiment bit-for-bit.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

from . import __version__
from .config import ScenarioConfig, config_to_dict
from .errors import ReplayFormatError
from .models import Control, RelativeMeasurement
from .core import Pose

TRUTH_COLUMNS = ("step", "robot", "x_m", "y_m", "theta_rad")
BELIEF_COLUMNS = (
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
)
MEASUREMENT_COLUMNS = ("step", "observer", "target", "range_m", "bearing_rad", "used_flag")
SCHEDULE_COLUMNS = ("step", "stationary", "robot", "source_list")
ODOMETRY_COLUMNS = ("step", "robot", "v_mps", "omega_radps")
ERROR_COLUMNS = (
    "step",
    "robot",
    "position_error_m",
    "orientation_error_rad",
    "nees",
    "running_mean_position_error_m",
    "running_mean_orientation_error_rad",
)
SWEEP_RUN_COLUMNS = (
    "availability",
    "seed",
    "paper_rmse_position_m",
    "standard_rmse_position_m",
    "paper_rmse_orientation_rad",
    "standard_rmse_orientation_rad",
    "mean_nees",
)
SWEEP_SUMMARY_COLUMNS = (
    "availability",
    "n_seeds",
    "mean_paper_rmse_position_m",
    "std_paper_rmse_position_m",
    "stderr_paper_rmse_position_m",
)

# filename (or prefix for per-estimator files) -> expected header
SCHEMAS: dict[str, tuple[str, ...]] = {
    "truth.csv": TRUTH_COLUMNS,
    "beliefs_": BELIEF_COLUMNS,
    "measurements.csv": MEASUREMENT_COLUMNS,
    "schedule.csv": SCHEDULE_COLUMNS,
    "odometry.csv": ODOMETRY_COLUMNS,
    "errors_": ERROR_COLUMNS,
    "sweep_runs.csv": SWEEP_RUN_COLUMNS,
    "sweep_summary.csv": SWEEP_SUMMARY_COLUMNS,
}


def fmt(value: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(value))


def _write_rows(path: str, columns: tuple[str, ...], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def schema_for(filename: str) -> tuple[str, ...] | None:
    """Expected header for an artifact filename, or None if not an artifact."""
    if filename in SCHEMAS:
        return SCHEMAS[filename]
    for prefix in ("beliefs_", "errors_"):
        if filename.startswith(prefix) and filename.endswith(".csv"):
            return SCHEMAS[prefix]
    return None


def check_artifact(path: str) -> None:
    """Validate an emitted CSV against its schema; raises on violation."""
    name = os.path.basename(path)
    columns = schema_for(name)
    if columns is None:
        raise ValueError(f"{name} is not a known artifact")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if tuple(header.split(",")) != columns:
            raise ValueError(
                f"{name}: header {header!r} does not match schema {','.join(columns)}"
            )
        for lineno, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split(",")
            if len(fields) != len(columns):
                raise ValueError(
                    f"{name}, line {lineno}: expected {len(columns)} fields, got {len(fields)}"
                )


def check_artifact_dir(out_dir: str) -> list[str]:
    """Schema-check every recognized CSV in a directory; returns the names."""
    checked = []
    for name in sorted(os.listdir(out_dir)):
        if name.endswith(".csv") and schema_for(name) is not None:
            check_artifact(os.path.join(out_dir, name))
            checked.append(name)
    return checked


def write_pose_csv(path: str, series) -> None:
    """Write (step, robot, pose) rows; ``series`` yields (step, robot, Pose)."""
    rows = (
        (str(step), str(robot), fmt(p.x), fmt(p.y), fmt(p.theta))
        for step, robot, p in series
    )
    _write_rows(path, TRUTH_COLUMNS, rows)


def write_belief_csv(path: str, series) -> None:
    """Write belief rows; ``series`` yields (step, robot, Belief)."""

    def generate():
        for step, robot, b in series:
            c = b.covariance
            yield (
                str(step),
                str(robot),
                fmt(b.mean.x),
                fmt(b.mean.y),
                fmt(b.mean.theta),
                fmt(c[0, 0]),
                fmt(c[0, 1]),
                fmt(c[0, 2]),
                fmt(c[1, 1]),
                fmt(c[1, 2]),
                fmt(c[2, 2]),
            )

    _write_rows(path, BELIEF_COLUMNS, generate())


def write_measurement_csv(path: str, series) -> None:
    """Write measurement rows; ``series`` yields (measurement, used flag)."""
    rows = (
        (
            str(m.step),
            str(m.observer),
            str(m.target),
            fmt(m.range),
            fmt(m.bearing),
            "1" if used else "0",
        )
        for m, used in series
    )
    _write_rows(path, MEASUREMENT_COLUMNS, rows)


def write_schedule_csv(path: str, series) -> None:
    """Write schedule rows; ``series`` yields (step, StepSchedule)."""

    def generate():
        for step, schedule in series:
            for robot, sources in schedule.correction_order:
                yield (
                    str(step),
                    str(schedule.stationary),
                    str(robot),
                    ";".join(str(s) for s in sources),
                )

    _write_rows(path, SCHEDULE_COLUMNS, generate())


def write_odometry_csv(path: str, series) -> None:
    """Write control rows; ``series`` yields (step, robot, Control)."""
    rows = (
        (str(step), str(robot), fmt(u.v), fmt(u.omega)) for step, robot, u in series
    )
    _write_rows(path, ODOMETRY_COLUMNS, rows)


def write_error_csv(path: str, rows) -> None:
    """Write pre-formatted error rows (already strings, schema order)."""
    _write_rows(path, ERROR_COLUMNS, rows)


def write_sweep_runs_csv(path: str, rows) -> None:
    _write_rows(path, SWEEP_RUN_COLUMNS, rows)


def write_sweep_summary_csv(path: str, rows) -> None:
    _write_rows(path, SWEEP_SUMMARY_COLUMNS, rows)


def write_json_atomic(path: str, payload: dict) -> None:
    """Serialize deterministically (sorted keys) and rename into place."""
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass(frozen=True, slots=True)
class RunManifest:
    """Snapshot that makes a finished run reproducible and self-describing."""

    command: str
    seed: int
    config: ScenarioConfig
    artifacts: dict[str, str]
    summary: dict

    def to_dict(self) -> dict:
        return {
            "tool": "cooploc",
            "version": __version__,
            "command": self.command,
            "seed": self.seed,
            "config": config_to_dict(self.config),
            "artifacts": dict(sorted(self.artifacts.items())),
            "summary": self.summary,
        }


def write_manifest(out_dir: str, manifest: RunManifest) -> str:
    path = os.path.join(out_dir, "manifest.json")
    write_json_atomic(path, manifest.to_dict())
    return path


# ---------------------------------------------------------------------------
# Replay-side readers. These are strict: exact headers, parseable numbers,
# non-decreasing step order; violations report the 1-based row number.
# ---------------------------------------------------------------------------


def _read_table(path: str, columns: tuple[str, ...], allow_missing_used=False):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        got = tuple(header.split(","))
        expected = columns
        if allow_missing_used and got == columns[:-1]:
            expected = columns[:-1]
        elif got != columns:
            raise ReplayFormatError(
                path, 1, f"header {header!r} does not match schema {','.join(columns)}"
            )
        for lineno, line in enumerate(fh, start=2):
            stripped = line.rstrip("\n")
            if not stripped:
                continue
            fields = stripped.split(",")
            if len(fields) != len(expected):
                raise ReplayFormatError(
                    path,
                    lineno,
                    f"expected {len(expected)} fields, got {len(fields)}",
                )
            yield lineno, fields


def _parse_int(path: str, lineno: int, name: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ReplayFormatError(path, lineno, f"{name} must be an integer, got {raw!r}") from None


def _parse_float(path: str, lineno: int, name: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ReplayFormatError(path, lineno, f"{name} must be a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ReplayFormatError(path, lineno, f"{name} must be finite, got {raw!r}")
    return value


def read_odometry(path: str, n_robots: int) -> list[list[Control]]:
    """Parse odometry rows into per-step control lists (steps 1..T, dense)."""
    per_step: dict[int, dict[int, Control]] = {}
    last_step = None
    for lineno, fields in _read_table(path, ODOMETRY_COLUMNS):
        step = _parse_int(path, lineno, "step", fields[0])
        robot = _parse_int(path, lineno, "robot", fields[1])
        v = _parse_float(path, lineno, "v_mps", fields[2])
        omega = _parse_float(path, lineno, "omega_radps", fields[3])
        if step < 1:
            raise ReplayFormatError(path, lineno, f"step must be >= 1, got {step}")
        if last_step is not None and step < last_step:
            raise ReplayFormatError(
                path, lineno, f"steps out of order: {step} after {last_step}"
            )
        last_step = step
        if not 0 <= robot < n_robots:
            raise ReplayFormatError(
                path, lineno, f"robot {robot} outside fleet 0..{n_robots - 1}"
            )
        row = per_step.setdefault(step, {})
        if robot in row:
            raise ReplayFormatError(
                path, lineno, f"duplicate odometry for robot {robot} at step {step}"
            )
        row[robot] = Control(v, omega)
    if not per_step:
        raise ReplayFormatError(path, 2, "no odometry rows")
    n_steps = max(per_step)
    controls: list[list[Control]] = []
    for step in range(1, n_steps + 1):
        row = per_step.get(step)
        if row is None or len(row) != n_robots:
            have = sorted(row) if row else []
            raise ReplayFormatError(
                path,
                2,
                f"step {step} must list all {n_robots} robots, have {have}",
            )
        controls.append([row[i] for i in range(n_robots)])
    return controls


def read_measurements(path: str, n_robots: int) -> dict[int, list[RelativeMeasurement]]:
    """Parse measurement rows grouped by step; used_flag column optional."""
    out: dict[int, list[RelativeMeasurement]] = {}
    seen: set[tuple[int, int, int]] = set()
    last_step = None
    for lineno, fields in _read_table(path, MEASUREMENT_COLUMNS, allow_missing_used=True):
        step = _parse_int(path, lineno, "step", fields[0])
        observer = _parse_int(path, lineno, "observer", fields[1])
        target = _parse_int(path, lineno, "target", fields[2])
        rng = _parse_float(path, lineno, "range_m", fields[3])
        bearing = _parse_float(path, lineno, "bearing_rad", fields[4])
        if step < 1:
            raise ReplayFormatError(path, lineno, f"step must be >= 1, got {step}")
        if last_step is not None and step < last_step:
            raise ReplayFormatError(
                path, lineno, f"steps out of order: {step} after {last_step}"
            )
        last_step = step
        for name, rid in (("observer", observer), ("target", target)):
            if not 0 <= rid < n_robots:
                raise ReplayFormatError(
                    path, lineno, f"{name} {rid} outside fleet 0..{n_robots - 1}"
                )
        if observer == target:
            raise ReplayFormatError(path, lineno, "observer and target coincide")
        if rng < 0:
            raise ReplayFormatError(path, lineno, f"range must be >= 0, got {rng}")
        key = (step, observer, target)
        if key in seen:
            raise ReplayFormatError(
                path, lineno, f"duplicate measurement {observer}->{target} at step {step}"
            )
        seen.add(key)
        out.setdefault(step, []).append(
            RelativeMeasurement(
                observer=observer, target=target, range=rng, bearing=bearing, step=step
            )
        )
    return out


def read_truth(path: str, n_robots: int) -> dict[int, list[Pose]]:
    """Parse ground-truth rows grouped by step (step 0 = initial poses)."""
    per_step: dict[int, dict[int, Pose]] = {}
    last_step = None
    for lineno, fields in _read_table(path, TRUTH_COLUMNS):
        step = _parse_int(path, lineno, "step", fields[0])
        robot = _parse_int(path, lineno, "robot", fields[1])
        x = _parse_float(path, lineno, "x_m", fields[2])
        y = _parse_float(path, lineno, "y_m", fields[3])
        theta = _parse_float(path, lineno, "theta_rad", fields[4])
        if step < 0:
            raise ReplayFormatError(path, lineno, f"step must be >= 0, got {step}")
        if last_step is not None and step < last_step:
            raise ReplayFormatError(
                path, lineno, f"steps out of order: {step} after {last_step}"
            )
        last_step = step
        if not 0 <= robot < n_robots:
            raise ReplayFormatError(
                path, lineno, f"robot {robot} outside fleet 0..{n_robots - 1}"
            )
        per_step.setdefault(step, {})[robot] = Pose(x, y, theta)
    out: dict[int, list[Pose]] = {}
    for step, row in per_step.items():
        if len(row) != n_robots:
            raise ReplayFormatError(
                path, 2, f"step {step} must list all {n_robots} robots"
            )
        out[step] = [row[i] for i in range(n_robots)]
    return out
