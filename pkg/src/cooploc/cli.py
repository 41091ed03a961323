"""Command-line interface: simulate, sweep-dropout, replay, validate.

Every command is deterministic given its seed: repeating an invocation
produces byte-identical CSV artifacts. Exit codes are a stable contract:
0 success, 2 configuration or input error (with a field- or row-level
message), 3 numerical failure inside the filter (with step context).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources

import numpy as np

from . import __version__
from .artifacts import (
    RunManifest,
    fmt,
    write_belief_csv,
    write_error_csv,
    write_json_atomic,
    write_manifest,
    write_measurement_csv,
    write_odometry_csv,
    write_pose_csv,
    write_schedule_csv,
    write_sweep_runs_csv,
    write_sweep_summary_csv,
)
from .config import (
    KNOWN_ESTIMATORS,
    ScenarioConfig,
    config_from_dict,
    dump_effective_config,
    load_config,
    validate_config,
)
from .errors import ConfigError, CoopLocError, NumericalFailureError, ReplayFormatError
from .metrics import error_series
from .replay import run_replay
from .sim import RunRecord, generate_trace, run_estimator

PRESETS = ("paper_fig2", "paper_fig3", "paper_fig4")

DEFAULT_SWEEP_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}, expected one of {PRESETS}")
    path = resources.files("cooploc").joinpath("presets", f"{name}.yaml")
    with resources.as_file(path) as real:
        return load_config(str(real))


def _resolve_config(args) -> ScenarioConfig:
    if getattr(args, "config", None):
        config = load_config(args.config)
    elif getattr(args, "preset", None):
        config = load_preset(args.preset)
    else:
        raise ConfigError("config", "either --config or --preset is required")
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "estimators", None):
        overrides["estimators"] = tuple(
            name.strip() for name in args.estimators.split(",") if name.strip()
        )
    if getattr(args, "joseph_form", False):
        overrides["joseph_form"] = True
    if getattr(args, "gate", None) is not None:
        overrides["gate_enabled"] = args.gate == "on"
    if overrides:
        config = config.with_overrides(**overrides)
    return validate_config(config)


# ---------------------------------------------------------------------------
# Shared reporting helpers
# ---------------------------------------------------------------------------


def _error_tables(truth, means, covariances):
    """Per-robot ErrorSeries from (n, N, 3) truth/means and (n, N, 3, 3) covs."""
    n_robots = truth.shape[1]
    return [
        error_series(truth[:, r, :], means[:, r, :], covariances[:, r, :, :])
        for r in range(n_robots)
    ]


def _estimator_metrics(tables, applied: int, rejected: int) -> dict:
    position = np.concatenate([t.position_error for t in tables])
    orientation = np.concatenate([t.orientation_error for t in tables])
    nees_all = np.concatenate([t.nees for t in tables])
    final_positions = [t.position_error[-1] for t in tables]
    per_robot = {
        str(r): {
            "paper_rmse_position_m": float(np.mean(t.position_error)),
            "paper_rmse_orientation_rad": float(np.mean(t.orientation_error)),
        }
        for r, t in enumerate(tables)
    }
    return {
        "paper_rmse_position_m": float(np.mean(position)),
        "standard_rmse_position_m": float(np.sqrt(np.mean(position**2))),
        "paper_rmse_orientation_rad": float(np.mean(orientation)),
        "standard_rmse_orientation_rad": float(np.sqrt(np.mean(orientation**2))),
        "mean_nees": float(np.mean(nees_all)),
        "final_step_mean_position_error_m": float(np.mean(final_positions)),
        "measurements_used": applied,
        "measurements_rejected": rejected,
        "per_robot": per_robot,
    }


def _error_rows(tables):
    """errors_*.csv rows: instantaneous and running-mean series per robot."""
    n_steps = len(tables[0].position_error)
    running_pos = [np.cumsum(t.position_error) for t in tables]
    running_ori = [np.cumsum(t.orientation_error) for t in tables]
    for t in range(n_steps):
        for r, table in enumerate(tables):
            yield (
                str(t + 1),
                str(r),
                fmt(table.position_error[t]),
                fmt(table.orientation_error[t]),
                fmt(table.nees[t]),
                fmt(running_pos[r][t] / (t + 1)),
                fmt(running_ori[r][t] / (t + 1)),
            )


def _write_estimator_outputs(out_dir: str, record: RunRecord) -> dict:
    """Write beliefs_* and errors_* for one record; returns its metrics."""
    name = record.estimator
    truth = record.trace.truth_array()
    means = record.belief_means()
    covs = record.belief_covariances()
    tables = _error_tables(truth, means, covs)

    def belief_rows():
        for r, b in enumerate(record.initial_beliefs):
            yield 0, r, b
        for t, row in enumerate(record.beliefs):
            for r, b in enumerate(row):
                yield t + 1, r, b

    write_belief_csv(os.path.join(out_dir, f"beliefs_{name}.csv"), belief_rows())
    write_error_csv(os.path.join(out_dir, f"errors_{name}.csv"), _error_rows(tables))
    return _estimator_metrics(tables, record.applied_total, record.rejected_total)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = _resolve_config(args)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    trace = generate_trace(config)
    records = {name: run_estimator(name, config, trace) for name in config.estimators}

    def truth_rows():
        for r, p in enumerate(trace.initial_truth):
            yield 0, r, p
        for t, poses in enumerate(trace.truth):
            for r, p in enumerate(poses):
                yield t + 1, r, p

    write_pose_csv(os.path.join(out_dir, "truth.csv"), truth_rows())
    write_odometry_csv(
        os.path.join(out_dir, "odometry.csv"),
        (
            (t + 1, r, u)
            for t, controls in enumerate(trace.controls)
            for r, u in enumerate(controls)
        ),
    )
    de_record = records.get("de_ekf")
    write_measurement_csv(
        os.path.join(out_dir, "measurements.csv"),
        (
            (m, de_record is not None and (m.observer, m.target) in de_record.used[t])
            for t, step_meas in enumerate(trace.measurements)
            for m in step_meas
        ),
    )
    write_schedule_csv(
        os.path.join(out_dir, "schedule.csv"),
        ((t + 1, schedule) for t, schedule in enumerate(trace.schedules)),
    )

    metrics = {name: _write_estimator_outputs(out_dir, rec) for name, rec in records.items()}
    write_json_atomic(
        os.path.join(out_dir, "metrics.json"),
        {"schema": "cooploc-metrics-v1", "estimators": metrics},
    )

    artifact_names = ["truth.csv", "odometry.csv", "measurements.csv", "schedule.csv", "metrics.json"]
    artifact_names += [f"beliefs_{n}.csv" for n in records]
    artifact_names += [f"errors_{n}.csv" for n in records]
    write_manifest(
        out_dir,
        RunManifest(
            command="simulate",
            seed=config.seed,
            config=config,
            artifacts={n: n for n in sorted(artifact_names)},
            summary={
                name: {"paper_rmse_position_m": m["paper_rmse_position_m"]}
                for name, m in metrics.items()
            },
        ),
    )
    for name in config.estimators:
        print(
            f"{name}: paper-RMSE (mean Euclidean error) "
            f"{metrics[name]['paper_rmse_position_m']:.4f} m over "
            f"{config.n_steps} steps x {config.n_robots} robots"
        )
    print(f"artifacts written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# sweep-dropout
# ---------------------------------------------------------------------------


def _sweep_task(payload):
    config, availability, seed = payload
    cfg = config.with_overrides(
        seed=seed, sensor=replace(config.sensor, availability=availability)
    )
    record = run_estimator("de_ekf", cfg)
    truth = record.trace.truth_array()
    tables = _error_tables(truth, record.belief_means(), record.belief_covariances())
    metrics = _estimator_metrics(tables, record.applied_total, record.rejected_total)
    return (
        availability,
        seed,
        metrics["paper_rmse_position_m"],
        metrics["standard_rmse_position_m"],
        metrics["paper_rmse_orientation_rad"],
        metrics["standard_rmse_orientation_rad"],
        metrics["mean_nees"],
    )


def cmd_sweep_dropout(args) -> int:
    config = _resolve_config(args)
    out_dir = args.out
    fractions = _parse_fractions(args.fractions)
    seeds_per_point = args.seeds_per_point
    if seeds_per_point < 1:
        raise ConfigError("seeds_per_point", f"must be >= 1, got {seeds_per_point}")
    os.makedirs(out_dir, exist_ok=True)

    tasks = [
        (config, fraction, config.seed + i)
        for fraction in fractions
        for i in range(seeds_per_point)
    ]
    jobs = args.jobs if args.jobs else min(os.cpu_count() or 1, 8)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_task, tasks, chunksize=4))
    else:
        results = [_sweep_task(task) for task in tasks]
    results.sort(key=lambda row: (row[0], row[1]))

    write_sweep_runs_csv(
        os.path.join(out_dir, "sweep_runs.csv"),
        (
            (fmt(a), str(s), fmt(p), fmt(sp), fmt(o), fmt(so), fmt(nn))
            for a, s, p, sp, o, so, nn in results
        ),
    )

    summary_rows = []
    summary_json = {}
    for fraction in fractions:
        values = np.array([row[2] for row in results if row[0] == fraction])
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        stderr = std / float(np.sqrt(len(values))) if len(values) > 1 else 0.0
        summary_rows.append((fmt(fraction), str(len(values)), fmt(mean), fmt(std), fmt(stderr)))
        summary_json[fmt(fraction)] = {
            "mean_paper_rmse_position_m": mean,
            "std_paper_rmse_position_m": std,
            "n_seeds": int(len(values)),
        }
    write_sweep_summary_csv(os.path.join(out_dir, "sweep_summary.csv"), summary_rows)

    write_manifest(
        out_dir,
        RunManifest(
            command="sweep-dropout",
            seed=config.seed,
            config=config,
            artifacts={"sweep_runs.csv": "sweep_runs.csv", "sweep_summary.csv": "sweep_summary.csv"},
            summary={
                "fractions": [float(f) for f in fractions],
                "seeds_per_point": seeds_per_point,
                "availability": summary_json,
            },
        ),
    )
    for row in summary_rows:
        print(
            f"availability {row[0]}: paper-RMSE {float(row[2]):.4f} m "
            f"+/- {float(row[3]):.4f} ({row[1]} seeds)"
        )
    print(f"artifacts written to {out_dir}")
    return 0


def _parse_fractions(raw: str) -> list[float]:
    fractions = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            value = float(token)
        except ValueError:
            raise ConfigError("fractions", f"not a number: {token!r}") from None
        if not 0.0 <= value <= 1.0:
            raise ConfigError("fractions", f"must lie in [0, 1], got {value}")
        fractions.append(value)
    if not fractions:
        raise ConfigError("fractions", "at least one fraction is required")
    return fractions


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


def _load_replay_config(path: str) -> ScenarioConfig:
    if path.endswith(".json"):
        import json

        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        data = payload.get("config", payload)
        return config_from_dict(data)
    return load_config(path)


def cmd_replay(args) -> int:
    config = _load_replay_config(args.config)
    if getattr(args, "seed", None) is not None:
        config = config.with_overrides(seed=args.seed)
    if getattr(args, "joseph_form", False):
        config = config.with_overrides(joseph_form=True)
    if getattr(args, "gate", None) is not None:
        config = config.with_overrides(gate_enabled=args.gate == "on")
    validate_config(config)
    result = run_replay(config, args.log)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)

    def belief_rows():
        for r, b in enumerate(result.initial_beliefs):
            yield 0, r, b
        for t, row in enumerate(result.beliefs):
            for r, b in enumerate(row):
                yield t + 1, r, b

    write_belief_csv(os.path.join(out_dir, "beliefs_de_ekf.csv"), belief_rows())
    write_schedule_csv(
        os.path.join(out_dir, "schedule.csv"),
        ((t + 1, s) for t, s in enumerate(result.schedules)),
    )
    write_measurement_csv(
        os.path.join(out_dir, "measurements.csv"),
        (
            (m, (m.observer, m.target) in result.used[step - 1])
            for step in sorted(result.measurements)
            for m in result.measurements[step]
        ),
    )

    artifacts = {
        "beliefs_de_ekf.csv": "beliefs_de_ekf.csv",
        "schedule.csv": "schedule.csv",
        "measurements.csv": "measurements.csv",
    }
    summary: dict = {"n_steps": result.n_steps, "truth_available": result.truth is not None}

    if result.truth is not None:
        steps = [s for s in sorted(result.truth) if 1 <= s <= result.n_steps]
        if len(steps) == result.n_steps:
            truth = np.array(
                [[p.as_array() for p in result.truth[s]] for s in steps]
            )
            means = np.array(
                [[b.mean.as_array() for b in row] for row in result.beliefs]
            )
            covs = np.array([[b.covariance for b in row] for row in result.beliefs])
            tables = _error_tables(truth, means, covs)
            rejected_total = int(sum(result.rejected))
            used_total = int(sum(len(u) for u in result.used))
            metrics = _estimator_metrics(tables, used_total, rejected_total)
            write_error_csv(
                os.path.join(out_dir, "errors_de_ekf.csv"), _error_rows(tables)
            )
            write_json_atomic(
                os.path.join(out_dir, "metrics.json"),
                {"schema": "cooploc-metrics-v1", "estimators": {"de_ekf": metrics}},
            )
            artifacts["errors_de_ekf.csv"] = "errors_de_ekf.csv"
            artifacts["metrics.json"] = "metrics.json"
            summary["de_ekf"] = {
                "paper_rmse_position_m": metrics["paper_rmse_position_m"]
            }

        def truth_rows():
            for s in sorted(result.truth):
                for r, p in enumerate(result.truth[s]):
                    yield s, r, p

        write_pose_csv(os.path.join(out_dir, "truth.csv"), truth_rows())
        artifacts["truth.csv"] = "truth.csv"

    write_manifest(
        out_dir,
        RunManifest(
            command="replay",
            seed=config.seed,
            config=config,
            artifacts=artifacts,
            summary=summary,
        ),
    )
    print(f"replayed {result.n_steps} steps; artifacts written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    config = _resolve_config(args)
    sys.stdout.write(dump_effective_config(config))
    return 0


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def _add_config_arguments(sub, require_out: bool):
    group = sub.add_mutually_exclusive_group(required=False)
    group.add_argument("--config", help="path to a YAML scenario file")
    group.add_argument(
        "--preset", choices=PRESETS, help="bundled scenario matching a reference figure"
    )
    sub.add_argument("--seed", type=int, default=None, help="override the master seed")
    if require_out:
        sub.add_argument("--out", required=True, help="output directory for artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cooploc",
        description="Decentralized EKF cooperative localization: simulate, sweep, replay.",
    )
    parser.add_argument("--version", action="version", version=f"cooploc {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="run a scenario and write CSV artifacts")
    _add_config_arguments(sim, require_out=True)
    sim.add_argument(
        "--estimators",
        help=f"comma-separated subset of {','.join(KNOWN_ESTIMATORS)}",
    )
    sim.add_argument(
        "--joseph-form", action="store_true", help="use the stabilized covariance update"
    )
    sim.add_argument(
        "--gate", choices=("on", "off"), default=None, help="innovation gating"
    )
    sim.set_defaults(func=cmd_simulate)

    sweep = commands.add_parser(
        "sweep-dropout", help="sweep measurement availability over seeds"
    )
    _add_config_arguments(sweep, require_out=True)
    sweep.add_argument(
        "--fractions",
        default=",".join(str(f) for f in DEFAULT_SWEEP_FRACTIONS),
        help="comma-separated availability fractions in [0, 1]",
    )
    sweep.add_argument("--seeds-per-point", type=int, default=20)
    sweep.add_argument("--jobs", type=int, default=0, help="worker processes (0 = auto)")
    sweep.add_argument("--joseph-form", action="store_true")
    sweep.add_argument("--gate", choices=("on", "off"), default=None)
    sweep.set_defaults(func=cmd_sweep_dropout)

    rep = commands.add_parser("replay", help="re-run the filter over a recorded log")
    rep.add_argument("--log", required=True, help="directory with odometry.csv (+ optional measurements.csv, truth.csv)")
    rep.add_argument(
        "--config",
        required=True,
        help="YAML scenario or a manifest.json from a previous run",
    )
    rep.add_argument("--out", required=True)
    rep.add_argument("--seed", type=int, default=None)
    rep.add_argument("--joseph-form", action="store_true")
    rep.add_argument("--gate", choices=("on", "off"), default=None)
    rep.set_defaults(func=cmd_replay)

    val = commands.add_parser("validate", help="validate a config and print it resolved")
    _add_config_arguments(val, require_out=False)
    val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ReplayFormatError as exc:
        print(f"replay log error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except CoopLocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"input not found: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
