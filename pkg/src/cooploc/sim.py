"""Seeded ground-truth world and the estimator runners used for comparisons.

Every stochastic draw comes from a named per-robot, per-purpose stream
derived from the master seed, so changing one scenario knob (say,
measurement availability) never perturbs draws consumed by another purpose
(say, process noise). Runs are bitwise reproducible per seed, and all
estimators given the same seed see the identical world: same initial poses,
same controls, same true trajectories, same measurements.

Runners:

* ``run_dr``: prediction only; the currently stationary robot carries its
  belief over unchanged, moving robots integrate odometry.
* ``run_de_ekf``: the decentralized scheme; after prediction, moving robots
  correct in chain order against the stationary robot and already-corrected
  peers.
* ``run_landmark_ekf``: baseline in which every robot corrects against known
  landmarks (zero landmark uncertainty).
* ``run_centralized_oracle``: joint EKF over the stacked fleet state that
  processes the same measurements the decentralized scheme uses while
  tracking all cross-correlations; small fleets only, intended as a test
  reference rather than a deliverable estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import ProcessNoiseParams, ScenarioConfig, SensorParams
from .coordination import StepSchedule, build_schedule, select_stationary
from .core import Belief, Pose, RobotId, symmetrize, wrap_angle
from .ekf import (
    MAX_CONDITION_NUMBER,
    NeighborObservation,
    _condition_2x2,
    correct_sequential,
    predict_moving,
    predict_stationary,
)
from .errors import DegenerateGeometryError
from .models import (
    Control,
    MotionNoiseParams,
    RelativeMeasurement,
    control_noise_matrix,
    measurement_jacobian_observer,
    measurement_jacobian_target,
    measurement_predict,
    motion_jacobian_control,
    motion_jacobian_state,
    motion_propagate,
)

# Spawn-key purpose tags for the named RNG streams.
STREAM_INIT_TRUTH = 1
STREAM_INIT_BELIEF = 2
STREAM_CONTROL = 3
STREAM_PROCESS = 4
STREAM_SENSE = 5
STREAM_LANDMARK_SENSE = 6

ORACLE_MAX_ROBOTS = 10


def stream(seed: int, purpose: int, *key: int) -> np.random.Generator:
    """Independent generator for one (purpose, index...) stream of a seed."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(purpose, *key))
    )


@dataclass(frozen=True, slots=True)
class WorldState:
    """True poses of the whole fleet at one timestep."""

    truth: tuple[Pose, ...]
    step: int


def step_truth(
    world: WorldState,
    controls: Sequence[Control],
    dt: float,
    motion_noise: MotionNoiseParams,
    extra_noise: ProcessNoiseParams,
    rng_streams: Sequence[np.random.Generator],
    stationary: RobotId | None = None,
) -> WorldState:
    """Advance the true world one step.

    Each moving robot executes its commanded control perturbed by
    control-space noise (the same structure the filter maps through the
    control Jacobian), then receives the optional additive diagonal
    state-space noise, which defaults to zero and exists for stress
    scenarios. The stationary robot is carried over exactly: zero control,
    zero noise injection. Its noise draws are still consumed so per-robot
    streams stay aligned no matter who holds still.
    """
    if len(controls) != len(world.truth):
        raise ValueError(
            f"expected {len(world.truth)} controls, got {len(controls)}"
        )
    new_poses = []
    for i, pose in enumerate(world.truth):
        draw = rng_streams[i].standard_normal(5)
        if i == stationary:
            new_poses.append(pose)
            continue
        executed = Control(
            controls[i].v + motion_noise.sigma_v * draw[0],
            controls[i].omega + motion_noise.sigma_omega * draw[1],
        )
        moved = motion_propagate(pose, executed, dt)
        new_poses.append(
            Pose(
                moved.x + extra_noise.sigma_x * draw[2],
                moved.y + extra_noise.sigma_y * draw[3],
                moved.theta + extra_noise.sigma_theta * draw[4],
            )
        )
    return WorldState(truth=tuple(new_poses), step=world.step + 1)


def sense(
    world: WorldState,
    params: SensorParams,
    rng_streams: Sequence[np.random.Generator],
) -> list[RelativeMeasurement]:
    """Synthesize noisy range-bearing measurements for every ordered pair.

    A pair is emitted when its true range is within reach and an independent
    coin with probability ``availability`` lands heads. The coin and the
    noise draws are consumed for every candidate pair whether or not it is
    emitted, so raising availability only reveals more of the same
    measurements instead of reshuffling them.
    """
    n = len(world.truth)
    out: list[RelativeMeasurement] = []
    for i in range(n):
        rng = rng_streams[i]
        for j in range(n):
            if j == i:
                continue
            coin = rng.random()
            noise = rng.standard_normal(2)
            try:
                true_range, true_bearing = measurement_predict(
                    world.truth[i], world.truth[j]
                )
            except DegenerateGeometryError:
                continue
            if true_range > params.max_range or coin >= params.availability:
                continue
            out.append(
                RelativeMeasurement(
                    observer=i,
                    target=j,
                    range=max(0.0, true_range + params.noise.sigma_range * noise[0]),
                    bearing=wrap_angle(
                        true_bearing + params.noise.sigma_bearing * noise[1]
                    ),
                    step=world.step,
                )
            )
    return out


def sense_landmarks(
    world: WorldState,
    landmarks: Sequence[tuple[float, float]],
    params: SensorParams,
    rng_streams: Sequence[np.random.Generator],
    n_robots: int,
) -> list[RelativeMeasurement]:
    """Noisy range-bearing measurements from each robot to each known landmark.

    Landmark ids continue after the fleet: landmark ``k`` is ``n_robots + k``.
    Same reach/availability/noise treatment as robot-to-robot sensing.
    """
    out: list[RelativeMeasurement] = []
    for i in range(len(world.truth)):
        rng = rng_streams[i]
        for li, (lx, ly) in enumerate(landmarks):
            coin = rng.random()
            noise = rng.standard_normal(2)
            try:
                true_range, true_bearing = measurement_predict(
                    world.truth[i], Pose(lx, ly, 0.0)
                )
            except DegenerateGeometryError:
                continue
            if true_range > params.max_range or coin >= params.availability:
                continue
            out.append(
                RelativeMeasurement(
                    observer=i,
                    target=n_robots + li,
                    range=max(0.0, true_range + params.noise.sigma_range * noise[0]),
                    bearing=wrap_angle(
                        true_bearing + params.noise.sigma_bearing * noise[1]
                    ),
                    step=world.step,
                )
            )
    return out


@dataclass(frozen=True, eq=False, slots=True)
class WorldTrace:
    """One seeded realization of the world, shared by every estimator.

    ``truth[t]``, ``measurements[t]`` and ``schedules[t]`` describe the world
    after action ``t`` (0-based); the recorded step index is ``t + 1`` with
    step 0 reserved for the initial state.
    """

    config: ScenarioConfig
    initial_truth: tuple[Pose, ...]
    truth: tuple[tuple[Pose, ...], ...]
    stationary: tuple[RobotId, ...]
    controls: tuple[tuple[Control, ...], ...]
    measurements: tuple[tuple[RelativeMeasurement, ...], ...]
    schedules: tuple[StepSchedule, ...]

    def truth_array(self) -> np.ndarray:
        """(n_steps, n_robots, 3) array of true poses after each step."""
        return np.array(
            [[p.as_array() for p in poses] for poses in self.truth]
        )


def initial_truth_poses(config: ScenarioConfig) -> tuple[Pose, ...]:
    """Draw (or take from config) the initial true pose of every robot."""
    if config.initial.poses is not None:
        return tuple(Pose(*p) for p in config.initial.poses)
    half = config.initial.arena_half_extent
    poses = []
    for i in range(config.n_robots):
        rng = stream(config.seed, STREAM_INIT_TRUTH, i)
        draw = rng.standard_normal(3)
        x = config.initial.position_scale * draw[0]
        y = config.initial.position_scale * draw[1]
        theta = config.initial.heading_scale * draw[2]
        if config.initial.clamp_to_arena:
            x = min(max(x, -half), half)
            y = min(max(y, -half), half)
        poses.append(Pose(x, y, theta))
    return tuple(poses)


def initial_beliefs(
    config: ScenarioConfig, initial_truth: Sequence[Pose]
) -> tuple[Belief, ...]:
    """Initial belief per robot: true pose plus seeded error, diagonal prior."""
    init = config.initial
    cov = np.diag([init.sigma_x**2, init.sigma_y**2, init.sigma_theta**2])
    out = []
    for i, pose in enumerate(initial_truth):
        rng = stream(config.seed, STREAM_INIT_BELIEF, i)
        draw = rng.standard_normal(3)
        mean = Pose(
            pose.x + init.sigma_x * draw[0],
            pose.y + init.sigma_y * draw[1],
            pose.theta + init.sigma_theta * draw[2],
        )
        out.append(Belief(mean=mean, covariance=cov, robot=i, step=0))
    return tuple(out)


def generate_trace(config: ScenarioConfig) -> WorldTrace:
    """Simulate the true world for a whole run.

    Produces the per-step stationary assignment, executed controls, true
    poses, measurements, and correction schedules. Independent of which
    estimators will consume it.
    """
    fleet = config.fleet()
    noise = config.resolved_process_noise()
    control_rngs = [stream(config.seed, STREAM_CONTROL, i) for i in fleet]
    process_rngs = [stream(config.seed, STREAM_PROCESS, i) for i in fleet]
    sense_rngs = [stream(config.seed, STREAM_SENSE, i) for i in fleet]

    init = initial_truth_poses(config)
    world = WorldState(truth=init, step=0)

    truth_steps: list[tuple[Pose, ...]] = []
    stationary_steps: list[RobotId] = []
    control_steps: list[tuple[Control, ...]] = []
    measurement_steps: list[tuple[RelativeMeasurement, ...]] = []
    schedule_steps: list[StepSchedule] = []

    for t in range(config.n_steps):
        epoch_index = t // config.epoch.epoch_length
        anchor = select_stationary(fleet, epoch_index, config.epoch, config.seed)
        controls = []
        for i in fleet:
            omega = config.control.omega_scale * control_rngs[i].standard_normal()
            if i == anchor:
                controls.append(Control(0.0, 0.0))
            else:
                controls.append(Control(config.control.speed, omega))
        controls = tuple(controls)
        world = step_truth(
            world,
            controls,
            config.dt,
            config.motion_noise,
            noise,
            process_rngs,
            stationary=anchor,
        )
        measurements = tuple(sense(world, config.sensor, sense_rngs))
        schedule = build_schedule(fleet, anchor, list(measurements))

        truth_steps.append(world.truth)
        stationary_steps.append(anchor)
        control_steps.append(controls)
        measurement_steps.append(measurements)
        schedule_steps.append(schedule)

    return WorldTrace(
        config=config,
        initial_truth=init,
        truth=tuple(truth_steps),
        stationary=tuple(stationary_steps),
        controls=tuple(control_steps),
        measurements=tuple(measurement_steps),
        schedules=tuple(schedule_steps),
    )


@dataclass(frozen=True, eq=False, slots=True)
class RunRecord:
    """Everything one estimator produced over one seeded run."""

    estimator: str
    config: ScenarioConfig
    trace: WorldTrace
    initial_beliefs: tuple[Belief, ...]
    beliefs: tuple[tuple[Belief, ...], ...]
    # Inter-robot measurements actually fused, per step, as (observer, target).
    used: tuple[frozenset[tuple[int, int]], ...]
    rejected: tuple[int, ...] = ()
    applied_total: int = 0
    rejected_total: int = 0

    def belief_means(self) -> np.ndarray:
        """(n_steps, n_robots, 3) array of posterior means."""
        return np.array(
            [[b.mean.as_array() for b in row] for row in self.beliefs]
        )

    def belief_covariances(self) -> np.ndarray:
        """(n_steps, n_robots, 3, 3) array of posterior covariances."""
        return np.array([[b.covariance for b in row] for row in self.beliefs])


def _predict_all(
    beliefs: list[Belief],
    anchor: RobotId,
    controls: Sequence[Control],
    config: ScenarioConfig,
) -> list[Belief]:
    out = []
    for i, belief in enumerate(beliefs):
        if i == anchor:
            out.append(predict_stationary(belief))
        else:
            out.append(predict_moving(belief, controls[i], config.dt, config.motion_noise))
    return out


def run_dr(config: ScenarioConfig, trace: WorldTrace | None = None) -> RunRecord:
    """Dead reckoning: odometry integration only, no measurements consumed."""
    if trace is None:
        trace = generate_trace(config)
    init = initial_beliefs(config, trace.initial_truth)
    beliefs = list(init)
    rows = []
    for t in range(config.n_steps):
        beliefs = _predict_all(beliefs, trace.stationary[t], trace.controls[t], config)
        rows.append(tuple(beliefs))
    n = config.n_steps
    return RunRecord(
        estimator="dr",
        config=config,
        trace=trace,
        initial_beliefs=init,
        beliefs=tuple(rows),
        used=tuple(frozenset() for _ in range(n)),
        rejected=tuple(0 for _ in range(n)),
    )


def run_de_ekf(config: ScenarioConfig, trace: WorldTrace | None = None) -> RunRecord:
    """Decentralized EKF: chain corrections outward from the stationary robot."""
    if trace is None:
        trace = generate_trace(config)
    gate = config.gate()
    init = initial_beliefs(config, trace.initial_truth)
    beliefs = list(init)
    rows = []
    used_rows: list[frozenset[tuple[int, int]]] = []
    rejected_rows: list[int] = []
    applied_total = 0
    rejected_total = 0
    for t in range(config.n_steps):
        schedule = trace.schedules[t]
        beliefs = _predict_all(beliefs, schedule.stationary, trace.controls[t], config)
        by_pair = {(m.observer, m.target): m for m in trace.measurements[t]}
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
            applied_total += result.applied
            rejected += result.rejected
            for src, ok in zip(sources, result.outcomes):
                if ok:
                    used.add((robot, src))
        rejected_total += rejected
        rows.append(tuple(beliefs))
        used_rows.append(frozenset(used))
        rejected_rows.append(rejected)
    return RunRecord(
        estimator="de_ekf",
        config=config,
        trace=trace,
        initial_beliefs=init,
        beliefs=tuple(rows),
        used=tuple(used_rows),
        rejected=tuple(rejected_rows),
        applied_total=applied_total,
        rejected_total=rejected_total,
    )


def run_landmark_ekf(
    config: ScenarioConfig, trace: WorldTrace | None = None
) -> RunRecord:
    """Landmark EKF baseline: every robot corrects against known landmarks.

    Landmarks carry zero covariance, so the innovation covariance reduces to
    the robot's own mapped uncertainty plus sensor noise. With an empty
    landmark list this degenerates to dead reckoning exactly.
    """
    if trace is None:
        trace = generate_trace(config)
    gate = config.gate()
    n = config.n_robots
    landmark_rngs = [stream(config.seed, STREAM_LANDMARK_SENSE, i) for i in range(n)]
    zero_cov = np.zeros((3, 3))
    init = initial_beliefs(config, trace.initial_truth)
    beliefs = list(init)
    rows = []
    rejected_rows: list[int] = []
    applied_total = 0
    rejected_total = 0
    for t in range(config.n_steps):
        beliefs = _predict_all(beliefs, trace.stationary[t], trace.controls[t], config)
        world = WorldState(truth=trace.truth[t], step=t + 1)
        landmark_meas = sense_landmarks(
            world, config.landmarks, config.sensor, landmark_rngs, n
        )
        per_robot: dict[int, list[RelativeMeasurement]] = {}
        for m in landmark_meas:
            per_robot.setdefault(m.observer, []).append(m)
        rejected = 0
        for robot in range(n):
            meas_list = per_robot.get(robot, [])
            if not meas_list:
                continue
            observations = [
                NeighborObservation(
                    Belief(
                        mean=Pose(*config.landmarks[m.target - n], 0.0),
                        covariance=zero_cov,
                        robot=m.target,
                        step=t + 1,
                    ),
                    m,
                )
                for m in meas_list
            ]
            result = correct_sequential(
                beliefs[robot],
                observations,
                config.sensor.noise,
                gate_threshold=gate,
                joseph_form=config.joseph_form,
            )
            beliefs[robot] = result.belief
            applied_total += result.applied
            rejected += result.rejected
        rejected_total += rejected
        rows.append(tuple(beliefs))
        rejected_rows.append(rejected)
    return RunRecord(
        estimator="l_ekf",
        config=config,
        trace=trace,
        initial_beliefs=init,
        beliefs=tuple(rows),
        used=tuple(frozenset() for _ in range(config.n_steps)),
        rejected=tuple(rejected_rows),
        applied_total=applied_total,
        rejected_total=rejected_total,
    )


def run_centralized_oracle(
    config: ScenarioConfig, trace: WorldTrace | None = None
) -> RunRecord:
    """Joint EKF over the stacked fleet state; test reference, small N only.

    Processes exactly the measurements the decentralized schedule consumes,
    in the same order, but keeps the full 3N x 3N covariance, so inter-robot
    correlations are tracked instead of dropped. No gating: the oracle is
    the plain Bayesian reference under the same model assumptions.
    """
    if config.n_robots > ORACLE_MAX_ROBOTS:
        raise ValueError(
            f"oracle supports at most {ORACLE_MAX_ROBOTS} robots, got {config.n_robots}"
        )
    if trace is None:
        trace = generate_trace(config)
    n = config.n_robots
    dim = 3 * n
    init = initial_beliefs(config, trace.initial_truth)
    x = np.concatenate([b.mean.as_array() for b in init])
    p = np.zeros((dim, dim))
    for i, b in enumerate(init):
        p[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = b.covariance
    m = control_noise_matrix(config.motion_noise)
    q = config.sensor.noise.matrix()

    rows = []
    for t in range(config.n_steps):
        schedule = trace.schedules[t]
        anchor = schedule.stationary
        g = np.eye(dim)
        noise_add = np.zeros((dim, dim))
        new_x = x.copy()
        for i in range(n):
            sl = slice(3 * i, 3 * i + 3)
            if i == anchor:
                continue
            pose = Pose.from_array(x[sl])
            u = trace.controls[t][i]
            new_x[sl] = motion_propagate(pose, u, config.dt).as_array()
            g[sl, sl] = motion_jacobian_state(pose, u, config.dt)
            v = motion_jacobian_control(pose, u, config.dt)
            noise_add[sl, sl] = v @ m @ v.T
        x = new_x
        p = symmetrize(g @ p @ g.T + noise_add)

        by_pair = {(mm.observer, mm.target): mm for mm in trace.measurements[t]}
        for robot, sources in schedule.correction_order:
            for src in sources:
                meas = by_pair[(robot, src)]
                obs_pose = Pose.from_array(x[3 * robot : 3 * robot + 3])
                tgt_pose = Pose.from_array(x[3 * src : 3 * src + 3])
                try:
                    pred_range, pred_bearing = measurement_predict(obs_pose, tgt_pose)
                except DegenerateGeometryError:
                    continue
                h = np.zeros((2, dim))
                h[:, 3 * robot : 3 * robot + 3] = measurement_jacobian_observer(
                    obs_pose, tgt_pose
                )
                h[:, 3 * src : 3 * src + 3] = measurement_jacobian_target(
                    obs_pose, tgt_pose
                )
                s = h @ p @ h.T + q
                if _condition_2x2(s) >= MAX_CONDITION_NUMBER:
                    continue
                gain = p @ h.T @ np.linalg.inv(s)
                innovation = np.array(
                    [
                        meas.range - pred_range,
                        wrap_angle(meas.bearing - pred_bearing),
                    ]
                )
                x = x + gain @ innovation
                x[2::3] = [wrap_angle(a) for a in x[2::3]]
                p = symmetrize((np.eye(dim) - gain @ h) @ p)
        step_beliefs = tuple(
            Belief(
                mean=Pose.from_array(x[3 * i : 3 * i + 3]),
                covariance=p[3 * i : 3 * i + 3, 3 * i : 3 * i + 3],
                robot=i,
                step=t + 1,
            )
            for i in range(n)
        )
        rows.append(step_beliefs)
    return RunRecord(
        estimator="oracle",
        config=config,
        trace=trace,
        initial_beliefs=init,
        beliefs=tuple(rows),
        used=tuple(frozenset() for _ in range(config.n_steps)),
        rejected=tuple(0 for _ in range(config.n_steps)),
    )


RUNNERS = {
    "dr": run_dr,
    "de_ekf": run_de_ekf,
    "l_ekf": run_landmark_ekf,
}


def run_estimator(
    name: str, config: ScenarioConfig, trace: WorldTrace | None = None
) -> RunRecord:
    """Dispatch one of the deliverable estimators by name."""
    try:
        runner = RUNNERS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}") from None
    return runner(config, trace)
