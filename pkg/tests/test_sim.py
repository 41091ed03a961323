import math
from dataclasses import replace

import numpy as np
import pytest

from cooploc.config import (
    InitialConditions,
    ProcessNoiseParams,
    ScenarioConfig,
    SensorParams,
)
from cooploc.coordination import EpochPolicy
from cooploc.core import Pose
from cooploc.models import Control, MeasurementNoiseParams, MotionNoiseParams
from cooploc.sim import (
    STREAM_PROCESS,
    WorldState,
    generate_trace,
    initial_truth_poses,
    run_centralized_oracle,
    run_de_ekf,
    run_dr,
    run_landmark_ekf,
    sense,
    step_truth,
    stream,
)

NO_NOISE = MotionNoiseParams(0.0, 0.0)
NO_EXTRA = ProcessNoiseParams()


def quiet_config(**kwargs) -> ScenarioConfig:
    """Small deterministic scenario used across these tests."""
    defaults = dict(n_robots=4, n_steps=50, seed=7)
    defaults.update(kwargs)
    return ScenarioConfig(**defaults)


def beliefs_equal(a, b) -> bool:
    for row_a, row_b in zip(a.beliefs, b.beliefs):
        for ba, bb in zip(row_a, row_b):
            if ba.mean != bb.mean or not np.array_equal(ba.covariance, bb.covariance):
                return False
    return True


def mean_position_error(record) -> float:
    truth = record.trace.truth_array()
    means = record.belief_means()
    return float(np.linalg.norm(truth[:, :, :2] - means[:, :, :2], axis=2).mean())


class TestStepTruth:
    def test_zero_everything_is_identity(self):
        world = WorldState((Pose(1, 2, 0.5), Pose(-1, 0, 1.0)), step=3)
        rngs = [stream(0, STREAM_PROCESS, i) for i in range(2)]
        out = step_truth(
            world, [Control(0, 0), Control(0, 0)], 0.05, NO_NOISE, NO_EXTRA, rngs
        )
        assert out.truth == world.truth
        assert out.step == 4

    def test_stationary_robot_exactly_fixed(self):
        world = WorldState((Pose(1, 2, 0.5), Pose(-1, 0, 1.0)), step=0)
        rngs = [stream(0, STREAM_PROCESS, i) for i in range(2)]
        out = step_truth(
            world,
            [Control(0, 0), Control(0.2, 0.1)],
            0.05,
            MotionNoiseParams(0.4, 0.25),
            NO_EXTRA,
            rngs,
            stationary=0,
        )
        assert out.truth[0] == world.truth[0]
        assert out.truth[1] != world.truth[1]

    def test_path_length_ten_meters(self):
        world = WorldState((Pose(0, 0, 0),), step=0)
        rngs = [stream(0, STREAM_PROCESS, 0)]
        for _ in range(1000):
            world = step_truth(world, [Control(0.2, 0.0)], 0.05, NO_NOISE, NO_EXTRA, rngs)
        assert world.truth[0].x == pytest.approx(10.0, abs=1e-9)
        assert world.truth[0].y == 0.0

    def test_wrong_control_count_rejected(self):
        world = WorldState((Pose(0, 0, 0),), step=0)
        with pytest.raises(ValueError):
            step_truth(world, [], 0.05, NO_NOISE, NO_EXTRA, [])

    def test_extra_state_noise_applied(self):
        world = WorldState((Pose(0, 0, 0),), step=0)
        rngs = [stream(3, STREAM_PROCESS, 0)]
        out = step_truth(
            world,
            [Control(0, 0)],
            0.05,
            NO_NOISE,
            ProcessNoiseParams(0.1, 0.1, 0.1),
            rngs,
        )
        assert out.truth[0] != world.truth[0]


class TestSense:
    def test_availability_zero_empty(self):
        config = quiet_config(sensor=SensorParams(availability=0.0))
        trace = generate_trace(config)
        assert all(len(step) == 0 for step in trace.measurements)

    def test_full_availability_all_ordered_pairs(self):
        config = quiet_config(
            n_robots=5, n_steps=10, sensor=SensorParams(availability=1.0)
        )
        trace = generate_trace(config)
        assert all(len(step) == 20 for step in trace.measurements)

    def test_noise_statistics_match_sigmas(self):
        # Monte-Carlo oracle: empirical std of (measured - true) within 3%
        # of the configured 0.01 over 1e5 samples.
        world = WorldState((Pose(0, 0, 0), Pose(4, 1, 0.3)), step=1)
        params = SensorParams(noise=MeasurementNoiseParams(0.01, 0.01))
        rngs = [stream(1234, 60, i) for i in range(2)]
        range_errors = []
        bearing_errors = []
        true_r = math.hypot(4.0, 1.0)
        true_b = math.atan2(1.0, 4.0)
        for _ in range(25_000):
            for m in sense(world, params, rngs):
                if m.observer == 0:
                    range_errors.append(m.range - true_r)
                    bearing_errors.append(m.bearing - true_b)
        assert len(range_errors) == 25_000
        assert np.std(range_errors) == pytest.approx(0.01, rel=0.03)
        assert np.std(bearing_errors) == pytest.approx(0.01, rel=0.03)

    def test_bearings_always_wrapped(self):
        config = quiet_config(n_steps=200)
        trace = generate_trace(config)
        for step in trace.measurements:
            for m in step:
                assert -math.pi < m.bearing <= math.pi

    @pytest.mark.parametrize("availability", [0.2, 0.5, 0.9])
    def test_counts_within_binomial_bounds(self, availability):
        config = quiet_config(
            n_robots=5,
            n_steps=1000,
            sensor=SensorParams(availability=availability),
        )
        trace = generate_trace(config)
        total = sum(len(step) for step in trace.measurements)
        trials = 1000 * 20
        expected = trials * availability
        margin = 3 * math.sqrt(trials * availability * (1 - availability))
        assert abs(total - expected) <= margin

    def test_max_range_filters_pairs(self):
        world = WorldState((Pose(0, 0, 0), Pose(3, 0, 0), Pose(10, 0, 0)), step=1)
        params = SensorParams(max_range=5.0, availability=1.0)
        rngs = [stream(5, 61, i) for i in range(3)]
        pairs = {(m.observer, m.target) for m in sense(world, params, rngs)}
        assert (0, 1) in pairs and (1, 0) in pairs
        assert (0, 2) not in pairs and (2, 0) not in pairs
        assert (1, 2) not in pairs  # 7 m apart

    def test_higher_availability_reveals_superset(self):
        base = quiet_config(n_steps=40)
        low = generate_trace(
            base.with_overrides(sensor=replace(base.sensor, availability=0.3))
        )
        high = generate_trace(
            base.with_overrides(sensor=replace(base.sensor, availability=0.8))
        )
        for lo_step, hi_step in zip(low.measurements, high.measurements):
            lo = {(m.observer, m.target): (m.range, m.bearing) for m in lo_step}
            hi = {(m.observer, m.target): (m.range, m.bearing) for m in hi_step}
            assert set(lo).issubset(set(hi))
            for key, value in lo.items():
                assert hi[key] == value


class TestTraceGeneration:
    def test_bitwise_reproducible(self):
        config = quiet_config(n_steps=100)
        a = generate_trace(config)
        b = generate_trace(config)
        assert a.initial_truth == b.initial_truth
        assert a.truth == b.truth
        assert a.controls == b.controls
        assert a.stationary == b.stationary
        assert [
            [(m.observer, m.target, m.range, m.bearing) for m in step]
            for step in a.measurements
        ] == [
            [(m.observer, m.target, m.range, m.bearing) for m in step]
            for step in b.measurements
        ]

    def test_availability_does_not_perturb_truth(self):
        base = quiet_config(n_steps=80)
        a = generate_trace(base.with_overrides(sensor=replace(base.sensor, availability=0.2)))
        b = generate_trace(base.with_overrides(sensor=replace(base.sensor, availability=0.9)))
        assert a.truth == b.truth
        assert a.controls == b.controls

    def test_stationary_truth_fixed_through_epochs(self):
        config = quiet_config(n_steps=200, epoch=EpochPolicy(epoch_length=20))
        trace = generate_trace(config)
        previous = trace.initial_truth
        for t in range(config.n_steps):
            anchor = trace.stationary[t]
            assert trace.truth[t][anchor] == previous[anchor]
            previous = trace.truth[t]

    def test_initial_poses_clamped_to_arena(self):
        config = quiet_config(n_robots=12, seed=3)
        for pose in initial_truth_poses(config):
            assert abs(pose.x) <= 5.0
            assert abs(pose.y) <= 5.0

    def test_explicit_initial_poses_respected(self):
        config = quiet_config(
            n_robots=2,
            initial=InitialConditions(poses=((0.0, 0.0, 0.0), (1.0, 1.0, 0.5))),
        )
        poses = initial_truth_poses(config)
        assert poses == (Pose(0, 0, 0), Pose(1, 1, 0.5))

    def test_schedules_satisfy_invariants_over_run(self):
        config = quiet_config(n_robots=5, n_steps=300, sensor=SensorParams(availability=0.4))
        trace = generate_trace(config)
        fleet = config.fleet()
        for t, schedule in enumerate(trace.schedules):
            schedule.validate(fleet)
            assert schedule.belief_transfers() <= len(trace.measurements[t])


class TestRunDr:
    def test_zero_noise_tracks_exactly(self):
        config = quiet_config(
            motion_noise=NO_NOISE,
            initial=InitialConditions(sigma_x=0, sigma_y=0, sigma_theta=0),
        )
        record = run_dr(config)
        truth = record.trace.truth_array()
        means = record.belief_means()
        np.testing.assert_array_equal(truth, means)

    def test_error_grows_over_seeds(self):
        # Random-walk variance growth: averaged over 20 seeds the mean
        # position error increases with time.
        checkpoints = [49, 99, 199]
        sums = {c: 0.0 for c in checkpoints}
        for seed in range(20):
            record = run_dr(quiet_config(n_steps=200, seed=seed))
            truth = record.trace.truth_array()
            means = record.belief_means()
            err = np.linalg.norm(truth[:, :, :2] - means[:, :, :2], axis=2).mean(axis=1)
            for c in checkpoints:
                sums[c] += err[c]
        assert sums[49] < sums[99] < sums[199]

    def test_consumes_no_measurements(self):
        record = run_dr(quiet_config())
        assert all(len(u) == 0 for u in record.used)
        assert record.applied_total == 0


class TestRunDeEkf:
    def test_availability_zero_equals_dr_bitwise(self):
        config = quiet_config(sensor=SensorParams(availability=0.0))
        trace = generate_trace(config)
        de = run_de_ekf(config, trace)
        dr = run_dr(config, trace)
        assert beliefs_equal(de, dr)

    def test_same_seed_bitwise_identical(self):
        config = quiet_config()
        assert beliefs_equal(run_de_ekf(config), run_de_ekf(config))

    def test_used_measurements_follow_schedule(self):
        config = quiet_config()
        record = run_de_ekf(config)
        for t, used in enumerate(record.used):
            schedule = record.trace.schedules[t]
            allowed = {
                (robot, src)
                for robot, sources in schedule.correction_order
                for src in sources
            }
            assert used.issubset(allowed)

    def test_beats_dead_reckoning_at_scale(self):
        de_errors = []
        dr_errors = []
        for seed in range(5):
            config = quiet_config(n_robots=5, n_steps=400, seed=seed)
            trace = generate_trace(config)
            de_errors.append(mean_position_error(run_de_ekf(config, trace)))
            dr_errors.append(mean_position_error(run_dr(config, trace)))
        assert np.mean(de_errors) < np.mean(dr_errors)


class TestRunLandmarkEkf:
    def test_no_landmarks_degenerates_to_dr(self):
        config = quiet_config(landmarks=())
        trace = generate_trace(config)
        lekf = run_landmark_ekf(config, trace)
        dr = run_dr(config, trace)
        assert beliefs_equal(lekf, dr)

    def test_beats_decentralized_on_average(self):
        l_errors, de_errors = [], []
        for seed in range(5):
            config = quiet_config(n_robots=5, n_steps=400, seed=seed)
            trace = generate_trace(config)
            l_errors.append(mean_position_error(run_landmark_ekf(config, trace)))
            de_errors.append(mean_position_error(run_de_ekf(config, trace)))
        assert np.mean(l_errors) <= np.mean(de_errors)


class TestCentralizedOracle:
    def test_single_robot_is_pure_prediction(self):
        # A lone robot is always the stationary pick, so nothing ever moves
        # and both filters carry the initial belief through unchanged.
        config = quiet_config(n_robots=1)
        trace = generate_trace(config)
        oracle = run_centralized_oracle(config, trace)
        dr = run_dr(config, trace)
        assert beliefs_equal(oracle, dr)

    def test_zero_noise_everywhere_tracks_exactly(self):
        config = quiet_config(
            n_robots=3,
            motion_noise=NO_NOISE,
            initial=InitialConditions(sigma_x=0, sigma_y=0, sigma_theta=0),
            sensor=SensorParams(
                availability=1.0, noise=MeasurementNoiseParams(0.0, 0.0)
            ),
        )
        record = run_centralized_oracle(config)
        truth = record.trace.truth_array()
        means = record.belief_means()
        np.testing.assert_allclose(means, truth, atol=1e-9)

    def test_oracle_not_worse_than_decentralized(self):
        oracle_errors, de_errors = [], []
        for seed in range(20):
            config = quiet_config(n_robots=3, n_steps=200, seed=seed)
            trace = generate_trace(config)
            oracle_errors.append(mean_position_error(run_centralized_oracle(config, trace)))
            de_errors.append(mean_position_error(run_de_ekf(config, trace)))
        assert np.mean(oracle_errors) <= np.mean(de_errors)

    def test_large_fleet_rejected(self):
        with pytest.raises(ValueError):
            run_centralized_oracle(quiet_config(n_robots=11))
