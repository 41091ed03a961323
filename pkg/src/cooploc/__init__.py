"""Decentralized EKF cooperative localization.

A fleet of planar robots corrects odometric drift by letting one robot per
epoch hold still as a temporary landmark while the others fuse range-bearing
observations chained outward from it. The package bundles the filter, the
coordination protocol, a seeded simulator with dead-reckoning / known-
landmark / centralized-joint baselines, accuracy metrics, and a CLI that
emits deterministic CSV artifacts.
"""

__version__ = "0.1.0"

from .config import ScenarioConfig, SensorParams, load_config
from .coordination import EpochPolicy, StepSchedule, build_schedule, plan_step, select_stationary
from .core import Belief, Pose, RobotId, angle_diff, validate_covariance, wrap_angle
from .ekf import (
    NeighborObservation,
    correct_pair,
    correct_sequential,
    innovation_covariance,
    predict_moving,
    predict_stationary,
)
from .errors import (
    ConfigError,
    CoopLocError,
    DegenerateGeometryError,
    NumericalFailureError,
    ReplayFormatError,
)
from .metrics import nees, orientation_rmse, paper_rmse, standard_rmse
from .models import (
    Control,
    MeasurementNoiseParams,
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
from .sim import (
    RunRecord,
    WorldState,
    generate_trace,
    run_centralized_oracle,
    run_de_ekf,
    run_dr,
    run_landmark_ekf,
    sense,
    step_truth,
)

__all__ = [
    "__version__",
    "Belief",
    "ConfigError",
    "Control",
    "CoopLocError",
    "DegenerateGeometryError",
    "EpochPolicy",
    "MeasurementNoiseParams",
    "MotionNoiseParams",
    "NeighborObservation",
    "NumericalFailureError",
    "Pose",
    "RelativeMeasurement",
    "ReplayFormatError",
    "RobotId",
    "RunRecord",
    "ScenarioConfig",
    "SensorParams",
    "StepSchedule",
    "WorldState",
    "angle_diff",
    "build_schedule",
    "control_noise_matrix",
    "correct_pair",
    "correct_sequential",
    "generate_trace",
    "innovation_covariance",
    "load_config",
    "measurement_jacobian_observer",
    "measurement_jacobian_target",
    "measurement_predict",
    "metrics",
    "motion_jacobian_control",
    "motion_jacobian_state",
    "motion_propagate",
    "nees",
    "orientation_rmse",
    "paper_rmse",
    "plan_step",
    "predict_moving",
    "predict_stationary",
    "run_centralized_oracle",
    "run_de_ekf",
    "run_dr",
    "run_landmark_ekf",
    "select_stationary",
    "sense",
    "standard_rmse",
    "step_truth",
    "validate_covariance",
    "wrap_angle",
]
