"""Unicycle motion model and range-bearing measurement model with Jacobians.

The motion model is the constant-(v, omega) circular arc

    x' = x - (v/w) sin(theta) + (v/w) sin(theta + w dt)
    y' = y + (v/w) cos(theta) - (v/w) cos(theta + w dt)
    theta' = theta + w dt

which divides by omega. Below ``OMEGA_EPSILON`` the exact straight-line limit
is used instead (the heading row has no singularity and keeps its w*dt
advance). The measurement model is Euclidean range plus bearing relative to
the observer heading. All four Jacobians are analytic; tests pin them to
central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Pose, RobotId, wrap_angle
from .errors import DegenerateGeometryError

# Below this |omega| the arc formulas lose precision to cancellation; the
# straight-line limit is exact and keeps the branch switch continuous.
OMEGA_EPSILON = 1e-6

# Robots closer than this have no defined range-bearing geometry.
RANGE_EPSILON = 1e-9


@dataclass(frozen=True, slots=True)
class Control:
    """Commanded translational and rotational velocity."""

    v: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.omega)):
            raise ValueError(f"control must be finite, got ({self.v}, {self.omega})")


@dataclass(frozen=True, slots=True)
class MotionNoiseParams:
    """Standard deviations of control-space noise (v in m/s, omega in rad/s)."""

    sigma_v: float
    sigma_omega: float

    def __post_init__(self):
        if self.sigma_v < 0 or self.sigma_omega < 0:
            raise ValueError("noise sigmas must be non-negative")


@dataclass(frozen=True, slots=True)
class MeasurementNoiseParams:
    """Standard deviations of range (m) and bearing (rad) sensor noise."""

    sigma_range: float
    sigma_bearing: float

    def __post_init__(self):
        if self.sigma_range < 0 or self.sigma_bearing < 0:
            raise ValueError("noise sigmas must be non-negative")

    def matrix(self) -> np.ndarray:
        """2x2 measurement noise covariance diag(sigma_r^2, sigma_phi^2)."""
        return np.diag([self.sigma_range**2, self.sigma_bearing**2])


@dataclass(frozen=True, slots=True)
class RelativeMeasurement:
    """Range and bearing from an observer robot to a target robot.

    The bearing is wrapped to (-pi, pi] on construction. ``step`` indexes the
    timestep at which the observation was taken.
    """

    observer: RobotId
    target: RobotId
    range: float
    bearing: float
    step: int

    def __post_init__(self):
        if self.observer == self.target:
            raise ValueError(f"observer and target must differ, both are {self.observer}")
        if not math.isfinite(self.range) or self.range < 0:
            raise ValueError(f"range must be finite and non-negative, got {self.range}")
        object.__setattr__(self, "bearing", wrap_angle(self.bearing))


def motion_propagate(pose: Pose, u: Control, dt: float) -> Pose:
    """Propagate a pose one step under constant (v, omega).

    Uses the exact circular arc for |omega| >= OMEGA_EPSILON and the exact
    straight-line limit below it. The arc is evaluated in chord form,
    chord = 2 (v/w) sin(w dt / 2) along heading theta + w dt / 2, which is
    algebraically identical to the usual sine-difference form but free of
    its cancellation at small w. Output heading is wrapped.
    """
    _check_dt(dt)
    v, w = u.v, u.omega
    theta = pose.theta
    if abs(w) < OMEGA_EPSILON:
        x = pose.x + v * dt * math.cos(theta)
        y = pose.y + v * dt * math.sin(theta)
    else:
        half = 0.5 * w * dt
        chord = 2.0 * (v / w) * math.sin(half)
        mid = theta + half
        x = pose.x + chord * math.cos(mid)
        y = pose.y + chord * math.sin(mid)
    return Pose(x, y, theta + w * dt)


def motion_jacobian_state(pose: Pose, u: Control, dt: float) -> np.ndarray:
    """3x3 Jacobian of the motion model with respect to the pose."""
    _check_dt(dt)
    v, w = u.v, u.omega
    theta = pose.theta
    if abs(w) < OMEGA_EPSILON:
        dx_dtheta = -v * dt * math.sin(theta)
        dy_dtheta = v * dt * math.cos(theta)
    else:
        half = 0.5 * w * dt
        chord = 2.0 * (v / w) * math.sin(half)
        mid = theta + half
        dx_dtheta = -chord * math.sin(mid)
        dy_dtheta = chord * math.cos(mid)
    return np.array(
        [
            [1.0, 0.0, dx_dtheta],
            [0.0, 1.0, dy_dtheta],
            [0.0, 0.0, 1.0],
        ]
    )


def motion_jacobian_control(pose: Pose, u: Control, dt: float) -> np.ndarray:
    """3x2 Jacobian of the motion model with respect to (v, omega).

    Below OMEGA_EPSILON the columns are the analytic omega -> 0 limits of
    the arc derivatives.
    """
    _check_dt(dt)
    v, w = u.v, u.omega
    theta = pose.theta
    if abs(w) < OMEGA_EPSILON:
        dx_dv = dt * math.cos(theta)
        dy_dv = dt * math.sin(theta)
        dx_dw = -0.5 * v * dt * dt * math.sin(theta)
        dy_dw = 0.5 * v * dt * dt * math.cos(theta)
    else:
        half = 0.5 * w * dt
        mid = theta + half
        sin_mid, cos_mid = math.sin(mid), math.cos(mid)
        # chord / v, well defined for v = 0
        stretch = 2.0 * math.sin(half) / w
        dx_dv = stretch * cos_mid
        dy_dv = stretch * sin_mid
        radial = (v / w) * (dt * math.cos(half) - stretch)
        dx_dw = radial * cos_mid - 0.5 * v * dt * stretch * sin_mid
        dy_dw = radial * sin_mid + 0.5 * v * dt * stretch * cos_mid
    return np.array(
        [
            [dx_dv, dx_dw],
            [dy_dv, dy_dw],
            [0.0, dt],
        ]
    )


def control_noise_matrix(params: MotionNoiseParams) -> np.ndarray:
    """2x2 control-space noise covariance diag(sigma_v^2, sigma_omega^2)."""
    return np.diag([params.sigma_v**2, params.sigma_omega**2])


def measurement_predict(observer: Pose, target: Pose) -> tuple[float, float]:
    """Predicted (range, bearing) from the observer to the target.

    Raises DegenerateGeometryError when the two positions are closer than
    RANGE_EPSILON; callers skip such a measurement.
    """
    dx = target.x - observer.x
    dy = target.y - observer.y
    rng = math.hypot(dx, dy)
    if rng <= RANGE_EPSILON:
        raise DegenerateGeometryError(
            f"robots are {rng:.3e} m apart; range-bearing undefined"
        )
    bearing = wrap_angle(math.atan2(dy, dx) - observer.theta)
    return rng, bearing


def _relative_geometry(observer: Pose, target: Pose) -> tuple[float, float, float]:
    dx = target.x - observer.x
    dy = target.y - observer.y
    q = dx * dx + dy * dy
    if q <= RANGE_EPSILON * RANGE_EPSILON:
        raise DegenerateGeometryError(
            f"robots are {math.sqrt(q):.3e} m apart; range-bearing undefined"
        )
    return dx, dy, q


def measurement_jacobian_observer(observer: Pose, target: Pose) -> np.ndarray:
    """2x3 Jacobian of (range, bearing) with respect to the observer pose."""
    dx, dy, q = _relative_geometry(observer, target)
    r = math.sqrt(q)
    return np.array(
        [
            [-dx / r, -dy / r, 0.0],
            [dy / q, -dx / q, -1.0],
        ]
    )


def measurement_jacobian_target(observer: Pose, target: Pose) -> np.ndarray:
    """2x3 Jacobian of (range, bearing) with respect to the target pose.

    The heading column is identically zero: the observation does not depend
    on where the target is facing.
    """
    dx, dy, q = _relative_geometry(observer, target)
    r = math.sqrt(q)
    return np.array(
        [
            [dx / r, dy / r, 0.0],
            [-dy / q, dx / q, 0.0],
        ]
    )


def _check_dt(dt: float) -> None:
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive and finite, got {dt}")
