"""Decentralized EKF core: predict, pairwise correct, sequential fusion.

A moving robot predicts through the motion model with control-space noise
mapped into state space (G S G^T + V M V^T). A stationary robot's belief is
carried over unchanged. Correction fuses one range-bearing observation of a
neighbor whose own uncertainty enters the innovation covariance

    S = H_obs S_obs H_obs^T + H_nbr S_nbr H_nbr^T + Q

so an uncertain neighbor teaches proportionally less. Multi-neighbor fusion
is a sequential fold of the pairwise update under the usual independence
assumption; cross-correlations between robots are deliberately not tracked,
which is a known (and here measured, not hidden) source of optimism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Belief, Pose, angle_diff, symmetrize, validate_covariance
from .errors import DegenerateGeometryError, NumericalFailureError
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

# Reject a pairwise update when the innovation covariance is this badly
# conditioned; the measurement carries no usable information then.
MAX_CONDITION_NUMBER = 1e12

# Chi-square 2-dof upper tail at p ~ 0.001; innovations beyond this gate are
# discarded as inconsistent (stale-chain protection under heavy dropout).
DEFAULT_GATE_THRESHOLD = 13.8

_EYE3 = np.eye(3)


@dataclass(frozen=True, slots=True)
class NeighborObservation:
    """A neighbor's current belief paired with our measurement of it."""

    neighbor_belief: Belief
    measurement: RelativeMeasurement

    def __post_init__(self):
        if self.measurement.target != self.neighbor_belief.robot:
            raise ValueError(
                f"measurement targets robot {self.measurement.target}, "
                f"belief is for robot {self.neighbor_belief.robot}"
            )
        if self.measurement.step != self.neighbor_belief.step:
            raise ValueError(
                f"measurement step {self.measurement.step} != "
                f"neighbor belief step {self.neighbor_belief.step}"
            )


@dataclass(frozen=True, eq=False, slots=True)
class PairCorrection:
    """Result of one pairwise update.

    ``accepted`` is False when the measurement was rejected (ill-conditioned
    innovation covariance or gated innovation); the belief is then the input,
    untouched. ``nis`` is the normalized innovation squared when computable.
    """

    belief: Belief
    accepted: bool
    reason: str | None = None
    nis: float | None = None


@dataclass(frozen=True, eq=False, slots=True)
class SequentialCorrection:
    """Result of folding pairwise updates over an ordered observation list.

    ``outcomes`` holds one accept/reject flag per input observation, in input
    order, so callers can attribute which measurements were actually used.
    """

    belief: Belief
    applied: int
    rejected: int
    outcomes: tuple[bool, ...] = ()


def predict_moving(
    belief: Belief, u: Control, dt: float, noise: MotionNoiseParams
) -> Belief:
    """EKF prediction for a moving robot.

    Mean propagates through the motion model; covariance becomes
    G S G^T + V M V^T, symmetrized. Raises NumericalFailureError if the
    result fails the covariance validity check.
    """
    mean = motion_propagate(belief.mean, u, dt)
    g = motion_jacobian_state(belief.mean, u, dt)
    v = motion_jacobian_control(belief.mean, u, dt)
    m = control_noise_matrix(noise)
    cov = symmetrize(g @ belief.covariance @ g.T + v @ m @ v.T)
    verdict = validate_covariance(cov)
    if not verdict:
        raise NumericalFailureError(
            f"prediction produced invalid covariance: {verdict.reason}",
            matrix=cov,
            step=belief.step + 1,
        )
    return Belief(mean=mean, covariance=cov, robot=belief.robot, step=belief.step + 1)


def predict_stationary(belief: Belief) -> Belief:
    """Prediction for the stationary robot: same mean and covariance, step + 1.

    The covariance buffer is shared, so repeated application is bitwise
    idempotent on (mean, covariance).
    """
    return Belief(
        mean=belief.mean,
        covariance=belief.covariance,
        robot=belief.robot,
        step=belief.step + 1,
    )


def _innovation_terms(
    observer: Belief, target: Belief, q: MeasurementNoiseParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[float, float]]:
    """Jacobians, innovation covariance and predicted measurement for a pair."""
    h_obs = measurement_jacobian_observer(observer.mean, target.mean)
    h_tgt = measurement_jacobian_target(observer.mean, target.mean)
    s = (
        h_obs @ observer.covariance @ h_obs.T
        + h_tgt @ target.covariance @ h_tgt.T
        + q.matrix()
    )
    predicted = measurement_predict(observer.mean, target.mean)
    return h_obs, h_tgt, symmetrize(s), predicted


def innovation_covariance(
    observer: Belief, target: Belief, q: MeasurementNoiseParams
) -> np.ndarray:
    """2x2 innovation covariance for the observer measuring the target.

    Sums the observer's and the target's uncertainties mapped into
    measurement space plus the sensor noise. Raises NumericalFailureError if
    the result is not invertible to working precision.
    """
    _, _, s, _ = _innovation_terms(observer, target, q)
    if _condition_2x2(s) >= MAX_CONDITION_NUMBER:
        raise NumericalFailureError(
            "innovation covariance is singular to working precision",
            matrix=s,
            step=observer.step,
        )
    return s


def _condition_2x2(s: np.ndarray) -> float:
    """Spectral condition number of a symmetric 2x2 matrix, inf if singular."""
    half_trace = 0.5 * (s[0, 0] + s[1, 1])
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    disc = max(half_trace * half_trace - det, 0.0)
    root = math.sqrt(disc)
    lo, hi = half_trace - root, half_trace + root
    if lo <= 0.0:
        return math.inf
    return hi / lo


def correct_pair(
    observer: Belief,
    neighbor: NeighborObservation,
    q: MeasurementNoiseParams,
    *,
    gate_threshold: float | None = None,
    joseph_form: bool = False,
) -> PairCorrection:
    """Fuse one neighbor observation into the observer's belief.

    The bearing innovation is computed with wrapped angle difference, the
    Kalman gain is S_obs H_obs^T S^-1, and the covariance update is
    (I - K H) S_obs (or the Joseph stabilized form when requested). A
    measurement with an ill-conditioned innovation covariance, or one failing
    the optional Mahalanobis gate, is rejected: the input belief is returned
    with ``accepted=False``.
    """
    meas = neighbor.measurement
    if observer.step != meas.step:
        raise ValueError(
            f"observer belief is at step {observer.step}, measurement at {meas.step}"
        )
    if meas.observer != observer.robot:
        raise ValueError(
            f"measurement was taken by robot {meas.observer}, "
            f"belief belongs to robot {observer.robot}"
        )

    h_obs, h_tgt, s, (pred_range, pred_bearing) = _innovation_terms(
        observer, neighbor.neighbor_belief, q
    )
    if _condition_2x2(s) >= MAX_CONDITION_NUMBER:
        return PairCorrection(observer, accepted=False, reason="ill-conditioned")

    innovation = np.array(
        [meas.range - pred_range, angle_diff(meas.bearing, pred_bearing)]
    )
    s_inv = np.linalg.inv(s)
    nis = float(innovation @ s_inv @ innovation)
    if gate_threshold is not None and nis > gate_threshold:
        return PairCorrection(observer, accepted=False, reason="gated", nis=nis)

    gain = observer.covariance @ h_obs.T @ s_inv
    delta = gain @ innovation
    mean = Pose(
        observer.mean.x + delta[0],
        observer.mean.y + delta[1],
        observer.mean.theta + delta[2],
    )
    i_kh = _EYE3 - gain @ h_obs
    if joseph_form:
        # Effective measurement noise includes the neighbor's mapped
        # uncertainty; keeps the stabilized form consistent with S.
        r_eff = h_tgt @ neighbor.neighbor_belief.covariance @ h_tgt.T + q.matrix()
        cov = i_kh @ observer.covariance @ i_kh.T + gain @ r_eff @ gain.T
    else:
        cov = i_kh @ observer.covariance
    cov = symmetrize(cov)
    verdict = validate_covariance(cov)
    if not verdict:
        raise NumericalFailureError(
            f"correction produced invalid covariance: {verdict.reason}",
            matrix=cov,
            step=observer.step,
        )
    corrected = Belief(mean=mean, covariance=cov, robot=observer.robot, step=observer.step)
    return PairCorrection(corrected, accepted=True, nis=nis)


def correct_sequential(
    observer: Belief,
    observations: list[NeighborObservation],
    q: MeasurementNoiseParams,
    *,
    gate_threshold: float | None = None,
    joseph_form: bool = False,
) -> SequentialCorrection:
    """Fold pairwise corrections over the observations in the given order.

    An empty list returns the input belief unchanged (the pure dead-reckoning
    step under total measurement dropout). Rejected measurements are skipped,
    not fatal; a degenerate-geometry observation (coincident estimated
    positions) counts as rejected too.
    """
    belief = observer
    applied = 0
    rejected = 0
    outcomes: list[bool] = []
    for obs in observations:
        try:
            result = correct_pair(
                belief, obs, q, gate_threshold=gate_threshold, joseph_form=joseph_form
            )
        except DegenerateGeometryError:
            rejected += 1
            outcomes.append(False)
            continue
        if result.accepted:
            belief = result.belief
            applied += 1
        else:
            rejected += 1
        outcomes.append(result.accepted)
    return SequentialCorrection(
        belief=belief, applied=applied, rejected=rejected, outcomes=tuple(outcomes)
    )
