"""Accuracy and consistency metrics.

Two position aggregates are provided because the literature's naming is
slippery: ``paper_rmse`` is the mean of per-step Euclidean position errors
(a mean absolute error despite the RMSE name it usually travels under), and
``standard_rmse`` is the textbook root-mean-square. They agree on constant
error series and otherwise standard >= paper by Jensen's inequality. All
comparison outputs report the mean-Euclidean variant and label it as such;
the square-root variant rides along for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Belief, Pose
from .errors import NumericalFailureError

TWO_PI = 2.0 * np.pi


def _position_errors(truth, est) -> np.ndarray:
    t = np.asarray(truth, dtype=float)
    e = np.asarray(est, dtype=float)
    if t.ndim != 2 or e.ndim != 2 or t.shape[0] != e.shape[0]:
        raise ValueError(f"series shapes disagree: {t.shape} vs {e.shape}")
    if t.shape[0] == 0:
        raise ValueError("series must contain at least one step")
    return np.linalg.norm(t[:, :2] - e[:, :2], axis=1)


def paper_rmse(truth, est) -> float:
    """Mean Euclidean position error over the series, in meters."""
    return float(np.mean(_position_errors(truth, est)))


def standard_rmse(truth, est) -> float:
    """Root of the mean squared position error over the series, in meters."""
    return float(np.sqrt(np.mean(_position_errors(truth, est) ** 2)))


def wrap_angles(values: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]; same convention as core.wrap_angle."""
    wrapped = np.asarray(values, dtype=float) % TWO_PI
    return np.where(wrapped > np.pi, wrapped - TWO_PI, wrapped)


def _orientation_errors(truth_theta, est_theta) -> np.ndarray:
    t = np.asarray(truth_theta, dtype=float).ravel()
    e = np.asarray(est_theta, dtype=float).ravel()
    if t.shape != e.shape:
        raise ValueError(f"series shapes disagree: {t.shape} vs {e.shape}")
    if t.size == 0:
        raise ValueError("series must contain at least one step")
    return np.abs(wrap_angles(t - e))


def orientation_rmse(truth_theta, est_theta, formula: str = "paper") -> float:
    """Aggregate wrapped heading errors, in radians.

    ``formula='paper'`` takes the mean absolute error, ``'standard'`` the
    root mean square; both see the same wrapped per-step errors in [0, pi].
    """
    errors = _orientation_errors(truth_theta, est_theta)
    if formula == "paper":
        return float(np.mean(errors))
    if formula == "standard":
        return float(np.sqrt(np.mean(errors**2)))
    raise ValueError(f"formula must be 'paper' or 'standard', got {formula!r}")


def nees(truth: Pose, belief: Belief) -> float:
    """Normalized estimation error squared: e^T Cov^-1 e for the 3-dof error.

    The heading component of the error is wrapped. A consistent estimator
    has long-run mean about 3; values persistently above that signal an
    overconfident filter.
    """
    error = np.array(
        [
            truth.x - belief.mean.x,
            truth.y - belief.mean.y,
            float(wrap_angles(truth.theta - belief.mean.theta)),
        ]
    )
    try:
        solved = np.linalg.solve(belief.covariance, error)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(
            "covariance is singular, NEES undefined",
            matrix=belief.covariance,
            step=belief.step,
        ) from exc
    return float(error @ solved)


@dataclass(frozen=True, eq=False, slots=True)
class ErrorSeries:
    """Per-step error diagnostics for one robot's estimate against truth."""

    position_error: np.ndarray
    orientation_error: np.ndarray
    nees: np.ndarray

    def __post_init__(self):
        n = len(self.position_error)
        if len(self.orientation_error) != n or len(self.nees) != n:
            raise ValueError("error series lengths disagree")


def error_series(truth_poses, means, covariances) -> ErrorSeries:
    """Build an ErrorSeries from (n, 3) truth/mean arrays and (n, 3, 3) covs."""
    t = np.asarray(truth_poses, dtype=float)
    m = np.asarray(means, dtype=float)
    c = np.asarray(covariances, dtype=float)
    position = np.linalg.norm(t[:, :2] - m[:, :2], axis=1)
    orientation = np.abs(wrap_angles(t[:, 2] - m[:, 2]))
    errors = np.stack(
        [t[:, 0] - m[:, 0], t[:, 1] - m[:, 1], wrap_angles(t[:, 2] - m[:, 2])], axis=1
    )
    try:
        solved = np.linalg.solve(c, errors[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("singular covariance in NEES series") from exc
    nees_values = np.einsum("ij,ij->i", errors, solved)
    return ErrorSeries(
        position_error=position, orientation_error=orientation, nees=nees_values
    )
