"""Planar pose, angle arithmetic, and covariance validity checks.

Every other module builds on the two angle operations here; raw subtraction
of headings or bearings is forbidden anywhere else in the package because the
wrap convention (half-open interval (-pi, pi], so pi has a single
representation) is what keeps innovation terms free of the +/-pi sign bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Default tolerances for covariance validity; loose enough to absorb
# double-precision round-off accumulated over a 1000-step filter run.
SYMMETRY_ATOL = 1e-9
EIGENVALUE_TOL = 1e-9

RobotId = int


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi].

    The result is congruent to ``theta`` modulo 2*pi. Exactly pi stays pi and
    exactly -pi maps to pi, so the boundary has one representation.
    """
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta}")
    wrapped = theta % TWO_PI
    if wrapped > math.pi:
        wrapped -= TWO_PI
    return wrapped


def angle_diff(a: float, b: float) -> float:
    """Shortest signed angular difference ``a - b``, wrapped to (-pi, pi]."""
    if not math.isfinite(a) or not math.isfinite(b):
        raise ValueError(f"angles must be finite, got {a}, {b}")
    return wrap_angle(a - b)


@dataclass(frozen=True, slots=True)
class Pose:
    """Planar pose: position in meters, heading in radians.

    The heading is wrapped to (-pi, pi] on construction, so two poses that
    describe the same physical configuration compare equal componentwise.
    """

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"pose position must be finite, got ({self.x}, {self.y})")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        """Return ``[x, y, theta]`` as a float array."""
        return np.array([self.x, self.y, self.theta], dtype=float)

    @classmethod
    def from_array(cls, state) -> "Pose":
        x, y, theta = state
        return cls(float(x), float(y), float(theta))


@dataclass(frozen=True, slots=True)
class CovarianceVerdict:
    """Outcome of a covariance validity check; ``reason`` names the violation."""

    ok: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate_covariance(
    matrix,
    *,
    symmetry_atol: float = SYMMETRY_ATOL,
    eigenvalue_tol: float = EIGENVALUE_TOL,
) -> CovarianceVerdict:
    """Check that a 3x3 matrix is a usable covariance.

    Accepts iff the matrix is finite, symmetric within ``symmetry_atol`` and
    positive semi-definite with smallest eigenvalue >= ``-eigenvalue_tol``.
    Total function: never raises, the verdict carries the failure reason.
    """
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3):
        return CovarianceVerdict(False, f"expected 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        return CovarianceVerdict(False, "matrix has non-finite entries")
    asym = float(np.max(np.abs(m - m.T)))
    if asym > symmetry_atol:
        return CovarianceVerdict(False, f"asymmetric: max |A - A^T| = {asym:.3e}")
    min_eig = float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())
    if min_eig < -eigenvalue_tol:
        return CovarianceVerdict(False, f"not PSD: min eigenvalue = {min_eig:.3e}")
    return CovarianceVerdict(True)


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """Return ``(A + A^T) / 2``; applied after every covariance update."""
    return 0.5 * (matrix + matrix.T)


def _freeze(matrix: np.ndarray) -> np.ndarray:
    out = np.array(matrix, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False, slots=True)
class Belief:
    """One robot's Gaussian state estimate: mean pose and 3x3 covariance.

    This is the whole of a robot's decentralized state; nothing about the
    rest of the fleet is retained between steps. The covariance array is
    stored read-only so beliefs can be shared across threads and steps.
    """

    mean: Pose
    covariance: np.ndarray
    robot: RobotId
    step: int

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (3, 3):
            raise ValueError(f"covariance must be 3x3, got shape {cov.shape}")
        if not np.all(np.isfinite(cov)):
            raise ValueError("covariance has non-finite entries")
        if self.robot < 0:
            raise ValueError(f"robot id must be non-negative, got {self.robot}")
        # Share the buffer when it is already frozen (predict of a stationary
        # robot reuses the same matrix for its whole epoch).
        if not (isinstance(self.covariance, np.ndarray) and not self.covariance.flags.writeable):
            object.__setattr__(self, "covariance", _freeze(cov))

    def position_sigma(self) -> float:
        """Scalar position spread: sqrt of the x/y covariance trace."""
        return math.sqrt(self.covariance[0, 0] + self.covariance[1, 1])
