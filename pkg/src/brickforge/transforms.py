"""Rigid transforms (SE(3)) and small rotation helpers.

All transforms are (R, t) pairs with R a 3x3 rotation matrix and t a
translation in meters. Quarter-turn rotations about z are exact
(entries in {-1, 0, 1}), which keeps committed brick poses drift-free.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_QUARTER_TURNS = [
    np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
    np.array([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]),
    np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
]

# Rotation by pi about x: maps (x, y, z) -> (x, -y, -z). Used to flip a
# downward-facing interface frame into its upward mating frame.
FLIP_X = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


@dataclass(frozen=True)
class Transform:
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))

    @staticmethod
    def identity() -> "Transform":
        return Transform()

    @staticmethod
    def from_translation(t) -> "Transform":
        return Transform(np.eye(3), np.asarray(t, dtype=float))

    @staticmethod
    def from_quadrant(quadrant: int, t=(0.0, 0.0, 0.0)) -> "Transform":
        """Exact quarter-turn rotation about z plus translation."""
        return Transform(_QUARTER_TURNS[quadrant % 4].copy(), np.asarray(t, dtype=float))

    @staticmethod
    def from_quaternion(q, t=(0.0, 0.0, 0.0)) -> "Transform":
        return Transform(quat_to_matrix(np.asarray(q, dtype=float)), np.asarray(t, dtype=float))

    def compose(self, other: "Transform") -> "Transform":
        return Transform(self.R @ other.R, self.R @ other.t + self.t)

    def __matmul__(self, other: "Transform") -> "Transform":
        return self.compose(other)

    def inverse(self) -> "Transform":
        Rt = self.R.T
        return Transform(Rt, -(Rt @ self.t))

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.R.T + self.t

    def rotate(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.R.T

    def yaw(self) -> float:
        """Signed rotation of the x-axis about z, in radians."""
        return float(np.arctan2(self.R[1, 0], self.R[0, 0]))

    def almost_equal(self, other: "Transform", lin_tol: float = 1e-9, ang_tol: float = 1e-9) -> bool:
        if np.max(np.abs(self.t - other.t)) > lin_tol:
            return False
        return rotation_angle(self.R.T @ other.R) <= ang_tol


def rotation_angle(R: np.ndarray) -> float:
    """Angle of a rotation matrix, robust near 0 and pi."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def angle_between(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    return float(np.arctan2(np.sin(a), np.cos(a)))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Quaternion (w, x, y, z) to rotation matrix."""
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to quaternion (w, x, y, z), w >= 0."""
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_integrate(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """First-order quaternion integration under angular velocity omega."""
    w, x, y, z = q
    ox, oy, oz = omega * (0.5 * dt)
    dq = np.array(
        [
            -ox * x - oy * y - oz * z,
            ox * w + oy * z - oz * y,
            -ox * z + oy * w + oz * x,
            ox * y - oy * x + oz * w,
        ]
    )
    out = q + dq
    return out / np.linalg.norm(out)
