"""Rigid transforms on SE(3): positions in meters plus scalar-first unit quaternions.

Every operation renormalizes its quaternion output, so poses stay on the
manifold (norm within 1e-9 of 1) no matter how many compositions are chained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion cannot be normalized")
    return q / n


def quat_mul(a, b):
    """Hamilton product a*b, both scalar-first [w, x, y, z]."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return quat_normalize(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q, v):
    """Rotate vector v by quaternion q."""
    w = q[0]
    u = np.asarray(q[1:], dtype=float)
    v = np.asarray(v, dtype=float)
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R):
    """Rotation matrix to scalar-first quaternion, w >= 0 canonical sign."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    q = quat_normalize(q)
    if q[0] < 0.0:
        q = -q
    return q


def quat_angle(a, b):
    """Geodesic angle in radians between two orientations."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * np.arccos(min(1.0, d))


def quat_log(q):
    """Rotation vector (axis * angle) of q; shortest representation."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    v = q[1:]
    sin_half = np.linalg.norm(v)
    if sin_half < 1e-12:
        return np.zeros(3)
    half = np.arctan2(sin_half, q[0])
    return v * (2.0 * half / sin_half)


def quat_from_rotvec(v):
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        return quat_normalize([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
    axis = v / angle
    s = np.sin(0.5 * angle)
    return quat_normalize([np.cos(0.5 * angle), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    s = np.sin(0.5 * angle)
    return quat_normalize([np.cos(0.5 * angle), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_from_euler_xyz(rx, ry, rz):
    """Intrinsic x-y-z Euler angles to quaternion."""
    qx = quat_from_axis_angle([1.0, 0.0, 0.0], rx)
    qy = quat_from_axis_angle([0.0, 1.0, 0.0], ry)
    qz = quat_from_axis_angle([0.0, 0.0, 1.0], rz)
    return quat_mul(quat_mul(qx, qy), qz)


def quat_slerp(a, b, t):
    """Spherical interpolation from a to b along the shorter arc."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-10:
        return quat_normalize(a + t * (b - a))
    theta = np.arccos(min(1.0, dot))
    s = np.sin(theta)
    return quat_normalize((np.sin((1.0 - t) * theta) / s) * a + (np.sin(t * theta) / s) * b)


def quat_average(quats, weights=None):
    """Weighted orientation average via the largest eigenvector of sum(w * q q^T)."""
    quats = np.asarray(quats, dtype=float)
    if weights is None:
        weights = np.ones(len(quats))
    weights = np.asarray(weights, dtype=float)
    m = np.zeros((4, 4))
    for q, w in zip(quats, weights):
        m += w * np.outer(q, q)
    vals, vecs = np.linalg.eigh(m)
    q = vecs[:, np.argmax(vals)]
    q = quat_normalize(q)
    if q[0] < 0.0:
        q = -q
    return q


@dataclass
class Pose:
    """Rigid transform: rotate by `orientation` then translate by `position`."""

    position: np.ndarray
    orientation: np.ndarray

    def __init__(self, position, orientation):
        self.position = np.asarray(position, dtype=float).copy()
        self.orientation = quat_normalize(orientation)
        if self.position.shape != (3,):
            raise ValueError(f"position must be a 3-vector, got shape {self.position.shape}")

    @staticmethod
    def identity():
        return Pose([0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0])

    @staticmethod
    def from_matrix(T):
        T = np.asarray(T, dtype=float)
        return Pose(T[:3, 3], matrix_to_quat(T[:3, :3]))

    def to_matrix(self):
        T = np.eye(4)
        T[:3, :3] = quat_to_matrix(self.orientation)
        T[:3, 3] = self.position
        return T

    def rotation(self):
        return quat_to_matrix(self.orientation)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_mul(self.orientation, other.orientation),
        )

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.orientation)
        return Pose(-quat_rotate(qi, self.position), qi)

    def transform_point(self, p):
        return self.position + quat_rotate(self.orientation, p)

    def to_dict(self):
        return {
            "position": [float(v) for v in self.position],
            "orientation": [float(v) for v in self.orientation],
        }

    @staticmethod
    def from_dict(d):
        return Pose(d["position"], d["orientation"])


def pose_error(target: Pose, current: Pose):
    """World-frame position and rotation-vector error pulling current toward target."""
    dp = target.position - current.position
    dq = quat_mul(target.orientation, quat_conjugate(current.orientation))
    return dp, quat_log(dq)


def pose_distance(a: Pose, b: Pose):
    """(translation distance, geodesic angle) between two poses."""
    return float(np.linalg.norm(a.position - b.position)), quat_angle(a.orientation, b.orientation)


def pose_interp(a: Pose, b: Pose, t: float) -> Pose:
    """Linear position blend plus slerp of orientation."""
    return Pose(a.position + t * (b.position - a.position), quat_slerp(a.orientation, b.orientation, t))
