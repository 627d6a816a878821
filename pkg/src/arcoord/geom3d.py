"""Rigid-body transforms on SE(3).

Conventions used throughout the project:

* Right-handed coordinates, y up. Angles are degrees at API boundaries.
* "Pose of X in frame F" is the transform taking X-local coordinates into
  F coordinates (camera-to-world style). Composition therefore reads
  right-to-left: ``compose(a, b)`` applies ``b`` first.
* Rotations are 3x3 orthonormal matrices with determinant +1. Constructors
  re-project onto the nearest rotation once accumulated round-off exceeds
  ``ORTHONORMALITY_TOL``; anything beyond ``REJECT_TOL`` is rejected.
"""

from __future__ import annotations

import math

import numpy as np

ORTHONORMALITY_TOL = 1e-9
REJECT_TOL = 1e-6


def _nearest_rotation(matrix: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(matrix)
    rot = u @ vt
    if np.linalg.det(rot) < 0.0:
        rot = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return rot


class RigidTransform:
    """A rotation plus a translation, composing like 4x4 homogeneous matrices.

    Value type: the stored arrays are copies and marked read-only, so
    instances are safe to share across threads.
    """

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation):
        rot = np.array(rotation, dtype=float)
        t = np.array(translation, dtype=float).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {rot.shape}")
        if not (np.isfinite(rot).all() and np.isfinite(t).all()):
            raise ValueError("pose contains non-finite values")
        defect = float(np.abs(rot.T @ rot - np.eye(3)).max())
        if defect > REJECT_TOL:
            raise ValueError(f"rotation not orthonormal (defect {defect:.3g})")
        if np.linalg.det(rot) < 0.0:
            raise ValueError("rotation has determinant -1 (reflection)")
        if defect > ORTHONORMALITY_TOL:
            rot = _nearest_rotation(rot)
        rot.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    def __setattr__(self, name, value):
        raise AttributeError("RigidTransform is immutable")

    def __repr__(self):
        t = self.translation
        return (
            f"RigidTransform(t=[{t[0]:.6g}, {t[1]:.6g}, {t[2]:.6g}], "
            f"angle={rotation_angle(self):.4g} deg)"
        )

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        m = np.asarray(matrix, dtype=float)
        if m.shape != (4, 4) or np.abs(m[3] - [0.0, 0.0, 0.0, 1.0]).max() > 1e-9:
            raise ValueError("expected a homogeneous 4x4 matrix")
        return cls(m[:3, :3], m[:3, 3])

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self applied after other (matrix product self * other)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def invert(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def transform_point(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float).reshape(3)
        return self.rotation @ p + self.translation

    def transform_points(self, points) -> np.ndarray:
        """Apply to an (N, 3) array of points."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return pts @ self.rotation.T + self.translation


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    return t.invert()


def transform_point(t: RigidTransform, point) -> np.ndarray:
    return t.transform_point(point)


def rotation_angle_between(a: RigidTransform, b: RigidTransform) -> float:
    """Geodesic angle in degrees between the two rotations, in [0, 180]."""
    cos_angle = (np.trace(a.rotation.T @ b.rotation) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, cos_angle))))


def rotation_angle(t: RigidTransform) -> float:
    """Rotation magnitude of ``t`` in degrees."""
    return rotation_angle_between(RigidTransform.identity(), t)


def point3(x: float, y: float, z: float) -> np.ndarray:
    """Validated 3D point in meters."""
    p = np.array([x, y, z], dtype=float)
    if not np.isfinite(p).all():
        raise ValueError("point has non-finite components")
    return p


def translate(x: float, y: float, z: float) -> RigidTransform:
    return RigidTransform(np.eye(3), [x, y, z])


def rot_x(angle_deg: float) -> RigidTransform:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return RigidTransform([[1, 0, 0], [0, c, -s], [0, s, c]], np.zeros(3))


def rot_y(angle_deg: float) -> RigidTransform:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return RigidTransform([[c, 0, s], [0, 1, 0], [-s, 0, c]], np.zeros(3))


def rot_z(angle_deg: float) -> RigidTransform:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return RigidTransform([[c, -s, 0], [s, c, 0], [0, 0, 1]], np.zeros(3))


def axis_angle(axis, angle_deg: float) -> RigidTransform:
    """Rotation about an arbitrary axis through the origin (Rodrigues)."""
    ax = np.asarray(axis, dtype=float).reshape(3)
    n = np.linalg.norm(ax)
    if n < 1e-12:
        raise ValueError("rotation axis has zero length")
    ax = ax / n
    a = math.radians(angle_deg)
    k = np.array(
        [[0, -ax[2], ax[1]], [ax[2], 0, -ax[0]], [-ax[1], ax[0], 0]]
    )
    rot = np.eye(3) + math.sin(a) * k + (1.0 - math.cos(a)) * (k @ k)
    return RigidTransform(rot, np.zeros(3))


def quat_from_rotation(rotation) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0 for a rotation matrix."""
    m = np.asarray(rotation, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
             (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s,
             (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s,
             (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
             (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def rotation_from_quat(quat) -> np.ndarray:
    """3x3 rotation matrix for a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(quat, dtype=float).reshape(4)
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if abs(n - 1.0) > REJECT_TOL:
        raise ValueError(f"quaternion norm {n:.6g} too far from 1")
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
