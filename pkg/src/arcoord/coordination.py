"""Frame alignment between users through the shared table plane.

Every user expresses its camera pose relative to its own plane frame; those
relative poses are exchanged and mapped back into each receiver's tracking
frame. Seating modes optionally rotate each user's plane frame about its
y-axis so participants end up spread around the table.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .geom3d import RigidTransform, compose, invert, rot_y


class SessionMode(enum.Enum):
    CLASSROOM = "classroom"
    COLLABORATION = "collaboration"

    @classmethod
    def parse(cls, text: str) -> "SessionMode":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(f"unknown session mode {text!r}") from None


@dataclass(frozen=True)
class UserSlot:
    """Seat assignment: user index i out of N participants."""

    user_id: int
    total_users: int

    def __post_init__(self):
        if self.total_users < 1:
            raise ValueError("total_users must be >= 1")
        if not 0 <= self.user_id < self.total_users:
            raise ValueError(
                f"user_id {self.user_id} outside [0, {self.total_users})"
            )


def slam_to_plane(plane_pose: RigidTransform) -> RigidTransform:
    """Transform from the tracking frame into the plane frame."""
    return invert(plane_pose)


def camera_in_plane(plane_pose: RigidTransform, camera_pose: RigidTransform) -> RigidTransform:
    """Camera pose re-expressed in the plane frame."""
    return compose(slam_to_plane(plane_pose), camera_pose)


def peer_in_local_slam(local_plane_pose: RigidTransform, peer_rel_pose: RigidTransform) -> RigidTransform:
    """A peer's plane-relative pose mapped into the local tracking frame."""
    return compose(local_plane_pose, peer_rel_pose)


def collaboration_angle(slot: UserSlot) -> float:
    """Seat angle in degrees: 360/N times the user index."""
    return 360.0 / slot.total_users * slot.user_id


def rotate_plane_frame(plane_pose: RigidTransform, theta_deg: float) -> RigidTransform:
    """Rotate the plane frame about its own origin and y-axis.

    Right-composition keeps the origin fixed; positive angles turn
    counterclockwise when viewed from +y.
    """
    return compose(plane_pose, rot_y(theta_deg))


def effective_plane_pose(
    plane_pose: RigidTransform, mode: SessionMode, slot: UserSlot
) -> RigidTransform:
    """Per-user plane frame: unrotated for classroom seating, rotated by the
    seat angle for collaboration seating."""
    if mode is SessionMode.CLASSROOM:
        return plane_pose
    return rotate_plane_frame(plane_pose, collaboration_angle(slot))
