"""Table-plane estimation from a noisy point cloud.

RANSAC removes outliers, an SVD least-squares fit refines the surviving
inliers, and the refined plane is turned into a full coordinate frame with
the y-axis along the normal and the x-axis pointing toward the camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom3d import RigidTransform

_COLLINEAR_TOL = 1e-12


class TooFewPoints(ValueError):
    """Fewer than 3 points supplied."""


class NoConsensus(RuntimeError):
    """RANSAC found no candidate with enough inliers."""


class DegenerateCloud(ValueError):
    """Inlier points are collinear; no unique plane exists."""


class CameraAbovePlaneOrigin(ValueError):
    """Camera projects onto the plane origin; the x-axis is undefined."""


@dataclass(frozen=True)
class PlaneModel:
    """An infinite plane: unit normal plus a point on the plane (meters)."""

    normal: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        p = np.asarray(self.point, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("plane normal has zero length")
        if abs(norm - 1.0) > 1e-9:
            n = n / norm
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "point", p)

    def distances(self, points) -> np.ndarray:
        """Unsigned point-to-plane distances for an (N, 3) array."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return np.abs((pts - self.point) @ self.normal)


@dataclass(frozen=True)
class PlaneFrame:
    """Plane coordinate system: origin on the plane, y-axis = normal."""

    pose: RigidTransform

    @property
    def origin(self) -> np.ndarray:
        return self.pose.translation

    @property
    def x_axis(self) -> np.ndarray:
        return self.pose.rotation[:, 0]

    @property
    def y_axis(self) -> np.ndarray:
        return self.pose.rotation[:, 1]

    @property
    def z_axis(self) -> np.ndarray:
        return self.pose.rotation[:, 2]


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 500
    inlier_threshold: float = 0.01  # meters point-to-plane
    min_inliers: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_threshold <= 0.0:
            raise ValueError("inlier_threshold must be positive")
        if self.min_inliers < 1:
            raise ValueError("min_inliers must be >= 1")


def ransac_plane(points, cfg: RansacConfig) -> tuple[PlaneModel, np.ndarray]:
    """Best 3-point plane hypothesis by inlier count.

    Returns the winning candidate model (not refined) and the indices of all
    points within ``cfg.inlier_threshold`` of it. Deterministic for a fixed
    ``cfg.seed``. Collinear samples are redrawn rather than wasting one of
    the configured iterations.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n < 3:
        raise TooFewPoints(f"need >= 3 points, got {n}")

    rng = np.random.default_rng(cfg.seed)
    normals = []
    anchors = []
    needed = cfg.iterations
    for _ in range(10):  # redraw rounds for degenerate samples
        idx = rng.integers(0, n, size=(needed, 3))
        a, b, c = pts[idx[:, 0]], pts[idx[:, 1]], pts[idx[:, 2]]
        cross = np.cross(b - a, c - a)
        norms = np.linalg.norm(cross, axis=1)
        ok = norms >= _COLLINEAR_TOL
        if ok.any():
            normals.append(cross[ok] / norms[ok, None])
            anchors.append((a[ok] + b[ok] + c[ok]) / 3.0)
            needed -= int(ok.sum())
        if needed == 0:
            break
    if not normals:
        raise NoConsensus("no non-degenerate candidate samples")

    cand_n = np.concatenate(normals)
    cand_p = np.concatenate(anchors)
    # |(pts - anchor) . normal| for every candidate at once
    dist = np.abs(np.einsum("ij,kj->ki", pts, cand_n) - np.einsum("kj,kj->k", cand_p, cand_n)[:, None])
    counts = (dist <= cfg.inlier_threshold).sum(axis=1)
    best = int(np.argmax(counts))
    if counts[best] < cfg.min_inliers:
        raise NoConsensus(
            f"best candidate has {counts[best]} inliers < min_inliers={cfg.min_inliers}"
        )
    model = PlaneModel(cand_n[best], cand_p[best])
    inliers = np.flatnonzero(dist[best] <= cfg.inlier_threshold)
    return model, inliers


def refine_plane_lsq(inliers) -> PlaneModel:
    """Least-squares plane through the points.

    The plane point is the centroid; the normal is the right singular vector
    of the centered point matrix belonging to the smallest singular value.
    """
    pts = np.asarray(inliers, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise TooFewPoints(f"need >= 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if sv[1] < 1e-12 * max(sv[0], 1e-300):
        raise DegenerateCloud("points are collinear")
    return PlaneModel(vt[2], centroid)


def build_plane_frame(plane: PlaneModel, camera_position) -> PlaneFrame:
    """Coordinate frame on the plane, oriented toward the camera.

    y is the plane normal flipped to face the camera, x is the normalized
    projection of (camera - origin) onto the plane, z = x cross y.
    """
    cam = np.asarray(camera_position, dtype=float).reshape(3)
    origin = plane.point
    y = plane.normal.copy()
    to_cam = cam - origin
    if to_cam @ y < 0.0:
        y = -y
    x = to_cam - (to_cam @ y) * y
    nx = np.linalg.norm(x)
    if nx <= 1e-9:
        raise CameraAbovePlaneOrigin(
            "camera projects onto the plane origin; x-axis undefined"
        )
    x = x / nx
    z = np.cross(x, y)
    return PlaneFrame(RigidTransform(np.column_stack([x, y, z]), origin))


def load_point_cloud(path) -> np.ndarray:
    """Read one ``x y z`` (or ``x,y,z``) triple per line, meters."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
            rows.append([float(v) for v in parts])
    pts = np.array(rows, dtype=float).reshape(-1, 3)
    if not np.isfinite(pts).all():
        raise ValueError(f"{path}: non-finite coordinates")
    return pts
