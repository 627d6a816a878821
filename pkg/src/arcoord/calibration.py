"""Monocular scale recovery from a marker of known physical size.

A marker image of known pixel and metric dimensions gives the physical
distance between two matched feature points; dividing by the distance of
the corresponding 3D map points yields the global scale factor of the
tracking coordinate system.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geom3d import RigidTransform


class TooFewMatches(ValueError):
    pass


class CoincidentPoints(ValueError):
    pass


class DegenerateMapPoints(ValueError):
    pass


class NonPositiveScale(ValueError):
    pass


@dataclass(frozen=True)
class MarkerSpec:
    """Marker image dimensions in pixels and measured physical size."""

    width_pixels: float
    height_pixels: float
    width_meters: float
    height_meters: float

    def __post_init__(self):
        for name in ("width_pixels", "height_pixels", "width_meters", "height_meters"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        mpp_w = self.width_meters / self.width_pixels
        mpp_h = self.height_meters / self.height_pixels
        if abs(mpp_w - mpp_h) > 0.01 * mpp_w:
            warnings.warn(
                "marker meters-per-pixel differs between width and height by "
                f"more than 1% ({mpp_w:.6g} vs {mpp_h:.6g}); distances use the "
                "width ratio only",
                stacklevel=2,
            )


@dataclass(frozen=True)
class Correspondence:
    """A marker pixel matched to a 3D map point, with a match quality score."""

    marker_pixel: tuple[float, float]
    map_point: np.ndarray
    similarity: float

    def __post_init__(self):
        object.__setattr__(self, "marker_pixel", (float(self.marker_pixel[0]), float(self.marker_pixel[1])))
        object.__setattr__(self, "map_point", np.asarray(self.map_point, dtype=float).reshape(3))
        if not math.isfinite(self.similarity):
            raise ValueError("similarity must be finite")


def select_top_pair(matches) -> tuple[Correspondence, Correspondence]:
    """The two highest-similarity matches at distinct pixel locations.

    Ties break on lexicographic pixel coordinates so the choice is stable
    across runs.
    """
    matches = list(matches)
    if len(matches) < 2:
        raise TooFewMatches(f"need >= 2 matches, got {len(matches)}")
    ordered = sorted(matches, key=lambda c: (-c.similarity, c.marker_pixel))
    first = ordered[0]
    for cand in ordered[1:]:
        if cand.marker_pixel != first.marker_pixel:
            return first, cand
    raise CoincidentPoints("all matches share one pixel location")


def physical_distance(marker: MarkerSpec, p1, p2) -> float:
    """Physical distance in meters between two marker pixels.

    Scales the Euclidean pixel distance by the marker's width ratio
    (meters per pixel).
    """
    d_px = math.hypot(p1[0] - p2[0], p1[1] - p2[1])
    if d_px <= 0.0:
        raise CoincidentPoints("pixel locations coincide")
    return (marker.width_meters / marker.width_pixels) * d_px


def scale_factor(d_physic: float, p1, p2) -> float:
    """Ratio of the physical distance to the map-point distance."""
    a = np.asarray(p1, dtype=float).reshape(3)
    b = np.asarray(p2, dtype=float).reshape(3)
    d_map = float(np.linalg.norm(a - b))
    if d_map <= 1e-12:
        raise DegenerateMapPoints(f"map points are {d_map:.3g} apart")
    return d_physic / d_map


def apply_scale(s: float, t: RigidTransform) -> RigidTransform:
    """Scale the translation into meters; the rotation is untouched."""
    if s <= 0.0:
        raise NonPositiveScale(f"scale must be positive, got {s}")
    return RigidTransform(t.rotation, t.translation * s)


def load_marker_spec(path) -> MarkerSpec:
    """Read a ``key = value`` config with the four marker dimensions."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            values[key.strip()] = float(raw.strip())
    required = {"width_pixels", "height_pixels", "width_meters", "height_meters"}
    missing = required - values.keys()
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    extra = values.keys() - required
    if extra:
        raise ValueError(f"{path}: unknown keys {sorted(extra)}")
    return MarkerSpec(**values)
