"""Convex 2D geometry on the tabletop's (x, z) coordinates.

Coordinates are plain (x, z) pairs in meters. All polygons here are convex,
stored counterclockwise (positive cross products in the standard 2D sense),
canonically starting at the lexicographically smallest vertex.
"""

from __future__ import annotations

import numpy as np

# On-boundary / near-duplicate tolerance. Table-scale coordinates are O(1) m,
# which leaves plenty of double-precision headroom below this.
EPS = 1e-9

# Strictness threshold for dropping collinear hull vertices.
_AREA_EPS = 1e-12


class DegenerateInput(ValueError):
    """Fewer than 3 distinct points, or all points collinear."""


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


class Polygon2:
    """Convex polygon on the (x, z) plane; empty or at least 3 vertices."""

    __slots__ = ("vertices",)

    def __init__(self, vertices=()):
        v = np.array(vertices, dtype=float).reshape(-1, 2)
        if not np.isfinite(v).all():
            raise ValueError("polygon has non-finite vertices")
        n = len(v)
        if 0 < n < 3:
            raise ValueError(f"polygon needs 0 or >= 3 vertices, got {n}")
        for i in range(n):
            j = (i + 1) % n
            if np.hypot(*(v[j] - v[i])) <= EPS:
                raise ValueError("duplicate consecutive vertices")
            k = (i + 2) % n
            if _cross(v[i], v[j], v[k]) < -EPS:
                raise ValueError("vertices are not in convex CCW order")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __setattr__(self, name, value):
        raise AttributeError("Polygon2 is immutable")

    @classmethod
    def empty(cls) -> "Polygon2":
        return cls(())

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0

    def __len__(self):
        return len(self.vertices)

    def __repr__(self):
        if self.is_empty:
            return "Polygon2(empty)"
        return f"Polygon2({len(self.vertices)} vertices, area={area(self):.6g})"


def _dedupe(points: np.ndarray) -> np.ndarray:
    """Merge points closer than EPS, keeping first occurrences."""
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.hypot(p[0] - q[0], p[1] - q[1]) > EPS for q in kept):
            kept.append(p)
    return np.array(kept).reshape(-1, 2)


def convex_hull(points) -> Polygon2:
    """Smallest convex polygon containing the points (monotone-chain scan).

    Output is counterclockwise, starting at the lexicographically smallest
    vertex; collinear boundary points are dropped.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if not np.isfinite(pts).all():
        raise ValueError("points contain non-finite values")
    pts = _dedupe(pts)
    if len(pts) < 3:
        raise DegenerateInput(f"need >= 3 distinct points, got {len(pts)}")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        chain: list[np.ndarray] = []
        for p in seq:
            while len(chain) > 1 and _cross(chain[-2], chain[-1], p) <= _AREA_EPS:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInput("all points are collinear")
    return Polygon2(hull)


def contains_point(poly: Polygon2, point) -> bool:
    """True when the point is inside or on the boundary (within EPS)."""
    if poly.is_empty:
        return False
    p = np.asarray(point, dtype=float).reshape(2)
    v = poly.vertices
    for i in range(len(v)):
        j = (i + 1) % len(v)
        if _cross(v[i], v[j], p) < -EPS:
            return False
    return True


def _edge_intersections(a: Polygon2, b: Polygon2) -> list[np.ndarray]:
    points = []
    va, vb = a.vertices, b.vertices
    for i in range(len(va)):
        p = va[i]
        r = va[(i + 1) % len(va)] - p
        for j in range(len(vb)):
            q = vb[j]
            s = vb[(j + 1) % len(vb)] - q
            denom = r[0] * s[1] - r[1] * s[0]
            if abs(denom) < _AREA_EPS:
                continue  # parallel or collinear; endpoints handled elsewhere
            d = q - p
            t = (d[0] * s[1] - d[1] * s[0]) / denom
            u = (d[0] * r[1] - d[1] * r[0]) / denom
            if -EPS <= t <= 1.0 + EPS and -EPS <= u <= 1.0 + EPS:
                points.append(p + t * r)
    return points


def intersect_convex(a: Polygon2, b: Polygon2) -> Polygon2:
    """Intersection of two convex polygons.

    Built as the hull of (vertices of each polygon contained in the other)
    plus all pairwise edge intersection points. Degenerate overlaps that
    touch only at a point or along an edge come out empty.
    """
    if a.is_empty or b.is_empty:
        return Polygon2.empty()
    candidates = [v for v in a.vertices if contains_point(b, v)]
    candidates += [v for v in b.vertices if contains_point(a, v)]
    candidates += _edge_intersections(a, b)
    if not candidates:
        return Polygon2.empty()
    distinct = _dedupe(np.array(candidates))
    if len(distinct) < 3:
        return Polygon2.empty()
    try:
        return convex_hull(distinct)
    except DegenerateInput:
        return Polygon2.empty()


def intersect_all(polys) -> Polygon2:
    """Left fold of intersect_convex; empty as soon as any step empties."""
    polys = list(polys)
    if not polys:
        raise ValueError("need at least one polygon")
    acc = polys[0]
    for p in polys[1:]:
        if acc.is_empty:
            return acc
        acc = intersect_convex(acc, p)
    return acc


def area(poly: Polygon2) -> float:
    """Shoelace area in square meters; 0 for the empty polygon."""
    v = poly.vertices
    if len(v) == 0:
        return 0.0
    x, z = v[:, 0], v[:, 1]
    return float(abs(np.dot(x, np.roll(z, -1)) - np.dot(z, np.roll(x, -1)))) / 2.0
