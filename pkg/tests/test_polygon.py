import numpy as np
import pytest

from arcoord.polygon import (
    DegenerateInput,
    Polygon2,
    area,
    contains_point,
    convex_hull,
    intersect_all,
    intersect_convex,
)
from oracles import (
    brute_force_hull,
    grid_overlap_count,
    grid_overlap_count_naive,
    random_convex_vertices,
    shoelace,
)

UNIT_SQUARE = Polygon2([[0, 0], [1, 0], [1, 1], [0, 1]])


def square(x0, z0, side=1.0):
    return Polygon2([[x0, z0], [x0 + side, z0], [x0 + side, z0 + side], [x0, z0 + side]])


def vertex_set(poly, decimals=9):
    return {tuple(np.round(v, decimals)) for v in poly.vertices}


def test_hull_excludes_interior_point():
    hull = convex_hull([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]])
    assert vertex_set(hull) == {(0, 0), (1, 0), (1, 1), (0, 1)}
    # canonical: CCW from the lexicographically smallest vertex
    assert np.allclose(hull.vertices, [[0, 0], [1, 0], [1, 1], [0, 1]])


def test_hull_three_points_ccw():
    hull = convex_hull([[1, 0], [0, 0], [0, 1]])
    assert np.allclose(hull.vertices, [[0, 0], [1, 0], [0, 1]])


def test_hull_matches_brute_force_on_random_disks():
    rng = np.random.default_rng(12)
    for _ in range(5):
        r = np.sqrt(rng.uniform(0, 1, 100))
        theta = rng.uniform(0, 2 * np.pi, 100)
        pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        hull = convex_hull(pts)
        assert vertex_set(hull) == {tuple(np.round(p, 9)) for p in brute_force_hull(pts)}


def test_hull_idempotent():
    rng = np.random.default_rng(13)
    v = random_convex_vertices(rng)
    again = convex_hull(v)
    assert np.allclose(again.vertices, v, atol=1e-12)


def test_hull_degenerate_inputs():
    with pytest.raises(DegenerateInput):
        convex_hull([[0, 0], [1, 1], [2, 2], [3, 3]])
    with pytest.raises(DegenerateInput):
        convex_hull([[0, 0], [0, 0], [1e-12, 1e-12]])


def test_polygon_validation():
    with pytest.raises(ValueError):
        Polygon2([[0, 0], [1, 0]])
    with pytest.raises(ValueError):
        Polygon2([[0, 0], [0, 1], [1, 1], [1, 0]])  # clockwise
    assert Polygon2.empty().is_empty


def test_contains_point():
    assert contains_point(UNIT_SQUARE, (0.5, 0.5))
    assert not contains_point(UNIT_SQUARE, (2, 2))
    assert contains_point(UNIT_SQUARE, (1, 0.5))  # boundary is closed
    assert not contains_point(Polygon2.empty(), (0, 0))


def test_intersect_self_is_identity():
    rng = np.random.default_rng(14)
    for _ in range(20):
        p = Polygon2(random_convex_vertices(rng))
        q = intersect_convex(p, p)
        assert vertex_set(q, 7) == vertex_set(p, 7)


def test_intersect_shifted_squares():
    q = intersect_convex(UNIT_SQUARE, square(0.5, 0.5))
    assert abs(area(q) - 0.25) < 1e-12
    assert vertex_set(q) == {(0.5, 0.5), (1, 0.5), (1, 1), (0.5, 1)}


def test_intersect_disjoint_is_empty():
    assert intersect_convex(UNIT_SQUARE, square(5, 5)).is_empty


def test_intersect_touching_edge_canonicalizes_empty():
    assert intersect_convex(UNIT_SQUARE, square(1.0, 0.0)).is_empty
    assert intersect_convex(UNIT_SQUARE, square(1.0, 1.0)).is_empty  # corner touch


def test_contained_polygon_comes_back():
    inner = square(0.25, 0.25, side=0.5)
    q = intersect_convex(UNIT_SQUARE, inner)
    assert vertex_set(q) == vertex_set(inner)


def test_intersection_against_grid_oracle():
    rng = np.random.default_rng(15)
    for _ in range(100):
        a = Polygon2(random_convex_vertices(rng))
        b = Polygon2(random_convex_vertices(rng))
        got = area(intersect_convex(a, b))
        expected = grid_overlap_count(a.vertices, b.vertices, 1e-3) * 1e-6
        assert abs(got - expected) <= max(0.01 * expected, 1e-4)


def test_intersection_properties():
    rng = np.random.default_rng(16)
    for _ in range(200):
        a = Polygon2(random_convex_vertices(rng))
        b = Polygon2(random_convex_vertices(rng))
        ab = intersect_convex(a, b)
        ba = intersect_convex(b, a)
        assert abs(area(ab) - area(ba)) < 1e-9
        assert vertex_set(ab, 7) == vertex_set(ba, 7)
        assert area(ab) <= min(area(a), area(b)) + 1e-9
        for v in ab.vertices:
            assert contains_point(a, v) and contains_point(b, v)
        # convexity is enforced by the Polygon2 constructor; re-run it
        Polygon2(ab.vertices)


def test_intersect_all():
    assert vertex_set(intersect_all([UNIT_SQUARE])) == vertex_set(UNIT_SQUARE)
    assert vertex_set(intersect_all([UNIT_SQUARE] * 3)) == vertex_set(UNIT_SQUARE)
    with pytest.raises(ValueError):
        intersect_all([])


def test_intersect_all_random_triples():
    rng = np.random.default_rng(17)
    for _ in range(30):
        polys = [Polygon2(random_convex_vertices(rng)) for _ in range(3)]
        result = intersect_all(polys)
        assert area(result) <= min(area(p) for p in polys) + 1e-9
        if not result.is_empty:
            # fold result equals the pairwise oracle of (a n b) n c
            step = intersect_convex(intersect_convex(polys[0], polys[1]), polys[2])
            assert abs(area(result) - area(step)) < 1e-9


def test_intersect_all_short_circuits_empty():
    polys = [UNIT_SQUARE, square(5, 5), square(100, 100)]
    assert intersect_all(polys).is_empty


def test_area_cases():
    assert area(UNIT_SQUARE) == pytest.approx(1.0, abs=1e-12)
    assert area(Polygon2.empty()) == 0.0
    assert area(Polygon2([[0, 0], [1, 0], [0, 1]])) == pytest.approx(0.5, abs=1e-12)


def test_area_matches_shoelace_oracle():
    rng = np.random.default_rng(18)
    for _ in range(20):
        v = random_convex_vertices(rng)
        assert abs(area(Polygon2(v)) - shoelace(v)) < 1e-12


def test_grid_oracle_matches_naive_rasterizer():
    rng = np.random.default_rng(19)
    for _ in range(5):
        a = random_convex_vertices(rng)
        b = random_convex_vertices(rng)
        assert grid_overlap_count(a, b, 0.05) == grid_overlap_count_naive(a, b, 0.05)
