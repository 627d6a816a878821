import numpy as np
import pytest

from arcoord.calibration import (
    CoincidentPoints,
    Correspondence,
    DegenerateMapPoints,
    MarkerSpec,
    NonPositiveScale,
    TooFewMatches,
    apply_scale,
    load_marker_spec,
    physical_distance,
    scale_factor,
    select_top_pair,
)
from arcoord.geom3d import translate
from oracles import random_rigid


def corr(sim, px, pt=(0, 0, 0)):
    return Correspondence(px, np.asarray(pt, dtype=float), sim)


def test_select_top_pair_by_similarity():
    matches = [corr(0.9, (0, 0)), corr(0.8, (10, 0)), corr(0.1, (5, 5))]
    first, second = select_top_pair(matches)
    assert first.marker_pixel == (0, 0) and second.marker_pixel == (10, 0)


def test_select_top_pair_skips_coincident():
    matches = [corr(0.9, (0, 0)), corr(0.85, (0, 0)), corr(0.5, (3, 3))]
    first, second = select_top_pair(matches)
    assert second.marker_pixel == (3, 3)


def test_select_top_pair_errors():
    with pytest.raises(TooFewMatches):
        select_top_pair([corr(0.9, (0, 0))])
    with pytest.raises(CoincidentPoints):
        select_top_pair([corr(0.9, (1, 1)), corr(0.8, (1, 1))])


def test_select_top_pair_tie_break_deterministic():
    matches = [corr(0.5, (4, 0)), corr(0.5, (1, 2)), corr(0.5, (1, 1)), corr(0.5, (9, 9))]
    for _ in range(5):
        first, second = select_top_pair(list(matches))
        assert first.marker_pixel == (1, 1)
        assert second.marker_pixel == (1, 2)


def test_physical_distance_cases():
    marker = MarkerSpec(100, 100, 0.2, 0.2)
    assert physical_distance(marker, (0, 0), (50, 0)) == pytest.approx(0.1, abs=1e-12)
    marker = MarkerSpec(100, 100, 0.1, 0.1)
    assert physical_distance(marker, (0, 0), (30, 40)) == pytest.approx(0.05, abs=1e-12)
    with pytest.raises(CoincidentPoints):
        physical_distance(marker, (5, 5), (5, 5))


def test_scale_factor_cases():
    assert scale_factor(0.1, (0, 0, 0), (0.05, 0, 0)) == pytest.approx(2.0, abs=1e-12)
    assert scale_factor(0.1, (0, 0, 0), (0.1, 0, 0)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DegenerateMapPoints):
        scale_factor(0.1, (1, 1, 1), (1, 1, 1))


def test_scale_recovery_from_shrunken_world():
    # world geometry shrunk by 0.25 means the recovered scale is 4
    marker = MarkerSpec(200, 200, 0.2, 0.2)
    p1, p2 = (0.0, 0.0), (200.0, 200.0)
    world1 = np.array([0.0, 0.0, 0.0])
    world2 = np.array([0.2, 0.0, 0.2])
    d = physical_distance(marker, p1, p2)
    s = scale_factor(d, world1 * 0.25, world2 * 0.25)
    assert s == pytest.approx(4.0, rel=1e-12)


def test_apply_scale():
    rng = np.random.default_rng(30)
    t = random_rigid(rng)
    assert np.array_equal(apply_scale(1.0, t).translation, t.translation)
    assert np.allclose(apply_scale(2.0, translate(1, 0, 0)).translation, [2, 0, 0])
    round_trip = apply_scale(1 / 3.0, apply_scale(3.0, t))
    assert np.abs(round_trip.translation - t.translation).max() < 1e-12
    with pytest.raises(NonPositiveScale):
        apply_scale(0.0, t)


def test_apply_scale_never_touches_rotation():
    rng = np.random.default_rng(31)
    for s in (0.25, 1.0, 4.0, 1e3):
        t = random_rigid(rng)
        assert np.array_equal(apply_scale(s, t).rotation, t.rotation)


def test_one_shot_calibration():
    rng = np.random.default_rng(32)
    t = random_rigid(rng)
    scaled = apply_scale(2.5, t)
    again = apply_scale(1.0, scaled)
    assert np.array_equal(again.translation, scaled.translation)
    assert np.array_equal(again.rotation, scaled.rotation)


def test_scale_factor_invariances():
    rng = np.random.default_rng(33)
    marker = MarkerSpec(100, 100, 0.2, 0.2)
    p1, p2 = (10.0, 20.0), (70.0, 90.0)
    d = physical_distance(marker, p1, p2)
    a, b = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    base = scale_factor(d, a, b)
    motion = random_rigid(rng)
    moved = scale_factor(d, motion.transform_point(a), motion.transform_point(b))
    assert moved == pytest.approx(base, rel=1e-9)
    shrunk = scale_factor(d, a * 0.5, b * 0.5)
    assert shrunk == pytest.approx(base * 2.0, rel=1e-9)


def test_marker_spec_validation():
    with pytest.raises(ValueError):
        MarkerSpec(0, 100, 0.2, 0.2)
    with pytest.warns(UserWarning):
        MarkerSpec(100, 100, 0.2, 0.3)  # anisotropic meters-per-pixel


def test_load_marker_spec(tmp_path):
    path = tmp_path / "marker.cfg"
    path.write_text(
        "# marker dimensions\nwidth_pixels = 200\nheight_pixels = 200\n"
        "width_meters = 0.2\nheight_meters = 0.2\n"
    )
    spec = load_marker_spec(path)
    assert spec == MarkerSpec(200, 200, 0.2, 0.2)
    (tmp_path / "missing.cfg").write_text("width_pixels = 200\n")
    with pytest.raises(ValueError):
        load_marker_spec(tmp_path / "missing.cfg")
