import csv
import math

import numpy as np
import pytest

from arcoord.evaluation import (
    DeltaTooLarge,
    EmptyInput,
    EmptyOverlap,
    ErrorSummary,
    Trajectory,
    rpe,
    summarize,
    write_error_curve_csv,
    write_gnuplot_script,
    write_summary_csv,
    write_trajectory_csv,
)
from arcoord.geom3d import RigidTransform, compose, rot_y, translate
from oracles import random_rigid


def straight_line(n, step=0.01, start=0.0):
    poses = [translate(start + step * k, 0, 0) for k in range(n)]
    return Trajectory(np.arange(n) / 30.0, tuple(poses))


def random_trajectory(rng, n):
    return Trajectory(np.arange(n) / 30.0, tuple(random_rigid(rng) for _ in range(n)))


def test_identical_trajectories_zero_error():
    rng = np.random.default_rng(60)
    traj = random_trajectory(rng, 50)
    t_err, r_err = rpe(traj, traj)
    assert max(t_err) < 1e-12
    assert max(r_err) < 1e-5


def test_doubled_scale_on_straight_line():
    # 1 cm per frame reference, estimate translations doubled: the per-step
    # relative motion mismatch is exactly the extra 1 cm
    ref = straight_line(40, step=0.01)
    est = Trajectory(ref.times, tuple(translate(p.translation[0] * 2, 0, 0) for p in ref.poses))
    t_err, r_err = rpe(est, ref, delta=1)
    assert np.allclose(t_err, 0.01, atol=1e-12)
    assert max(r_err) < 1e-9


def test_global_offset_invariance():
    rng = np.random.default_rng(61)
    ref = random_trajectory(rng, 40)
    offset = random_rigid(rng)
    est = Trajectory(ref.times, tuple(compose(offset, p) for p in ref.poses))
    t_err, r_err = rpe(est, ref)
    assert max(t_err) < 1e-9
    assert max(r_err) < 1e-5


def test_left_composition_leaves_errors_unchanged():
    rng = np.random.default_rng(62)
    ref = random_trajectory(rng, 30)
    est = random_trajectory(rng, 30)
    t0, r0 = rpe(est, ref)
    g = random_rigid(rng)
    ref_moved = Trajectory(ref.times, tuple(compose(g, p) for p in ref.poses))
    est_moved = Trajectory(est.times, tuple(compose(g, p) for p in est.poses))
    t1, r1 = rpe(est_moved, ref_moved)
    assert np.abs(np.array(t1) - np.array(t0)).max() < 1e-9
    assert np.abs(np.array(r1) - np.array(r0)).max() < 1e-6


def test_rotational_errors_ignore_translation_scaling():
    rng = np.random.default_rng(63)
    ref = random_trajectory(rng, 30)
    est = random_trajectory(rng, 30)
    _, r0 = rpe(est, ref)
    est2 = Trajectory(est.times, tuple(RigidTransform(p.rotation, p.translation * 2.0) for p in est.poses))
    _, r2 = rpe(est2, ref)
    assert r0 == r2  # bit-equal: rotations never touch translations


def test_time_alignment_and_errors():
    ref = straight_line(20)
    shifted = Trajectory(ref.times + 0.0005, ref.poses)  # within the 1 ms gate
    t_err, _ = rpe(shifted, ref)
    assert len(t_err) == 19
    alternate = Trajectory(ref.times[::2], ref.poses[::2])
    t_err, _ = rpe(alternate, ref)  # matching subset only
    assert len(t_err) == 9
    far = Trajectory(ref.times + 10.0, ref.poses)
    with pytest.raises(EmptyOverlap):
        rpe(far, ref)
    with pytest.raises(DeltaTooLarge):
        rpe(ref, ref, delta=len(ref))


def test_rpe_with_larger_delta():
    ref = straight_line(30, step=0.01)
    est = Trajectory(ref.times, tuple(translate(p.translation[0] * 2, 0, 0) for p in ref.poses))
    t_err, _ = rpe(est, ref, delta=5)
    assert np.allclose(t_err, 0.05, atol=1e-12)


def test_summarize_cases():
    s = summarize([0.0, 0.0, 0.0])
    assert (s.rmse, s.mean, s.median, s.max, s.sd) == (0, 0, 0, 0, 0)
    s = summarize([3.0, 4.0])
    assert s.mean == pytest.approx(3.5)
    assert s.rmse == pytest.approx(math.sqrt(12.5))
    assert s.max == 4.0
    assert s.median == 3.0  # lower middle for even length
    assert s.sd == pytest.approx(0.5)
    s = summarize([2.5])
    assert s.rmse == s.mean == s.median == s.max == 2.5
    assert s.sd == 0.0
    with pytest.raises(EmptyInput):
        summarize([])
    with pytest.raises(ValueError):
        summarize([-1.0])


def test_summary_orderings_hold():
    rng = np.random.default_rng(64)
    for _ in range(50):
        values = rng.uniform(0, 5, rng.integers(1, 40))
        s = summarize(values)
        assert s.rmse >= s.mean - 1e-12
        assert s.max >= s.rmse - 1e-12
        assert s.max >= s.median - 1e-12


def test_csv_outputs(tmp_path):
    summaries = {
        "translational_m": summarize([0.01, 0.02]),
        "rotational_deg": summarize([0.5, 0.7]),
    }
    path = tmp_path / "summary.csv"
    write_summary_csv(path, summaries)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 10  # 2 metrics x 5 statistics
    stats = [r["statistic"] for r in rows[:5]]
    assert stats == ["rmse", "mean", "median", "max", "sd"]
    got = {(r["metric"], r["statistic"]): float(r["value"]) for r in rows}
    assert got[("translational_m", "max")] == 0.02

    curve = tmp_path / "curve.csv"
    write_error_curve_csv(curve, "translational_m", [0.1, 0.2])
    assert curve.read_text().splitlines()[1] == "0,0.1"

    traj_csv = tmp_path / "traj.csv"
    write_trajectory_csv(traj_csv, straight_line(3))
    assert len(traj_csv.read_text().splitlines()) == 4

    script = tmp_path / "plot.gp"
    write_gnuplot_script(script, ["traj.csv"], ["curve.csv"])
    assert "plot" in script.read_text()


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), (RigidTransform.identity(), RigidTransform.identity()))
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0]), ())
