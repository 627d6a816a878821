"""Relative pose error over trajectories, with table-style summaries.

Uses the standard relative-motion definition: at step k the error motion is
the mismatch between the reference relative motion and the estimated one
over a window of ``delta`` frames. Being built from relative motions, the
metric ignores any fixed offset between the two trajectories' frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom3d import RigidTransform, rotation_angle

TIME_MATCH_TOL = 1e-3  # seconds


class EmptyOverlap(ValueError):
    """No timestamps match between the trajectories."""


class DeltaTooLarge(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Timestamped poses with strictly increasing times (seconds)."""

    times: np.ndarray
    poses: tuple[RigidTransform, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        if len(t) != len(self.poses):
            raise ValueError("times and poses differ in length")
        if len(t) > 1 and not (np.diff(t) > 0).all():
            raise ValueError("timestamps must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "poses", tuple(self.poses))

    def __len__(self):
        return len(self.poses)

    @classmethod
    def from_pairs(cls, pairs) -> "Trajectory":
        pairs = list(pairs)
        return cls(np.array([t for t, _ in pairs]), tuple(p for _, p in pairs))


@dataclass(frozen=True)
class ErrorSummary:
    rmse: float
    mean: float
    median: float
    max: float
    sd: float

    def as_rows(self):
        return [
            ("rmse", self.rmse),
            ("mean", self.mean),
            ("median", self.median),
            ("max", self.max),
            ("sd", self.sd),
        ]


def _align(estimate: Trajectory, reference: Trajectory):
    """Pair poses whose timestamps match within TIME_MATCH_TOL."""
    est_pairs = []
    ref_pairs = []
    j = 0
    for i, t in enumerate(estimate.times):
        while j < len(reference) and reference.times[j] < t - TIME_MATCH_TOL:
            j += 1
        if j < len(reference) and abs(reference.times[j] - t) <= TIME_MATCH_TOL:
            est_pairs.append(estimate.poses[i])
            ref_pairs.append(reference.poses[j])
            j += 1
    return est_pairs, ref_pairs


def rpe(estimate: Trajectory, reference: Trajectory, delta: int = 1):
    """Per-step relative pose errors.

    Returns (translational errors in meters, rotational errors in degrees),
    one entry per aligned index k with k + delta in range.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    est, ref = _align(estimate, reference)
    if not est:
        raise EmptyOverlap("no matching timestamps")
    if len(est) <= delta:
        raise DeltaTooLarge(f"{len(est)} aligned poses, delta {delta}")
    t_err = []
    r_err = []
    for k in range(len(est) - delta):
        ref_rel = ref[k].invert() @ ref[k + delta]
        est_rel = est[k].invert() @ est[k + delta]
        err = ref_rel.invert() @ est_rel
        t_err.append(float(np.linalg.norm(err.translation)))
        r_err.append(rotation_angle(err))
    return t_err, r_err


def summarize(errors) -> ErrorSummary:
    """RMSE, mean, median, max and population standard deviation.

    Median is the lower middle element for even-length inputs, which keeps
    the statistic an actual sample value.
    """
    values = np.asarray(list(errors), dtype=float)
    if values.size == 0:
        raise EmptyInput("no error samples")
    if not np.isfinite(values).all() or (values < 0).any():
        raise ValueError("errors must be finite and non-negative")
    ordered = np.sort(values)
    return ErrorSummary(
        rmse=float(math.sqrt(np.mean(values**2))),
        mean=float(np.mean(values)),
        median=float(ordered[(len(ordered) - 1) // 2]),
        max=float(values.max()),
        sd=float(values.std()),
    )


def write_summary_csv(path, summaries: dict[str, ErrorSummary]) -> None:
    """One row per (metric, statistic), e.g. metric "translational_m"."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric,statistic,value\n")
        for metric, summary in summaries.items():
            for stat, value in summary.as_rows():
                fh.write(f"{metric},{stat},{value!r}\n")


def write_error_curve_csv(path, label: str, errors) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"step,{label}\n")
        for k, e in enumerate(errors):
            fh.write(f"{k},{e!r}\n")


def write_trajectory_csv(path, trajectory: Trajectory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time,x,y,z\n")
        for t, pose in zip(trajectory.times, trajectory.poses):
            x, y, z = pose.translation
            fh.write(f"{t!r},{x!r},{y!r},{z!r}\n")


def write_gnuplot_script(path, trajectory_csvs, error_csvs) -> None:
    """A gnuplot script plotting the emitted CSVs side by side."""
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 1200,500",
        "set output 'rpe_report.png'",
        "set multiplot layout 1,2",
        "set title 'Trajectories (x vs z)'",
        "plot "
        + ", ".join(f"'{p}' using 2:4 with lines" for p in trajectory_csvs),
        "set title 'RPE per step'",
        "plot " + ", ".join(f"'{p}' using 1:2 with lines" for p in error_csvs),
        "unset multiplot",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
