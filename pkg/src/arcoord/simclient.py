"""Simulated AR clients standing in for SLAM plus camera hardware.

A scenario describes a shared synthetic world: a table, a marker of known
size lying on it, a scripted camera trajectory, and noise levels. Each
client gets its own tracking frame anchored at its first camera pose, with
all translations shrunk by 1/slam_scale to model the unknown monocular
scale. The full client pipeline then runs against a coordination server:
recover the scale from the marker, fit the table plane, upload the table
boundary, and exchange plane-relative camera poses with the peers.

Noise draws are independent of the sigma values (unit draws scaled
afterwards), so two runs of one scenario that differ only in a sigma see
identical noise directions.
"""

from __future__ import annotations

import json
import math
import socket
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import protocol
from .calibration import (
    Correspondence,
    MarkerSpec,
    apply_scale,
    physical_distance,
    scale_factor,
    select_top_pair,
)
from .coordination import (
    SessionMode,
    UserSlot,
    camera_in_plane,
    collaboration_angle,
    effective_plane_pose,
    peer_in_local_slam,
)
from .geom3d import (
    RigidTransform,
    axis_angle,
    quat_from_rotation,
    rotation_from_quat,
)
from .planefit import RansacConfig, build_plane_frame, ransac_plane, refine_plane_lsq
from .polygon import convex_hull
from .protocol import (
    ErrorMessage,
    Intersection,
    Membership,
    PeerPose,
    PlaneBoundary,
    PoseUpdate,
    PoseWire,
    Register,
    Welcome,
)
from .server import CoordinationServer


class ConnectionFailed(RuntimeError):
    pass


class CalibrationFailed(RuntimeError):
    pass


class PlaneFitFailed(RuntimeError):
    pass


class OutOfRange(ValueError):
    """Requested time lies outside the trajectory span."""


def silent(_line: str) -> None:
    """Event-log sink that discards everything (for tests)."""


@dataclass(frozen=True)
class Table:
    """Rectangular tabletop; center.y is the tabletop height."""

    center: np.ndarray  # (3,) world coordinates
    width: float  # extent along x
    depth: float  # extent along z
    height: float  # tabletop y, equals center[1]

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if self.width <= 0 or self.depth <= 0:
            raise ValueError("table dimensions must be positive")
        if abs(c[1] - self.height) > 1e-9:
            raise ValueError("table center y must equal the tabletop height")

    @classmethod
    def at(cls, center_x: float, center_z: float, width: float, depth: float, height: float) -> "Table":
        return cls(np.array([center_x, height, center_z]), width, depth, height)


@dataclass(frozen=True)
class NoiseModel:
    pose_sigma_t: float = 0.0  # meters
    pose_sigma_r: float = 0.0  # degrees
    point_sigma: float = 0.0  # meters
    outlier_fraction: float = 0.0
    pixel_sigma: float = 0.0  # marker pixels

    def __post_init__(self):
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier_fraction must be in [0, 1]")
        for name in ("pose_sigma_t", "pose_sigma_r", "point_sigma", "pixel_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True, eq=False)
class Scenario:
    table: Table
    slam_scale: float
    trajectory: tuple  # ((time_s, RigidTransform), ...) world-frame camera poses
    noise: NoiseModel = NoiseModel()
    rng_seed: int = 0
    num_points: int = 400
    calibration_frames: int = 10
    marker: MarkerSpec = MarkerSpec(200.0, 200.0, 0.2, 0.2)
    room_min: np.ndarray = None
    room_max: np.ndarray = None

    def __post_init__(self):
        if self.slam_scale <= 0.0:
            raise ValueError("slam_scale must be positive")
        if self.num_points < 3:
            raise ValueError("num_points must be >= 3")
        traj = tuple((float(t), pose) for t, pose in self.trajectory)
        if not traj:
            raise ValueError("trajectory is empty")
        times = np.array([t for t, _ in traj])
        if len(times) > 1 and not (np.diff(times) > 0).all():
            raise ValueError("trajectory times must be strictly increasing")
        if not 1 <= self.calibration_frames < len(traj):
            raise ValueError("calibration_frames must leave frames to stream")
        object.__setattr__(self, "trajectory", traj)
        # Outliers default to a 1 m cube around the table center.
        rmin = self.room_min
        rmax = self.room_max
        if rmin is None:
            rmin = self.table.center - 0.5
        if rmax is None:
            rmax = self.table.center + 0.5
        rmin = np.asarray(rmin, dtype=float).reshape(3)
        rmax = np.asarray(rmax, dtype=float).reshape(3)
        if not (rmax > rmin).all():
            raise ValueError("room_max must exceed room_min componentwise")
        rmin.setflags(write=False)
        rmax.setflags(write=False)
        object.__setattr__(self, "room_min", rmin)
        object.__setattr__(self, "room_max", rmax)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.trajectory])

    @property
    def n_frames(self) -> int:
        return len(self.trajectory)

    @property
    def n_outliers(self) -> int:
        return round(self.num_points * self.noise.outlier_fraction)

    @property
    def n_surface_points(self) -> int:
        return self.num_points - self.n_outliers

    def with_noise(self, noise: NoiseModel) -> "Scenario":
        return replace(self, noise=noise)

    def with_seed(self, rng_seed: int) -> "Scenario":
        return replace(self, rng_seed=rng_seed)


@dataclass(frozen=True)
class SimFrame:
    """One simulated tracking update.

    ground_truth_pose is the exact metric camera pose in this client's
    tracking frame; slam_pose carries the injected noise and the 1/scale
    shrink. Map points are in (shrunk) tracking units.
    """

    index: int
    time: float
    ground_truth_pose: RigidTransform
    slam_pose: RigidTransform
    map_points: np.ndarray
    correspondences: Optional[tuple] = None


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> RigidTransform:
    """Camera pose at ``eye`` facing ``target``: +z forward, +y near ``up``."""
    eye = np.asarray(eye, dtype=float).reshape(3)
    fwd = np.asarray(target, dtype=float).reshape(3) - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("eye and target coincide")
    fwd = fwd / n
    right = np.cross(np.asarray(up, dtype=float), fwd)
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise ValueError("view direction is parallel to up")
    right = right / rn
    camera_up = np.cross(fwd, right)
    return RigidTransform(np.column_stack([right, camera_up, fwd]), eye)


def orbit_trajectory(
    table: Table,
    radius: float = 1.0,
    camera_height: float = 1.2,
    start_deg: float = -20.0,
    end_deg: float = 20.0,
    n_frames: int = 310,
    hz: float = 30.0,
) -> tuple:
    """Camera arc around the table at a fixed radius, always facing the
    table center. Bearings are measured in the xz-plane from +x."""
    out = []
    for k in range(n_frames):
        frac = k / max(n_frames - 1, 1)
        bearing = math.radians(start_deg + (end_deg - start_deg) * frac)
        eye = table.center + np.array(
            [radius * math.cos(bearing), camera_height - table.height, radius * math.sin(bearing)]
        )
        out.append((k / hz, look_at(eye, table.center)))
    return tuple(out)


def make_tabletop_scenario(
    rng_seed: int = 7,
    slam_scale: float = 1.0,
    noise: NoiseModel = NoiseModel(),
    n_frames: int = 310,
    num_points: int = 400,
) -> Scenario:
    """The default desk-scale scenario used by the demos and tests."""
    table = Table.at(0.0, 0.0, width=1.2, depth=0.9, height=0.7)
    return Scenario(
        table=table,
        slam_scale=slam_scale,
        trajectory=orbit_trajectory(table, n_frames=n_frames),
        noise=noise,
        rng_seed=rng_seed,
        num_points=num_points,
    )


def generate_scene(scenario: Scenario, client_index: int = 0) -> np.ndarray:
    """World-frame map points: surface samples first, then outliers.

    Surface geometry comes from a stream shared by all clients (the table is
    one physical object); measurement noise and spurious outlier points are
    per client. Deterministic for a fixed (seed, client_index).
    """
    t = scenario.table
    n_surf = scenario.n_surface_points
    shared = np.random.default_rng(np.random.SeedSequence(scenario.rng_seed, spawn_key=(0,)))
    xs = shared.uniform(t.center[0] - t.width / 2, t.center[0] + t.width / 2, n_surf)
    zs = shared.uniform(t.center[2] - t.depth / 2, t.center[2] + t.depth / 2, n_surf)
    surface = np.column_stack([xs, np.full(n_surf, t.height), zs])

    local = np.random.default_rng(
        np.random.SeedSequence(scenario.rng_seed, spawn_key=(1, client_index))
    )
    if scenario.noise.point_sigma > 0.0:
        surface = surface + scenario.noise.point_sigma * local.standard_normal((n_surf, 3))
    n_out = scenario.n_outliers
    outliers = local.uniform(scenario.room_min, scenario.room_max, (n_out, 3))
    return np.vstack([surface, outliers])


def _marker_template(scenario: Scenario):
    """Marker feature points: pixel location, world position, similarity.

    The marker lies flat on the tabletop, centered, width along +x and
    height along +z. The two best matches are opposite corners, which keeps
    the calibration baseline long.
    """
    m = scenario.marker
    mpp_w = m.width_meters / m.width_pixels
    mpp_h = m.height_meters / m.height_pixels
    entries = [
        ((0.0, 0.0), 0.99),
        ((m.width_pixels, m.height_pixels), 0.98),
        ((m.width_pixels, 0.0), 0.90),
        ((0.0, m.height_pixels), 0.85),
        ((m.width_pixels / 2, m.height_pixels / 2), 0.80),
    ]
    out = []
    c = scenario.table.center
    for (u, v), sim in entries:
        world = np.array(
            [
                c[0] + (u - m.width_pixels / 2) * mpp_w,
                scenario.table.height,
                c[2] + (v - m.height_pixels / 2) * mpp_h,
            ]
        )
        out.append(((u, v), world, sim))
    return out


class SimulatedSlam:
    """Deterministic pose/map source for one client in one scenario."""

    def __init__(self, scenario: Scenario, client_index: int = 0):
        self.scenario = scenario
        self.client_index = client_index
        self.anchor = scenario.trajectory[0][1]  # tracking origin = first camera pose
        self._anchor_inv = self.anchor.invert()
        world_points = generate_scene(scenario, client_index)
        self.map_points = self._anchor_inv.transform_points(world_points) / scenario.slam_scale
        self._marker = _marker_template(scenario)

    def _frame_rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(
                self.scenario.rng_seed, spawn_key=(2, self.client_index, index)
            )
        )

    def frame(self, index: int) -> SimFrame:
        sc = self.scenario
        if not 0 <= index < sc.n_frames:
            raise OutOfRange(f"frame {index} outside [0, {sc.n_frames})")
        t, gt_world = sc.trajectory[index]
        gt_slam = self._anchor_inv @ gt_world

        rng = self._frame_rng(index)
        # Fixed draw order keeps noise directions independent of the sigmas.
        unit_t = rng.standard_normal(3)
        rot_axis = rng.standard_normal(3)
        rot_mag = rng.standard_normal()
        noise = sc.noise

        rotation = gt_slam.rotation
        if noise.pose_sigma_r > 0.0:
            if np.linalg.norm(rot_axis) < 1e-12:
                rot_axis = np.array([1.0, 0.0, 0.0])
            wobble = axis_angle(rot_axis, noise.pose_sigma_r * rot_mag)
            rotation = rotation @ wobble.rotation
        translation = gt_slam.translation + noise.pose_sigma_t * unit_t
        slam_pose = RigidTransform(rotation, translation / sc.slam_scale)

        correspondences = None
        if index < sc.calibration_frames:
            pix_noise = rng.standard_normal((len(self._marker), 2)) * noise.pixel_sigma
            matches = []
            for i, (pixel, world, sim) in enumerate(self._marker):
                p = (pixel[0] + pix_noise[i, 0], pixel[1] + pix_noise[i, 1])
                map_point = self._anchor_inv.transform_point(world) / sc.slam_scale
                matches.append(Correspondence(p, map_point, sim))
            correspondences = tuple(matches)

        return SimFrame(
            index=index,
            time=t,
            ground_truth_pose=gt_slam,
            slam_pose=slam_pose,
            map_points=self.map_points,
            correspondences=correspondences,
        )


def simulate_slam_frame(scenario: Scenario, t: float, client_index: int = 0) -> SimFrame:
    """Frame nearest to time ``t``; OutOfRange outside the trajectory span."""
    times = scenario.times
    if t < times[0] - 1e-9 or t > times[-1] + 1e-9:
        raise OutOfRange(f"t={t} outside [{times[0]}, {times[-1]}]")
    index = int(np.argmin(np.abs(times - t)))
    return SimulatedSlam(scenario, client_index).frame(index)


# -- session client ---------------------------------------------------------


class SessionClient:
    """Protocol client with a receiver thread and thread-safe stores."""

    def __init__(self, address: tuple, timeout: float = 30.0):
        self.timeout = timeout
        try:
            self.sock = socket.create_connection(address, timeout=timeout)
        except OSError as exc:
            raise ConnectionFailed(f"cannot reach server at {address}: {exc}") from exc
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock.settimeout(None)  # receiver blocks until data or close()
        self.cv = threading.Condition()
        self.user_id: Optional[int] = None
        self.mode: Optional[SessionMode] = None
        self.total_users = 0
        self.user_ids: tuple = ()
        self.last_error: Optional[ErrorMessage] = None
        self.closed = False
        self.latest_peer_seq: dict[int, int] = {}
        self.peer_pose_log: list = []  # (user_id, seq, PoseWire, recv_monotonic)
        self.intersections_received = 0
        self.latest_intersection: Optional[tuple] = None
        self._rx = threading.Thread(target=self._receive_loop, daemon=True)
        self._rx.start()

    def _receive_loop(self):
        while True:
            try:
                msg = protocol.recv_message(self.sock)
            except (ConnectionResetError, OSError, protocol.ProtocolError):
                with self.cv:
                    self.closed = True
                    self.cv.notify_all()
                return
            now = time.monotonic()
            with self.cv:
                if isinstance(msg, Welcome):
                    self.user_id = msg.user_id
                    self.mode = msg.mode
                    self.total_users = msg.total_users
                elif isinstance(msg, Membership):
                    self.total_users = msg.total_users
                    self.user_ids = msg.user_ids
                elif isinstance(msg, PeerPose):
                    last = self.latest_peer_seq.get(msg.user_id)
                    if last is None or msg.seq > last:  # latest-wins
                        self.latest_peer_seq[msg.user_id] = msg.seq
                        self.peer_pose_log.append((msg.user_id, msg.seq, msg.pose, now))
                elif isinstance(msg, Intersection):
                    self.intersections_received += 1
                    self.latest_intersection = msg.vertices
                elif isinstance(msg, ErrorMessage):
                    self.last_error = msg
                self.cv.notify_all()

    def wait_for(self, predicate, what: str):
        deadline = time.monotonic() + self.timeout
        with self.cv:
            while not predicate():
                if self.last_error is not None:
                    raise ConnectionFailed(
                        f"server error {self.last_error.code}: {self.last_error.text}"
                    )
                if self.closed:
                    raise ConnectionFailed(f"connection closed while waiting for {what}")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ConnectionFailed(f"timed out waiting for {what}")
                self.cv.wait(timeout=min(remaining, 1.0))

    def register(self, mode: SessionMode) -> int:
        protocol.send_message(self.sock, Register(mode))
        self.wait_for(lambda: self.user_id is not None, "WELCOME")
        return self.user_id

    def send_pose(self, seq: int, pose: PoseWire):
        protocol.send_message(
            self.sock, PoseUpdate(user_id=self.user_id, seq=seq, pose=pose)
        )

    def send_boundary(self, vertices):
        protocol.send_message(
            self.sock,
            PlaneBoundary(user_id=self.user_id, vertices=protocol.boundary_vertices(vertices)),
        )

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


# -- client pipeline --------------------------------------------------------


@dataclass
class ClientReport:
    """Everything one simulated client saw, with wall-clock times excluded
    so identical runs produce identical files."""

    client_index: int
    user_id: int
    mode: SessionMode
    recovered_scale: float
    seat_angle_deg: float
    plane_pose: RigidTransform
    boundary: tuple
    intersection: Optional[tuple]
    own_track: list  # (time, metric pose in own tracking frame)
    relative_track: list  # (time, camera pose in the shared plane frame)
    ground_truth_track: list  # (time, world-frame pose)
    peer_tracks: dict = field(default_factory=dict)  # user_id -> [(time, pose)]
    peer_relative_tracks: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "client_index": self.client_index,
            "user_id": self.user_id,
            "mode": self.mode.value,
            "recovered_scale": self.recovered_scale,
            "seat_angle_deg": self.seat_angle_deg,
            "plane_pose": _pose_row(self.plane_pose),
            "boundary": [list(v) for v in self.boundary],
            "intersection": None
            if self.intersection is None
            else [list(v) for v in self.intersection],
            "own_track": [_track_row(t, p) for t, p in self.own_track],
            "relative_track": [_track_row(t, p) for t, p in self.relative_track],
            "ground_truth_track": [_track_row(t, p) for t, p in self.ground_truth_track],
            "peer_tracks": {
                str(uid): [_track_row(t, p) for t, p in track]
                for uid, track in sorted(self.peer_tracks.items())
            },
            "peer_relative_tracks": {
                str(uid): [_track_row(t, p) for t, p in track]
                for uid, track in sorted(self.peer_relative_tracks.items())
            },
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ClientReport":
        return cls(
            client_index=obj["client_index"],
            user_id=obj["user_id"],
            mode=SessionMode.parse(obj["mode"]),
            recovered_scale=obj["recovered_scale"],
            seat_angle_deg=obj["seat_angle_deg"],
            plane_pose=_pose_from_row(obj["plane_pose"]),
            boundary=tuple(tuple(v) for v in obj["boundary"]),
            intersection=None
            if obj["intersection"] is None
            else tuple(tuple(v) for v in obj["intersection"]),
            own_track=[_track_from_row(r) for r in obj["own_track"]],
            relative_track=[_track_from_row(r) for r in obj["relative_track"]],
            ground_truth_track=[_track_from_row(r) for r in obj["ground_truth_track"]],
            peer_tracks={
                int(uid): [_track_from_row(r) for r in track]
                for uid, track in obj["peer_tracks"].items()
            },
            peer_relative_tracks={
                int(uid): [_track_from_row(r) for r in track]
                for uid, track in obj["peer_relative_tracks"].items()
            },
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ClientReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


def _pose_row(pose: RigidTransform) -> list:
    q = quat_from_rotation(pose.rotation)
    t = pose.translation
    return [float(t[0]), float(t[1]), float(t[2]), float(q[0]), float(q[1]), float(q[2]), float(q[3])]


def _pose_from_row(row) -> RigidTransform:
    return RigidTransform(rotation_from_quat(row[3:7]), row[0:3])


def _track_row(t: float, pose: RigidTransform) -> list:
    return [float(t)] + _pose_row(pose)


def _track_from_row(row):
    return (row[0], _pose_from_row(row[1:8]))


class LockstepSync:
    """Barrier used to step all clients through the session phases and
    frames together, plus a registration baton so user ids are assigned in
    client-index order. Together they make multi-client runs deterministic."""

    def __init__(self, parties: int, timeout: float = 60.0):
        self._barrier = threading.Barrier(parties)
        self._timeout = timeout
        self._turns = [threading.Event() for _ in range(parties)]
        self._turns[0].set()

    def phase(self):
        self._barrier.wait(timeout=self._timeout)

    def wait_turn(self, index: int):
        if not self._turns[index].wait(timeout=self._timeout):
            raise RuntimeError(f"client {index} never got its registration turn")

    def pass_turn(self, index: int):
        if index + 1 < len(self._turns):
            self._turns[index + 1].set()


def run_client(
    scenario: Scenario,
    server_address: tuple,
    mode: SessionMode,
    client_index: int = 0,
    expected_clients: int = 1,
    sync: Optional[LockstepSync] = None,
) -> ClientReport:
    """Full client pipeline: calibrate, fit the plane, register, upload the
    boundary, stream poses, and collect peer avatars into a report."""
    slam = SimulatedSlam(scenario, client_index)
    frames = [slam.frame(k) for k in range(scenario.calibration_frames)]

    # Scale recovery from the first calibration frame's marker matches.
    try:
        first, second = select_top_pair(frames[0].correspondences)
        d_physic = physical_distance(scenario.marker, first.marker_pixel, second.marker_pixel)
        scale = scale_factor(d_physic, first.map_point, second.map_point)
    except ValueError as exc:
        raise CalibrationFailed(str(exc)) from exc

    # Plane fit on the map points accumulated over the calibration frames,
    # scaled into meters first so the inlier threshold stays metric.
    accumulated = np.unique(np.vstack([f.map_points for f in frames]), axis=0)
    metric_points = accumulated * scale
    seed = int(
        np.random.SeedSequence(scenario.rng_seed, spawn_key=(3, client_index)).generate_state(1)[0]
    )
    try:
        _, inlier_idx = ransac_plane(metric_points, RansacConfig(seed=seed))
        inliers = metric_points[inlier_idx]
        plane = refine_plane_lsq(inliers)
        camera0 = apply_scale(scale, frames[0].slam_pose)
        plane_frame = build_plane_frame(plane, camera0.translation)
    except (ValueError, RuntimeError) as exc:
        raise PlaneFitFailed(str(exc)) from exc
    plane_pose = plane_frame.pose

    client = SessionClient(server_address)
    try:
        user_id = client.register(mode)
        client.wait_for(
            lambda: client.total_users == expected_clients and len(client.user_ids) == expected_clients,
            f"membership of {expected_clients}",
        )
        ranked = sorted(client.user_ids)
        slot = UserSlot(user_id=ranked.index(user_id), total_users=expected_clients)
        seat_angle = collaboration_angle(slot) if mode is SessionMode.COLLABORATION else 0.0
        eff_pose = effective_plane_pose(plane_pose, mode, slot)
        if sync is not None:
            sync.phase()

        # Boundary: plane-frame hull of the inliers, dropping the (near zero)
        # y component.
        in_plane = eff_pose.invert().transform_points(inliers)
        boundary = convex_hull(in_plane[:, [0, 2]])
        client.send_boundary(boundary.vertices)
        client.wait_for(
            lambda: client.intersections_received >= expected_clients,
            "intersection broadcasts",
        )
        if sync is not None:
            sync.phase()

        peers = [uid for uid in ranked if uid != user_id]
        own_track = []
        relative_track = []
        ground_truth_track = []
        for k in range(scenario.calibration_frames, scenario.n_frames):
            fr = slam.frame(k)
            metric = apply_scale(scale, fr.slam_pose)
            rel = camera_in_plane(eff_pose, metric)
            client.send_pose(k, PoseWire.from_transform(rel))
            own_track.append((fr.time, metric))
            relative_track.append((fr.time, rel))
            ground_truth_track.append((fr.time, scenario.trajectory[k][1]))
            if sync is not None:
                client.wait_for(
                    lambda: all(client.latest_peer_seq.get(p, -1) >= k for p in peers),
                    f"peer poses for frame {k}",
                )
                sync.phase()

        times = scenario.times
        peer_tracks: dict[int, list] = {uid: [] for uid in peers}
        peer_relative_tracks: dict[int, list] = {uid: [] for uid in peers}
        with client.cv:
            log = sorted(client.peer_pose_log, key=lambda e: (e[0], e[1]))
        for uid, seq, pose_wire, _ in log:
            rel_pose = pose_wire.to_transform()
            avatar = peer_in_local_slam(eff_pose, rel_pose)
            peer_relative_tracks.setdefault(uid, []).append((float(times[seq]), rel_pose))
            peer_tracks.setdefault(uid, []).append((float(times[seq]), avatar))

        return ClientReport(
            client_index=client_index,
            user_id=user_id,
            mode=mode,
            recovered_scale=scale,
            seat_angle_deg=seat_angle,
            plane_pose=plane_pose,
            boundary=protocol.boundary_vertices(boundary.vertices),
            intersection=client.latest_intersection,
            own_track=own_track,
            relative_track=relative_track,
            ground_truth_track=ground_truth_track,
            peer_tracks=peer_tracks,
            peer_relative_tracks=peer_relative_tracks,
        )
    finally:
        client.close()


def run_session(
    scenario: Scenario,
    mode: SessionMode,
    n_clients: int,
    server_address: Optional[tuple] = None,
    log=silent,
) -> list:
    """Run n lockstep clients (self-hosting a server unless one is given)
    and return their reports ordered by client index."""
    own_server = None
    if server_address is None:
        own_server = CoordinationServer(("127.0.0.1", 0), mode=mode, log=log).start()
        server_address = own_server.address
    sync = LockstepSync(n_clients) if n_clients > 1 else None
    reports: list = [None] * n_clients
    errors: list = []

    def work(idx: int):
        try:
            reports[idx] = run_client(
                scenario,
                server_address,
                mode,
                client_index=idx,
                expected_clients=n_clients,
                sync=sync,
            )
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(i,), daemon=True) for i in range(n_clients)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=120)
    try:
        if errors:
            raise errors[0]
        if any(r is None for r in reports):
            raise RuntimeError("a client thread did not finish")
    finally:
        if own_server is not None:
            own_server.stop()
    return reports


def pose_relay_benchmark(
    n_clients: int = 3,
    hz: float = 30.0,
    duration_s: float = 30.0,
    log=silent,
) -> dict:
    """Free-running pose relay on loopback.

    Every client streams identity poses at the given rate; receivers
    timestamp arrivals, and the sender's monotonic send times give per-hop
    relay latencies. Returns counts and latency statistics in seconds.
    """
    server = CoordinationServer(("127.0.0.1", 0), mode=SessionMode.CLASSROOM, log=log).start()
    n_msgs = int(round(hz * duration_s))
    send_times: dict = {}
    lock = threading.Lock()
    clients = []
    try:
        for _ in range(n_clients):
            c = SessionClient(server.address)
            c.register(SessionMode.CLASSROOM)
            clients.append(c)
        for c in clients:
            c.wait_for(lambda: c.total_users == n_clients, "full membership")

        pose = PoseWire.identity()

        def stream(client: SessionClient):
            start = time.monotonic()
            for k in range(1, n_msgs + 1):
                with lock:
                    send_times[(client.user_id, k)] = time.monotonic()
                client.send_pose(k, pose)
                next_tick = start + k / hz
                pause = next_tick - time.monotonic()
                if pause > 0:
                    time.sleep(pause)

        threads = [threading.Thread(target=stream, args=(c,), daemon=True) for c in clients]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=duration_s + 30)

        expected_per_client = (n_clients - 1) * n_msgs
        deadline = time.monotonic() + 10.0
        for c in clients:
            while time.monotonic() < deadline:
                with c.cv:
                    if len(c.peer_pose_log) >= expected_per_client:
                        break
                time.sleep(0.01)

        latencies = []
        received = 0
        for c in clients:
            with c.cv:
                log_entries = list(c.peer_pose_log)
            received += len(log_entries)
            for uid, seq, _, recv_t in log_entries:
                latencies.append(recv_t - send_times[(uid, seq)])
        lat = np.array(latencies)
        return {
            "n_clients": n_clients,
            "hz": hz,
            "duration_s": duration_s,
            "sent": n_msgs * n_clients,
            "expected_deliveries": expected_per_client * n_clients,
            "received": received,
            "server_drops": server.session.state.drop_count,
            "latencies": lat,
            "mean_latency_s": float(lat.mean()) if len(lat) else float("nan"),
            "p99_latency_s": float(np.percentile(lat, 99)) if len(lat) else float("nan"),
        }
    finally:
        for c in clients:
            c.close()
        server.stop()


# -- scenario files ---------------------------------------------------------


def scenario_to_json_obj(scenario: Scenario) -> dict:
    t = scenario.table
    return {
        "table": {
            "center": [float(t.center[0]), float(t.center[2])],
            "width": t.width,
            "depth": t.depth,
            "height": t.height,
        },
        "room": {
            "min": [float(v) for v in scenario.room_min],
            "max": [float(v) for v in scenario.room_max],
        },
        "slam_scale": scenario.slam_scale,
        "num_points": scenario.num_points,
        "calibration_frames": scenario.calibration_frames,
        "rng_seed": scenario.rng_seed,
        "noise": {
            "pose_sigma_t": scenario.noise.pose_sigma_t,
            "pose_sigma_r": scenario.noise.pose_sigma_r,
            "point_sigma": scenario.noise.point_sigma,
            "outlier_fraction": scenario.noise.outlier_fraction,
            "pixel_sigma": scenario.noise.pixel_sigma,
        },
        "marker": {
            "width_pixels": scenario.marker.width_pixels,
            "height_pixels": scenario.marker.height_pixels,
            "width_meters": scenario.marker.width_meters,
            "height_meters": scenario.marker.height_meters,
        },
        "trajectory": [_track_row(t_, p) for t_, p in scenario.trajectory],
    }


def scenario_from_json_obj(obj: dict) -> Scenario:
    tb = obj["table"]
    table = Table.at(tb["center"][0], tb["center"][1], tb["width"], tb["depth"], tb["height"])
    noise = NoiseModel(**obj["noise"])
    marker = MarkerSpec(**obj["marker"])
    room = obj.get("room")
    return Scenario(
        table=table,
        slam_scale=obj["slam_scale"],
        trajectory=tuple(_track_from_row(r) for r in obj["trajectory"]),
        noise=noise,
        rng_seed=obj["rng_seed"],
        num_points=obj["num_points"],
        calibration_frames=obj["calibration_frames"],
        marker=marker,
        room_min=None if room is None else room["min"],
        room_max=None if room is None else room["max"],
    )


def save_scenario(path, scenario: Scenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_json_obj(scenario), fh, indent=1)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_json_obj(json.load(fh))
