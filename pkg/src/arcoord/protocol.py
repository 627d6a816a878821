"""Wire protocol for the coordination session.

Frames are a 4-byte big-endian unsigned payload length followed by a UTF-8
JSON object with a fixed key order per message type ("type" first). The
text payload keeps the format debuggable and language-portable; at table
scale a pose is under 200 bytes, so compactness is irrelevant.

Framing is fail-fast: any malformed frame is grounds for closing the
connection, and no resynchronization is attempted.
"""

from __future__ import annotations

import json
import math
import socket
import struct
from dataclasses import dataclass
from typing import Union

import numpy as np

from .coordination import SessionMode
from .geom3d import RigidTransform, quat_from_rotation, rotation_from_quat

MAX_PAYLOAD = 1 << 20  # 1 MiB
_HEADER = struct.Struct(">I")

# Quaternions within this of unit length pass through bit-exact so relays
# preserve payload bytes; larger defects up to QUAT_REJECT_TOL renormalize.
_QUAT_EXACT_TOL = 1e-12
QUAT_REJECT_TOL = 1e-6


class ProtocolError(Exception):
    pass


class MalformedFrame(ProtocolError):
    pass


class UnknownType(ProtocolError):
    pass


class InvalidPose(ProtocolError):
    pass


class NonMonotonicSeq(ProtocolError):
    pass


class OversizeMessage(ProtocolError):
    pass


@dataclass(frozen=True)
class PoseWire:
    """Pose on the wire: translation in meters plus a unit quaternion
    (w, x, y, z) canonicalized to w >= 0."""

    translation: tuple[float, float, float]
    rotation: tuple[float, float, float, float]

    @classmethod
    def from_transform(cls, t: RigidTransform) -> "PoseWire":
        q = quat_from_rotation(t.rotation)
        return cls(tuple(float(v) for v in t.translation), tuple(float(v) for v in q))

    def to_transform(self) -> RigidTransform:
        return RigidTransform(rotation_from_quat(self.rotation), self.translation)

    @classmethod
    def identity(cls) -> "PoseWire":
        return cls((0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0))


@dataclass(frozen=True)
class Register:
    mode: SessionMode


@dataclass(frozen=True)
class Welcome:
    user_id: int
    total_users: int
    mode: SessionMode


@dataclass(frozen=True)
class Membership:
    total_users: int
    user_ids: tuple[int, ...]


@dataclass(frozen=True)
class PoseUpdate:
    user_id: int
    seq: int
    pose: PoseWire


@dataclass(frozen=True)
class PeerPose:
    user_id: int
    seq: int
    pose: PoseWire


@dataclass(frozen=True)
class PlaneBoundary:
    user_id: int
    vertices: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Intersection:
    vertices: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ErrorMessage:
    code: str
    text: str


WireMessage = Union[
    Register,
    Welcome,
    Membership,
    PoseUpdate,
    PeerPose,
    PlaneBoundary,
    Intersection,
    ErrorMessage,
]


def _pose_obj(pose: PoseWire) -> dict:
    return {"translation": list(pose.translation), "rotation": list(pose.rotation)}


def _message_obj(msg: WireMessage) -> dict:
    if isinstance(msg, Register):
        return {"type": "REGISTER", "mode": msg.mode.value}
    if isinstance(msg, Welcome):
        return {
            "type": "WELCOME",
            "user_id": msg.user_id,
            "total_users": msg.total_users,
            "mode": msg.mode.value,
        }
    if isinstance(msg, Membership):
        return {
            "type": "MEMBERSHIP",
            "total_users": msg.total_users,
            "user_ids": list(msg.user_ids),
        }
    if isinstance(msg, PoseUpdate):
        return {
            "type": "POSE_UPDATE",
            "user_id": msg.user_id,
            "seq": msg.seq,
            "pose": _pose_obj(msg.pose),
        }
    if isinstance(msg, PeerPose):
        return {
            "type": "PEER_POSE",
            "user_id": msg.user_id,
            "seq": msg.seq,
            "pose": _pose_obj(msg.pose),
        }
    if isinstance(msg, PlaneBoundary):
        return {
            "type": "PLANE_BOUNDARY",
            "user_id": msg.user_id,
            "vertices": [list(v) for v in msg.vertices],
        }
    if isinstance(msg, Intersection):
        return {"type": "INTERSECTION", "vertices": [list(v) for v in msg.vertices]}
    if isinstance(msg, ErrorMessage):
        return {"type": "ERROR", "code": msg.code, "text": msg.text}
    raise TypeError(f"not a wire message: {type(msg).__name__}")


def encode(msg: WireMessage) -> bytes:
    """Length-prefixed frame for one message."""
    payload = json.dumps(_message_obj(msg), separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_PAYLOAD:
        raise OversizeMessage(f"payload is {len(payload)} bytes (max {MAX_PAYLOAD})")
    return _HEADER.pack(len(payload)) + payload


def _require(obj: dict, keys: tuple[str, ...], kind: str) -> None:
    got = set(obj.keys())
    expected = set(keys) | {"type"}
    if got != expected:
        raise MalformedFrame(f"{kind}: fields {sorted(got)} != {sorted(expected)}")


def _as_int(value, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise MalformedFrame(f"{what} must be an integer")
    return value


def _as_float(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedFrame(f"{what} must be a number")
    value = float(value)
    if not math.isfinite(value):
        raise MalformedFrame(f"{what} must be finite")
    return value


def _parse_mode(value) -> SessionMode:
    if not isinstance(value, str):
        raise MalformedFrame("mode must be a string")
    try:
        return SessionMode.parse(value)
    except ValueError as exc:
        raise MalformedFrame(str(exc)) from None


def _parse_pose(obj) -> PoseWire:
    if not isinstance(obj, dict) or set(obj.keys()) != {"translation", "rotation"}:
        raise MalformedFrame("pose must have translation and rotation")
    t = obj["translation"]
    q = obj["rotation"]
    if not isinstance(t, list) or len(t) != 3:
        raise MalformedFrame("pose translation must be 3 numbers")
    if not isinstance(q, list) or len(q) != 4:
        raise MalformedFrame("pose rotation must be 4 numbers")
    t = tuple(_as_float(v, "translation") for v in t)
    q = tuple(_as_float(v, "rotation") for v in q)
    norm = math.sqrt(sum(v * v for v in q))
    if abs(norm - 1.0) > QUAT_REJECT_TOL:
        raise InvalidPose(f"quaternion norm {norm:.6g} too far from 1")
    if q[0] < 0.0:
        raise InvalidPose("quaternion w must be non-negative (canonical form)")
    if abs(norm - 1.0) > _QUAT_EXACT_TOL:
        q = tuple(v / norm for v in q)
    return PoseWire(t, q)


def _parse_vertices(value) -> tuple[tuple[float, float], ...]:
    if not isinstance(value, list):
        raise MalformedFrame("vertices must be a list")
    out = []
    for v in value:
        if not isinstance(v, list) or len(v) != 2:
            raise MalformedFrame("each vertex must be [x, z]")
        out.append((_as_float(v[0], "vertex x"), _as_float(v[1], "vertex z")))
    return tuple(out)


def decode_payload(payload: bytes) -> WireMessage:
    """Parse one frame payload (without the length prefix)."""
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(f"payload is not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or "type" not in obj:
        raise MalformedFrame("payload is not a message object")
    kind = obj["type"]
    if kind == "REGISTER":
        _require(obj, ("mode",), kind)
        return Register(_parse_mode(obj["mode"]))
    if kind == "WELCOME":
        _require(obj, ("user_id", "total_users", "mode"), kind)
        return Welcome(
            _as_int(obj["user_id"], "user_id"),
            _as_int(obj["total_users"], "total_users"),
            _parse_mode(obj["mode"]),
        )
    if kind == "MEMBERSHIP":
        _require(obj, ("total_users", "user_ids"), kind)
        ids = obj["user_ids"]
        if not isinstance(ids, list):
            raise MalformedFrame("user_ids must be a list")
        return Membership(
            _as_int(obj["total_users"], "total_users"),
            tuple(_as_int(i, "user id") for i in ids),
        )
    if kind == "POSE_UPDATE":
        _require(obj, ("user_id", "seq", "pose"), kind)
        return PoseUpdate(
            _as_int(obj["user_id"], "user_id"),
            _as_int(obj["seq"], "seq"),
            _parse_pose(obj["pose"]),
        )
    if kind == "PEER_POSE":
        _require(obj, ("user_id", "seq", "pose"), kind)
        return PeerPose(
            _as_int(obj["user_id"], "user_id"),
            _as_int(obj["seq"], "seq"),
            _parse_pose(obj["pose"]),
        )
    if kind == "PLANE_BOUNDARY":
        _require(obj, ("user_id", "vertices"), kind)
        return PlaneBoundary(
            _as_int(obj["user_id"], "user_id"),
            _parse_vertices(obj["vertices"]),
        )
    if kind == "INTERSECTION":
        _require(obj, ("vertices",), kind)
        return Intersection(_parse_vertices(obj["vertices"]))
    if kind == "ERROR":
        _require(obj, ("code", "text"), kind)
        if not isinstance(obj["code"], str) or not isinstance(obj["text"], str):
            raise MalformedFrame("ERROR code and text must be strings")
        return ErrorMessage(obj["code"], obj["text"])
    raise UnknownType(f"unknown message type {kind!r}")


def decode(frame: bytes) -> WireMessage:
    """Parse exactly one complete frame (prefix plus payload)."""
    if len(frame) < _HEADER.size:
        raise MalformedFrame(f"frame is {len(frame)} bytes, shorter than the prefix")
    (length,) = _HEADER.unpack_from(frame)
    if length > MAX_PAYLOAD:
        raise MalformedFrame(f"declared length {length} exceeds {MAX_PAYLOAD}")
    if len(frame) != _HEADER.size + length:
        raise MalformedFrame(
            f"frame has {len(frame) - _HEADER.size} payload bytes, header says {length}"
        )
    return decode_payload(frame[_HEADER.size:])


class SeqTracker:
    """Per-sender strictly-increasing sequence enforcement."""

    def __init__(self):
        self._last: dict[int, int] = {}

    def observe(self, sender_id: int, seq: int) -> None:
        last = self._last.get(sender_id)
        if last is not None and seq <= last:
            raise NonMonotonicSeq(f"seq {seq} after {last} from user {sender_id}")
        self._last[sender_id] = seq

    def last_seen(self, sender_id: int):
        return self._last.get(sender_id)


def send_message(sock: socket.socket, msg: WireMessage) -> None:
    sock.sendall(encode(msg))


def _recv_exactly(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            if remaining == n and not chunks:
                raise ConnectionResetError("connection closed")
            raise MalformedFrame("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_message(sock: socket.socket) -> WireMessage:
    """Blocking read of one message; raises ConnectionResetError on clean EOF
    between frames and MalformedFrame on a truncated or bad frame."""
    header = _recv_exactly(sock, _HEADER.size)
    (length,) = _HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise MalformedFrame(f"declared length {length} exceeds {MAX_PAYLOAD}")
    payload = _recv_exactly(sock, length) if length else b""
    return decode_payload(payload)


def boundary_vertices(vertices) -> tuple[tuple[float, float], ...]:
    """Normalize an (N, 2) array or sequence of pairs for the wire."""
    arr = np.asarray(vertices, dtype=float).reshape(-1, 2)
    return tuple((float(x), float(z)) for x, z in arr)
