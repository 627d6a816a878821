"""Coordination server: membership, pose relay, shared plane intersection.

``Session`` is a pure state machine with no I/O; every handler returns the
messages to deliver as ``(user_id, message)`` pairs. ``CoordinationServer``
wraps it in a TCP listener. All handler calls are serialized under one lock,
so session state is never mutated concurrently; per-connection socket I/O
runs on its own reader and writer threads.
"""

from __future__ import annotations

import queue
import socket
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import protocol
from .coordination import SessionMode
from .polygon import DegenerateInput, Polygon2, convex_hull, intersect_all
from .protocol import (
    ErrorMessage,
    Intersection,
    Membership,
    NonMonotonicSeq,
    PeerPose,
    PlaneBoundary,
    PoseUpdate,
    PoseWire,
    Register,
    Welcome,
    WireMessage,
)

SEND_QUEUE_DEPTH = 64
DEFAULT_BIND = ("127.0.0.1", 7400)


def log_line(line: str) -> None:
    """Default event sink: one line to stdout, flushed immediately so the
    log stays usable through pipes."""
    print(line, flush=True)


class ModeMismatch(ValueError):
    """Join request for a different mode than the running session."""


class UnknownUser(ValueError):
    """Message from a connection that is not registered."""


class DegenerateBoundary(ValueError):
    """Uploaded boundary has fewer than 3 distinct vertices."""


Directives = list[tuple[int, WireMessage]]


@dataclass
class UserRecord:
    user_id: int
    last_pose: Optional[PoseWire] = None
    last_seq: Optional[int] = None
    boundary: Optional[Polygon2] = None


@dataclass
class SessionState:
    mode: Optional[SessionMode] = None
    users: dict[int, UserRecord] = field(default_factory=dict)
    next_id: int = 0
    current_intersection: Optional[Polygon2] = None
    drop_count: int = 0


class Session:
    """Session logic; callers must serialize access."""

    def __init__(self, mode: Optional[SessionMode] = None):
        self.state = SessionState(mode=mode)

    @property
    def user_ids(self) -> list[int]:
        return sorted(self.state.users)

    def _membership(self) -> Membership:
        ids = self.user_ids
        return Membership(total_users=len(ids), user_ids=tuple(ids))

    def _broadcast(self, msg: WireMessage, exclude: Optional[int] = None) -> Directives:
        return [(uid, msg) for uid in self.user_ids if uid != exclude]

    def _recompute_intersection(self) -> None:
        boundaries = [u.boundary for u in self.state.users.values() if u.boundary is not None]
        self.state.current_intersection = intersect_all(boundaries) if boundaries else None

    def register(self, msg: Register) -> tuple[int, Directives]:
        """Admit a user: assign the next id and announce the new membership."""
        st = self.state
        if st.mode is None:
            st.mode = msg.mode
        elif msg.mode is not st.mode:
            raise ModeMismatch(
                f"session runs {st.mode.value}, join requested {msg.mode.value}"
            )
        user_id = st.next_id
        st.next_id += 1
        st.users[user_id] = UserRecord(user_id=user_id)
        out: Directives = [
            (user_id, Welcome(user_id=user_id, total_users=len(st.users), mode=st.mode))
        ]
        out.extend(self._broadcast(self._membership()))
        return user_id, out

    def pose_update(self, sender_id: int, msg: PoseUpdate) -> Directives:
        """Store the sender's latest pose and relay it to everyone else.

        Stale sequence numbers are dropped and counted, not errors that kill
        the connection.
        """
        st = self.state
        record = st.users.get(sender_id)
        if record is None:
            raise UnknownUser(f"user {sender_id} is not registered")
        if msg.user_id != sender_id:
            raise UnknownUser(
                f"pose claims user {msg.user_id} but connection is user {sender_id}"
            )
        if record.last_seq is not None and msg.seq <= record.last_seq:
            st.drop_count += 1
            return []
        record.last_seq = msg.seq
        record.last_pose = msg.pose
        relay = PeerPose(user_id=sender_id, seq=msg.seq, pose=msg.pose)
        return self._broadcast(relay, exclude=sender_id)

    def plane_boundary(self, sender_id: int, msg: PlaneBoundary) -> Directives:
        """Store a user's table boundary and rebroadcast the new intersection.

        The incoming vertex list is re-hulled defensively, so disordered or
        slightly non-convex uploads still yield a valid convex boundary.
        """
        st = self.state
        record = st.users.get(sender_id)
        if record is None:
            raise UnknownUser(f"user {sender_id} is not registered")
        if msg.user_id != sender_id:
            raise UnknownUser(
                f"boundary claims user {msg.user_id} but connection is user {sender_id}"
            )
        try:
            record.boundary = convex_hull(msg.vertices)
        except DegenerateInput as exc:
            raise DegenerateBoundary(str(exc)) from None
        self._recompute_intersection()
        reply = Intersection(
            vertices=protocol.boundary_vertices(self.state.current_intersection.vertices)
        )
        return self._broadcast(reply)

    def disconnect(self, user_id: int) -> Directives:
        """Drop a user, announce the shrunken membership, and refresh the
        intersection for whoever is left."""
        st = self.state
        if user_id not in st.users:
            return []
        had_boundary = st.users[user_id].boundary is not None
        del st.users[user_id]
        if not st.users:
            st.next_id = 0
            st.current_intersection = None
            return []
        out = self._broadcast(self._membership())
        if had_boundary:
            self._recompute_intersection()
            if st.current_intersection is not None:
                reply = Intersection(
                    vertices=protocol.boundary_vertices(st.current_intersection.vertices)
                )
                out.extend(self._broadcast(reply))
        return out


class _Connection:
    def __init__(self, sock: socket.socket, peer: str):
        self.sock = sock
        self.peer = peer
        self.user_id: Optional[int] = None
        self.outq: queue.Queue = queue.Queue(maxsize=SEND_QUEUE_DEPTH)
        self.closed = threading.Event()

    def close(self):
        if not self.closed.is_set():
            self.closed.set()
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()


class CoordinationServer:
    """TCP front end for one coordination session.

    The session mode is pinned at construction or adopted from the first
    registrant. Events (joins, leaves, drops) are logged as key=value lines.
    """

    def __init__(
        self,
        bind: tuple[str, int] = DEFAULT_BIND,
        mode: Optional[SessionMode] = None,
        log: Callable[[str], None] = log_line,
    ):
        self._session = Session(mode)
        self._lock = threading.Lock()
        self._log = log
        self._listener = socket.create_server(bind)
        self._listener.settimeout(0.25)  # lets the accept loop notice stop()
        self._conns: dict[int, _Connection] = {}  # user_id -> connection
        self._threads: list[threading.Thread] = []
        self._accept_thread: Optional[threading.Thread] = None
        self._stopping = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        return self._listener.getsockname()[:2]

    @property
    def session(self) -> Session:
        return self._session

    def start(self) -> "CoordinationServer":
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="arcoord-accept", daemon=True
        )
        self._accept_thread.start()
        self._log(f"event=listening address={self.address[0]}:{self.address[1]}")
        return self

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            conns = list(self._conns.values())
        for conn in conns:
            self._shutdown_conn(conn)
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)
        for t in list(self._threads):
            t.join(timeout=5)

    def serve_forever(self) -> None:
        """Run until interrupted (for the ``serve`` command)."""
        if self._accept_thread is None:
            self.start()
        try:
            while not self._stopping.is_set():
                self._stopping.wait(timeout=0.5)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # -- internals ---------------------------------------------------------

    def _accept_loop(self):
        while not self._stopping.is_set():
            try:
                sock, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(sock, f"{addr[0]}:{addr[1]}")
            reader = threading.Thread(
                target=self._reader_loop, args=(conn,), daemon=True
            )
            writer = threading.Thread(
                target=self._writer_loop, args=(conn,), daemon=True
            )
            self._threads.extend([reader, writer])
            writer.start()
            reader.start()

    def _writer_loop(self, conn: _Connection):
        # A None sentinel means "flush what is queued, then close"; it lets
        # a final ERROR reach the peer before the socket goes away.
        while True:
            msg = conn.outq.get()
            if msg is None:
                conn.close()
                return
            if conn.closed.is_set():
                return
            try:
                protocol.send_message(conn.sock, msg)
            except OSError:
                conn.close()
                return

    def _shutdown_conn(self, conn: _Connection):
        try:
            conn.outq.put_nowait(None)
        except queue.Full:
            conn.close()

    def _enqueue(self, conn: _Connection, msg: WireMessage):
        try:
            conn.outq.put_nowait(msg)
        except queue.Full:
            # Back-pressure policy: a client that cannot keep up is cut off.
            self._log(f"event=overflow user={conn.user_id} peer={conn.peer}")
            conn.close()

    def _deliver(self, directives: Directives):
        for uid, msg in directives:
            target = self._conns.get(uid)
            if target is not None:
                self._enqueue(target, msg)

    def _reader_loop(self, conn: _Connection):
        try:
            while not conn.closed.is_set():
                try:
                    msg = protocol.recv_message(conn.sock)
                except (ConnectionResetError, OSError):
                    break
                except protocol.ProtocolError as exc:
                    self._log(f"event=protocol_error peer={conn.peer} error={exc}")
                    break
                if not self._dispatch(conn, msg):
                    break
        finally:
            self._drop_connection(conn)

    def _dispatch(self, conn: _Connection, msg: WireMessage) -> bool:
        """Handle one message; returns False when the connection must close."""
        with self._lock:
            if isinstance(msg, Register):
                if conn.user_id is not None:
                    self._enqueue(
                        conn, ErrorMessage("already_registered", "connection already has a user id")
                    )
                    return False
                try:
                    user_id, out = self._session.register(msg)
                except ModeMismatch as exc:
                    self._enqueue(conn, ErrorMessage("mode_mismatch", str(exc)))
                    return False
                conn.user_id = user_id
                self._conns[user_id] = conn
                self._log(
                    f"event=join user={user_id} total={len(self._session.state.users)} peer={conn.peer}"
                )
                self._deliver(out)
                return True
            if conn.user_id is None:
                self._enqueue(conn, ErrorMessage("not_registered", "REGISTER first"))
                return False
            if isinstance(msg, PoseUpdate):
                try:
                    before = self._session.state.drop_count
                    out = self._session.pose_update(conn.user_id, msg)
                    if self._session.state.drop_count > before:
                        self._log(
                            f"event=drop user={conn.user_id} seq={msg.seq} "
                            f"drops={self._session.state.drop_count}"
                        )
                except (UnknownUser, NonMonotonicSeq) as exc:
                    self._enqueue(conn, ErrorMessage("bad_pose_update", str(exc)))
                    return False
                self._deliver(out)
                return True
            if isinstance(msg, PlaneBoundary):
                try:
                    out = self._session.plane_boundary(conn.user_id, msg)
                except DegenerateBoundary as exc:
                    self._enqueue(conn, ErrorMessage("degenerate_boundary", str(exc)))
                    return True  # recoverable; keep the connection
                except UnknownUser as exc:
                    self._enqueue(conn, ErrorMessage("unknown_user", str(exc)))
                    return False
                self._deliver(out)
                return True
            self._enqueue(
                conn,
                ErrorMessage("unexpected_type", f"{type(msg).__name__} not valid client to server"),
            )
            return False

    def _drop_connection(self, conn: _Connection):
        self._shutdown_conn(conn)
        with self._lock:
            if conn.user_id is None:
                return
            uid = conn.user_id
            conn.user_id = None
            if self._conns.get(uid) is conn:
                del self._conns[uid]
            out = self._session.disconnect(uid)
            self._log(
                f"event=leave user={uid} total={len(self._session.state.users)}"
            )
            self._deliver(out)
