import queue
import time

import numpy as np
import pytest

from arcoord.coordination import SessionMode
from arcoord.polygon import Polygon2, area
from arcoord.protocol import (
    ErrorMessage,
    Intersection,
    Membership,
    PeerPose,
    PlaneBoundary,
    PoseUpdate,
    PoseWire,
    Register,
    Welcome,
    encode,
)
from arcoord.server import (
    CoordinationServer,
    DegenerateBoundary,
    ModeMismatch,
    Session,
    UnknownUser,
)
from arcoord.simclient import SessionClient, silent

SQUARE = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
SHIFTED = ((0.5, 0.5), (1.5, 0.5), (1.5, 1.5), (0.5, 1.5))
FAR_AWAY = ((9.0, 9.0), (10.0, 9.0), (10.0, 10.0), (9.0, 10.0))


def register(session, mode=SessionMode.CLASSROOM):
    return session.register(Register(mode))


def test_first_and_second_join():
    session = Session()
    uid0, out = register(session)
    assert uid0 == 0
    welcome = out[0][1]
    assert isinstance(welcome, Welcome)
    assert welcome.user_id == 0 and welcome.total_users == 1

    uid1, out = register(session)
    assert uid1 == 1
    membership = [m for _, m in out if isinstance(m, Membership)]
    targets = [uid for uid, m in out if isinstance(m, Membership)]
    assert sorted(targets) == [0, 1]
    assert all(m.total_users == 2 and m.user_ids == (0, 1) for m in membership)


def test_mode_mismatch():
    session = Session()
    register(session, SessionMode.CLASSROOM)
    with pytest.raises(ModeMismatch):
        register(session, SessionMode.COLLABORATION)


def test_id_density_after_sequential_joins():
    session = Session()
    ids = [register(session)[0] for _ in range(6)]
    assert ids == list(range(6))


def test_pose_relay_two_and_three_users():
    session = Session()
    a, _ = register(session)
    b, _ = register(session)
    msg = PoseUpdate(user_id=a, seq=1, pose=PoseWire.identity())
    out = session.pose_update(a, msg)
    assert [uid for uid, _ in out] == [b]
    relayed = out[0][1]
    assert isinstance(relayed, PeerPose)
    assert relayed.user_id == a and relayed.seq == 1

    c, _ = register(session)
    out = session.pose_update(a, PoseUpdate(a, 2, PoseWire.identity()))
    assert sorted(uid for uid, _ in out) == [b, c]


def test_relay_preserves_pose_bytes():
    session = Session()
    a, _ = register(session)
    register(session)
    pose = PoseWire((0.1234567890123456, -2.5, 3.25), (0.7071067811865476, 0.0, 0.7071067811865475, 0.0))
    out = session.pose_update(a, PoseUpdate(a, 1, pose))
    relayed = out[0][1]
    assert encode(PeerPose(a, 1, pose))[4:] == encode(relayed)[4:]
    assert relayed.pose is pose


def test_stale_seq_dropped_and_counted():
    session = Session()
    a, _ = register(session)
    register(session)
    session.pose_update(a, PoseUpdate(a, 5, PoseWire.identity()))
    out = session.pose_update(a, PoseUpdate(a, 3, PoseWire.identity()))
    assert out == []
    assert session.state.drop_count == 1
    out = session.pose_update(a, PoseUpdate(a, 5, PoseWire.identity()))
    assert out == [] and session.state.drop_count == 2


def test_pose_from_unregistered_or_spoofed_user():
    session = Session()
    a, _ = register(session)
    with pytest.raises(UnknownUser):
        session.pose_update(99, PoseUpdate(99, 1, PoseWire.identity()))
    with pytest.raises(UnknownUser):
        session.pose_update(a, PoseUpdate(a + 1, 1, PoseWire.identity()))


def test_single_boundary_is_its_own_intersection():
    session = Session()
    a, _ = register(session)
    out = session.plane_boundary(a, PlaneBoundary(a, SQUARE))
    assert [uid for uid, _ in out] == [a]
    inter = out[0][1]
    assert isinstance(inter, Intersection)
    assert area(Polygon2(inter.vertices)) == pytest.approx(1.0, abs=1e-9)


def test_two_boundaries_intersect():
    session = Session()
    a, _ = register(session)
    b, _ = register(session)
    session.plane_boundary(a, PlaneBoundary(a, SQUARE))
    out = session.plane_boundary(b, PlaneBoundary(b, SHIFTED))
    inter = out[0][1]
    assert area(Polygon2(inter.vertices)) == pytest.approx(0.25, abs=1e-9)
    assert sorted(uid for uid, _ in out) == [a, b]


def test_disjoint_boundary_broadcasts_empty():
    session = Session()
    a, _ = register(session)
    b, _ = register(session)
    session.plane_boundary(a, PlaneBoundary(a, SQUARE))
    out = session.plane_boundary(b, PlaneBoundary(b, FAR_AWAY))
    inter = out[0][1]
    assert inter.vertices == ()


def test_boundary_rehulled_defensively():
    session = Session()
    a, _ = register(session)
    disordered = ((0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.5, 0.2), (0.0, 1.0))
    out = session.plane_boundary(a, PlaneBoundary(a, disordered))
    inter = out[0][1]
    assert area(Polygon2(inter.vertices)) == pytest.approx(1.0, abs=1e-9)


def test_degenerate_boundary_rejected():
    session = Session()
    a, _ = register(session)
    with pytest.raises(DegenerateBoundary):
        session.plane_boundary(a, PlaneBoundary(a, ((0.0, 0.0), (1.0, 1.0), (2.0, 2.0))))


def test_disconnect_updates_membership_and_intersection():
    session = Session()
    a, _ = register(session)
    b, _ = register(session)
    small = ((0.2, 0.2), (0.4, 0.2), (0.4, 0.4), (0.2, 0.4))
    session.plane_boundary(a, PlaneBoundary(a, SQUARE))
    session.plane_boundary(b, PlaneBoundary(b, small))
    area_before = area(session.state.current_intersection)
    out = session.disconnect(b)
    memberships = [m for _, m in out if isinstance(m, Membership)]
    assert memberships and memberships[0].total_users == 1
    intersections = [m for _, m in out if isinstance(m, Intersection)]
    assert intersections
    assert area(session.state.current_intersection) >= area_before - 1e-12


def test_last_user_leaving_resets_session():
    session = Session()
    a, _ = register(session)
    session.plane_boundary(a, PlaneBoundary(a, SQUARE))
    session.disconnect(a)
    assert session.state.current_intersection is None
    assert session.state.users == {}
    uid, _ = register(session)
    assert uid == 0  # ids restart for a fresh session


def test_broadcast_counts():
    session = Session()
    ids = [register(session)[0] for _ in range(4)]
    out = session.pose_update(ids[0], PoseUpdate(ids[0], 1, PoseWire.identity()))
    assert len(out) == 3  # everyone but the sender


# -- live TCP --------------------------------------------------------------


def test_tcp_register_pose_and_boundary_exchange():
    server = CoordinationServer(("127.0.0.1", 0), log=silent).start()
    try:
        a = SessionClient(server.address)
        b = SessionClient(server.address)
        assert a.register(SessionMode.CLASSROOM) == 0
        assert b.register(SessionMode.CLASSROOM) == 1
        a.wait_for(lambda: a.total_users == 2, "membership")
        b.wait_for(lambda: b.total_users == 2, "membership")

        a.send_pose(1, PoseWire.identity())
        b.wait_for(lambda: b.latest_peer_seq.get(0) == 1, "peer pose")

        a.send_boundary(np.array(SQUARE))
        b.send_boundary(np.array(SHIFTED))
        a.wait_for(lambda: a.intersections_received >= 2, "intersections")
        b.wait_for(lambda: b.intersections_received >= 2, "intersections")
        assert area(Polygon2(a.latest_intersection)) == pytest.approx(0.25, abs=1e-9)
        assert a.latest_intersection == b.latest_intersection

        a.close()
        b.wait_for(lambda: b.total_users == 1, "departure membership")
    finally:
        server.stop()


def test_tcp_mode_mismatch_gets_error():
    server = CoordinationServer(("127.0.0.1", 0), mode=SessionMode.CLASSROOM, log=silent).start()
    try:
        c = SessionClient(server.address)
        with pytest.raises(Exception) as info:
            c.register(SessionMode.COLLABORATION)
        assert "mode_mismatch" in str(info.value)
        c.close()
    finally:
        server.stop()


def test_tcp_unregistered_pose_gets_error():
    server = CoordinationServer(("127.0.0.1", 0), log=silent).start()
    try:
        c = SessionClient(server.address)
        c.user_id = 0  # pretend, without registering
        c.send_pose(1, PoseWire.identity())
        c.wait_for(lambda: c.last_error is not None or c.closed, "error reply")
        assert c.last_error is not None and c.last_error.code == "not_registered"
        c.close()
    finally:
        server.stop()


def test_send_queue_overflow_disconnects(monkeypatch):
    from arcoord import server as server_mod

    events = []
    server = CoordinationServer(("127.0.0.1", 0), log=events.append).start()
    try:
        victim = SessionClient(server.address)
        victim.register(SessionMode.CLASSROOM)
        conn = server._conns[0]
        # fill the bounded queue faster than the writer can drain it
        monkeypatch.setattr(server_mod.protocol, "send_message", lambda *a: time.sleep(10))
        for i in range(server_mod.SEND_QUEUE_DEPTH + 8):
            server._enqueue(conn, ErrorMessage("spam", str(i)))
        assert conn.closed.is_set()
        assert any("event=overflow" in e for e in events)
    finally:
        server.stop()
