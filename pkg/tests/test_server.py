import json
import threading

import pytest

from conftest import KEY, loaded, make_client
from sope import protocol as P
from sope.cipher import TestCipher
from sope.client import Client, ServerError
from sope.geometry import Point, Rect
from sope.pager import PageError
from sope.server import (Connection, LoopbackTransport, RWLock, Store, TcpServer, TcpTransport,
                         parse_address)

CIPHER = TestCipher(KEY)


def test_first_insert_into_empty_store():
    store = Store.memory(2)
    conn = Connection(store)
    replies = conn.handle(P.BeginInsert(1))
    assert replies == [P.Node(True, [])]
    replies = conn.handle(P.LeafPosition(0, P.Status.NEW, CIPHER.encrypt(10, 0)))
    assert replies == [P.Node(True, [])]
    replies = conn.handle(P.LeafPosition(0, P.Status.NEW, CIPHER.encrypt(20, 1)))
    assert replies == [P.Encoding(0, 0), P.Encoding(1, 0), P.Ack()]
    assert store.count == 1 and store.rtree.point_search((0, 0)) == {1}


def test_existing_coordinate_adds_no_key():
    client, store = make_client()
    client.insert(Point(1, (100, 100)))
    client.insert(Point(2, (100, 200)))
    assert store.trees[0].key_count == 1 and store.trees[1].key_count == 2


def test_duplicate_id_rejected_before_any_change(ref_points):
    client, store = loaded(ref_points)
    images = [p.image() for _, p in store.pagers()]
    with pytest.raises(ServerError) as err:
        client.insert(Point(5, (1, 2)))
    assert err.value.code == P.ErrorCode.DUPLICATE_ID
    assert [p.image() for _, p in store.pagers()] == images
    assert client.point_query((450, 450))


def test_abandoned_insert_leaves_store_untouched(ref_points):
    client, store = loaded(ref_points)
    images = [p.image() for _, p in store.pagers()]
    conn = Connection(store)
    conn.handle(P.BeginInsert(99))
    conn.handle(P.LeafPosition(0, P.Status.NEW, CIPHER.encrypt(1, 0)))
    # A malformed reply on the second axis aborts the whole session.
    assert isinstance(conn.handle(P.ChooseChild(0))[0], P.Error)
    assert [p.image() for _, p in store.pagers()] == images
    assert store.count == 28


def test_protocol_errors(ref_points):
    _, store = loaded(ref_points)
    conn = Connection(store)
    err = conn.handle(P.ChooseChild(0))[0]
    assert isinstance(err, P.Error) and err.code == P.ErrorCode.UNKNOWN_KIND
    conn.handle(P.BeginPointQuery())
    err = conn.handle(P.LeafPosition(99, P.Status.ABSENT))[0]
    assert isinstance(err, P.Error) and err.code == P.ErrorCode.PROTOCOL
    conn.handle(P.BeginPointQuery())
    err = conn.handle(P.LeafPosition(0, P.Status.NEW, CIPHER.encrypt(1, 0)))[0]
    assert err.code == P.ErrorCode.PROTOCOL
    err = conn.handle_frame(b"\x00\x00\x00\x00\xfe")[0]
    assert err.code == P.ErrorCode.PROTOCOL
    # The connection is usable after every error.
    assert isinstance(conn.handle(P.StatsRequest())[0], P.Stats)


def test_k_zero_is_bad_parameter(ref_points):
    _, store = loaded(ref_points)
    err = Connection(store).handle(P.BeginGlobalSkyline(0))[0]
    assert isinstance(err, P.Error) and err.code == P.ErrorCode.BAD_PARAMETER


def test_point_query_exits_early(ref_client):
    assert ref_client.point_query((600, 600))
    assert not ref_client.point_query((601, 600))
    assert not ref_client.point_query((100, 999))


def test_global_skyline_session_matches_oracle(ref_points, ref_client):
    from sope.oracle import oracle_k_global_skyline

    layers = ref_client.global_skyline((450, 450), 1)
    assert {p.id for p in layers[0]} == oracle_k_global_skyline(ref_points, (450, 450), 1)[0]


def test_stats_lines(ref_points):
    client, _ = loaded(ref_points)
    rows = [json.loads(line) for line in client.stats().splitlines()]
    assert [r["tree"] for r in rows] == ["axis0", "axis1", "rtree"]
    distinct = [len({p.coords[axis] for p in ref_points}) for axis in (0, 1)]
    assert [r["entries"] for r in rows] == distinct + [28]


def test_rwlock_excludes_writers():
    lock = RWLock()
    order = []
    with lock.shared():
        t = threading.Thread(target=lambda: (lock.exclusive().__enter__(), order.append("w")))
        t.start()
        t.join(0.1)
        assert order == []
        order.append("r")
    t.join(1)
    assert order == ["r", "w"]


def test_parse_address():
    assert parse_address("127.0.0.1:80") == ("127.0.0.1", 80)
    assert parse_address(":0") == ("127.0.0.1", 0)


def test_tcp_round_trip(ref_points):
    store = Store.memory(2)
    server = TcpServer(store, ("127.0.0.1", 0))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        clients = [Client(TcpTransport(*server.server_address), TestCipher(KEY), 2)
                   for _ in range(2)]
        for p in ref_points:
            clients[p.id % 2].insert(p)
        assert {p.id for p in clients[0].skyline()} == {1, 15, 18}
        hits = clients[1].range_query(Rect((100, 100), (300, 400)))
        assert sorted(p.id for p in hits) == [1, 2, 4, 11, 22, 27]
        for c in clients:
            c.transport.close()
    finally:
        server.shutdown()
        server.server_close()


def test_store_persistence(tmp_path, ref_points):
    d = str(tmp_path / "pages")
    store = Store.open(d, 2, branching=4)
    client = Client(LoopbackTransport(store), TestCipher(KEY), 2)
    for p in ref_points:
        client.insert(p)
    before = sorted(p.id for p in client.skyline())
    store.close()

    store = Store.open(d)
    assert store.count == 28 and store.trees[0].branching == 4
    client = Client(LoopbackTransport(store), TestCipher(KEY), 2)
    assert sorted(p.id for p in client.skyline()) == before
    assert client.point_query((600, 600))
    with pytest.raises(PageError):
        Store.open(d, branching=8)
    store.close()


def test_store_refuses_bad_magic(tmp_path):
    d = tmp_path / "pages"
    Store.open(str(d)).close()
    data = (d / "axis0.bpt").read_bytes()
    (d / "axis0.bpt").write_bytes(b"BROKEN!!" + data[8:])
    with pytest.raises(PageError):
        Store.open(str(d))
