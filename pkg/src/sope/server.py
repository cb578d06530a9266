"""Server endpoint: d per-axis B+-trees plus one R-tree, driven over the wire.

The server holds no key and never compares ciphertexts. Each interactive
session is a generator that yields the messages to send and receives the
client's next message; its return value is the final reply.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import socketserver
import threading
from contextlib import contextmanager

from . import protocol as P
from . import query
from .bptree import INF, BNodeCodec, BPlusTree, ProtocolViolation, page_branching
from .pager import MemoryFile, PageError, PageFile, Pager
from .rtree import DuplicateId, RNodeCodec, RTree

log = logging.getLogger(__name__)


class SessionError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def shared(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                self._cond.notify_all()

    @contextmanager
    def exclusive(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


class Store:
    """All server-side state. Holds only ciphertexts and encodings."""

    def __init__(self, trees, rtree, directory=None, durable=True):
        self.trees = trees
        self.rtree = rtree
        self.d = len(trees)
        self.directory = directory
        self.durable = durable
        self.lock = RWLock()

    @classmethod
    def memory(cls, d: int, branching: int = None, rtree_fanout=(None, None), trace=None):
        branching = branching or page_branching()
        trees = [BPlusTree(Pager(BNodeCodec(), MemoryFile(), trace=trace), branching, axis)
                 for axis in range(d)]
        rtree = RTree(Pager(RNodeCodec(d), MemoryFile(), trace=trace), d, *rtree_fanout)
        return cls(trees, rtree, durable=False)

    @classmethod
    def open(cls, directory: str, d: int = 2, branching: int = None, durable=True):
        """Open the page files in ``directory``, creating them if absent."""
        os.makedirs(directory, exist_ok=True)
        rpath = os.path.join(directory, "rtree.rt")
        if os.path.exists(rpath) and os.path.getsize(rpath) > 0:
            rtree = RTree.open(Pager(None, PageFile(rpath)))
            trees = []
            for axis in range(rtree.d):
                path = os.path.join(directory, f"axis{axis}.bpt")
                if not os.path.exists(path):
                    raise PageError(f"missing page file {path}")
                tree = BPlusTree.open(Pager(BNodeCodec(), PageFile(path)))
                if tree.axis != axis:
                    raise PageError(f"{path} holds axis {tree.axis}")
                trees.append(tree)
            if branching is not None and any(t.branching != branching for t in trees):
                raise PageError("stored branching factor differs from the requested one")
            store = cls(trees, rtree, directory, durable)
            store._check_consistent()
            return store
        branching = branching or page_branching()
        trees = [BPlusTree(Pager(BNodeCodec(), PageFile(os.path.join(directory, f"axis{i}.bpt"))),
                           branching, i) for i in range(d)]
        rtree = RTree(Pager(RNodeCodec(d), PageFile(rpath)), d)
        store = cls(trees, rtree, directory, durable)
        store.commit()
        return store

    def _check_consistent(self):
        if self.rtree.count and any(t.key_count == 0 for t in self.trees):
            raise PageError("R-tree holds points but an axis tree is empty")

    def commit(self):
        if self.directory is None:
            return
        for tree in self.trees:
            tree.commit(self.durable)
        self.rtree.commit(self.durable)

    def close(self):
        for tree in self.trees:
            tree.pager.close()
        self.rtree.pager.close()

    @property
    def count(self) -> int:
        return self.rtree.count

    def pagers(self):
        named = [(f"axis{i}", t.pager) for i, t in enumerate(self.trees)]
        return named + [("rtree", self.rtree.pager)]

    def reset_stats(self):
        for _, pager in self.pagers():
            pager.stats.reset()

    def metrics(self) -> str:
        """One JSON object per tree: page I/O since the last reset, size and depth."""
        levels = [t.height + 1 for t in self.trees] + [self.rtree.height]
        counts = [t.key_count for t in self.trees] + [self.rtree.count]
        return "".join(
            json.dumps({"tree": name, "reads": p.stats.reads, "writes": p.stats.writes,
                        "pages": p.page_count, "levels": lv, "entries": n}) + "\n"
            for (name, p), lv, n in zip(self.pagers(), levels, counts))

    def page_counts(self) -> dict:
        return {name: p.page_count for name, p in self.pagers()}


# -- sessions -------------------------------------------------------------------

def _expect(msg, cls):
    if not isinstance(msg, cls):
        raise SessionError(P.ErrorCode.PROTOCOL,
                           f"expected {cls.__name__}, got {type(msg).__name__}")
    return msg


def _descend(tree: BPlusTree):
    """Client-driven walk from the root to a leaf.

    Returns ``(pids, steps, leaf, LeafPosition)``.
    """
    pids = [tree.root]
    steps = []
    node = tree.read_root()
    while True:
        reply = yield [P.Node(node.leaf, list(node.keys))]
        if node.leaf:
            pos = _expect(reply, P.LeafPosition)
            if not 0 <= pos.position <= len(node.keys):
                raise SessionError(P.ErrorCode.PROTOCOL, f"leaf position {pos.position} out of range")
            if pos.status == P.Status.PRESENT and pos.position == len(node.keys):
                raise SessionError(P.ErrorCode.PROTOCOL, "PRESENT names an empty slot")
            return pids, steps, node, pos
        choice = _expect(reply, P.ChooseChild)
        try:
            child = tree.descend_step(node, choice.index)
        except ProtocolViolation as exc:
            raise SessionError(P.ErrorCode.PROTOCOL, str(exc)) from None
        steps.append(choice.index)
        pids.append(child)
        node = tree.pager.read(child)


def _virtual2(tree, steps, leaf, pos) -> int:
    """Doubled encoding of a query coordinate; odd when it is absent."""
    j = pos.position
    if pos.status == P.Status.PRESENT:
        return 2 * tree.encoding_of(steps, j)
    if not leaf.keys:
        return 0
    if j < len(leaf.keys):
        return 2 * tree.encoding_of(steps, j) - 1
    return 2 * tree.encoding_of(steps, j - 1) + 1


def _lower_corner(tree, steps, leaf, pos) -> int:
    j = pos.position
    if j < len(leaf.keys):
        return tree.encoding_of(steps, j)
    return INF


def _upper_corner(tree, steps, leaf, pos) -> int:
    j = pos.position
    if j == len(leaf.keys):
        return INF
    e = tree.encoding_of(steps, j)
    return e if pos.status == P.Status.PRESENT else e - 1


def _query_point2(store):
    q2 = []
    for tree in store.trees:
        _, steps, leaf, pos = yield from _descend(tree)
        _query_status(pos)
        q2.append(_virtual2(tree, steps, leaf, pos))
    return tuple(q2)


def _query_box(store):
    corners = []
    for corner in (_lower_corner, _upper_corner):
        values = []
        for tree in store.trees:
            _, steps, leaf, pos = yield from _descend(tree)
            _query_status(pos)
            values.append(corner(tree, steps, leaf, pos))
        corners.append(tuple(values))
    return corners[0], corners[1]


def _query_status(pos):
    if pos.status == P.Status.NEW:
        raise SessionError(P.ErrorCode.PROTOCOL, "query descents cannot insert")


def _results(store, hits, layer=0):
    return [(ident, layer, tuple(t.lookup_ciphertext(e) for t, e in zip(store.trees, enc)))
            for ident, enc in hits]


def insert_session(store: Store, begin: P.BeginInsert):
    if begin.id in store.rtree.ids:
        raise SessionError(P.ErrorCode.DUPLICATE_ID, f"object id {begin.id} already stored")
    staged = []
    for tree in store.trees:
        pids, steps, leaf, pos = yield from _descend(tree)
        if pos.status == P.Status.ABSENT:
            raise SessionError(P.ErrorCode.PROTOCOL, "insert descents must insert or match")
        staged.append((pids, steps, pos))
    # Every axis has been validated; from here on nothing may fail.
    encodings = []
    for axis, (tree, (pids, steps, pos)) in enumerate(zip(store.trees, staged)):
        if pos.status == P.Status.PRESENT:
            encodings.append(tree.encoding_of(steps, pos.position))
            continue
        enc, mrange = tree.insert_at(pids, steps, pos.position, pos.cipher)
        store.rtree.axis_range_update(axis, mrange)
        encodings.append(enc)
    store.rtree.insert_point(begin.id, encodings)
    store.commit()
    return [P.Encoding(axis, e) for axis, e in enumerate(encodings)] + [P.Ack()]


def point_query_session(store: Store, begin):
    encodings = []
    for tree in store.trees:
        _, steps, leaf, pos = yield from _descend(tree)
        _query_status(pos)
        if pos.status == P.Status.ABSENT:
            return [P.NotFound()]
        encodings.append(tree.encoding_of(steps, pos.position))
    return [P.BoolResult(bool(store.rtree.point_search(encodings)))]


def range_query_session(store: Store, begin):
    lo, hi = yield from _query_box(store)
    hits = store.rtree.range_search(lo, hi) if all(a <= b for a, b in zip(lo, hi)) else []
    return [P.ResultSet(store.d, _results(store, hits))]


def skyline_session(store: Store, begin):
    return [P.ResultSet(store.d, _results(store, query.skyline(store.rtree)))]
    yield  # pragma: no cover - makes this a generator


def _layered(store, layers):
    items = []
    for i, layer in enumerate(layers):
        items.extend(_results(store, layer, i))
    return [P.ResultSet(store.d, items)]


def global_skyline_session(store: Store, begin: P.BeginGlobalSkyline):
    if begin.k < 1:
        raise SessionError(P.ErrorCode.BAD_PARAMETER, "k must be at least 1")
    q2 = yield from _query_point2(store)
    return _layered(store, query.k_global_skyline(store.rtree, q2, begin.k))


def constrained_session(store: Store, begin: P.BeginConstrained):
    box = (yield from _query_box(store)) if begin.box else None
    if begin.k == 0:
        return [P.ResultSet(store.d, _results(store, query.skyline(store.rtree, box)))]
    q2 = yield from _query_point2(store)
    return _layered(store, query.k_global_skyline(store.rtree, q2, begin.k, box))


def stats_session(store: Store, begin):
    return [P.Stats(store.metrics())]
    yield  # pragma: no cover


SESSIONS = {
    P.BeginInsert: (insert_session, True),
    P.BeginPointQuery: (point_query_session, False),
    P.BeginRangeQuery: (range_query_session, False),
    P.BeginSkyline: (skyline_session, False),
    P.BeginGlobalSkyline: (global_skyline_session, False),
    P.BeginConstrained: (constrained_session, False),
    P.StatsRequest: (stats_session, False),
}


class Connection:
    """Server side of one connection: at most one session in flight."""

    def __init__(self, store: Store):
        self.store = store
        self._session = None
        self._lock_cm = None

    def handle(self, msg) -> list:
        """Feed one client message; returns the messages to send back."""
        try:
            if self._session is None:
                return self._start(msg)
            return self._step(self._session.send, msg)
        except SessionError as exc:
            self._abort()
            return [P.Error(exc.code, str(exc))]
        except (P.ProtocolError, ProtocolViolation, query.QueryError, DuplicateId) as exc:
            self._abort()
            return [P.Error(P.ErrorCode.PROTOCOL, str(exc))]
        except Exception as exc:
            log.exception("session failed")
            self._abort()
            return [P.Error(P.ErrorCode.INTERNAL, f"{type(exc).__name__}: {exc}")]

    def handle_frame(self, frame: bytes) -> list:
        try:
            msg = P.decode(frame)
        except P.ProtocolError as exc:
            self._abort()
            return [P.Error(P.ErrorCode.PROTOCOL, str(exc))]
        return self.handle(msg)

    def _start(self, msg):
        entry = SESSIONS.get(type(msg))
        if entry is None:
            raise SessionError(P.ErrorCode.UNKNOWN_KIND, f"{type(msg).__name__} cannot open a session")
        factory, mutating = entry
        lock = self.store.lock.exclusive() if mutating else self.store.lock.shared()
        lock.__enter__()
        self._lock_cm = lock
        self._session = factory(self.store, msg)
        return self._step(lambda _: next(self._session), None)

    def _step(self, advance, msg):
        try:
            return advance(msg)
        except StopIteration as stop:
            self._finish()
            return stop.value
        except BaseException:
            self._abort()
            raise

    def _finish(self):
        self._session = None
        if self._lock_cm is not None:
            cm, self._lock_cm = self._lock_cm, None
            cm.__exit__(None, None, None)

    def _abort(self):
        if self._session is not None:
            self._session.close()
        self._finish()

    def close(self):
        self._abort()


# -- transports -------------------------------------------------------------------

class LoopbackTransport:
    """In-process transport with the same framing as TCP.

    ``recorder`` (a list) receives ``('c2s' | 's2c', frame bytes)`` pairs.
    """

    def __init__(self, store: Store, recorder=None):
        self.conn = Connection(store)
        self.recorder = recorder
        self._inbox = []

    def send(self, msg) -> None:
        frame = P.encode(msg)
        if self.recorder is not None:
            self.recorder.append(("c2s", frame))
        for reply in self.conn.handle_frame(frame):
            out = P.encode(reply)
            if self.recorder is not None:
                self.recorder.append(("s2c", out))
            self._inbox.append(out)

    def recv(self):
        if not self._inbox:
            raise P.ProtocolError("no reply pending")
        return P.decode(self._inbox.pop(0))

    def close(self):
        self.conn.close()


class TcpTransport:
    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._file = self.sock.makefile("rb")

    def send(self, msg) -> None:
        self.sock.sendall(P.encode(msg))

    def _recv_exact(self, n):
        data = self._file.read(n)
        if not data:
            return None
        if len(data) != n:
            raise P.ProtocolError("connection closed inside a frame")
        return data

    def recv(self):
        frame = P.read_frame(self._recv_exact)
        if frame is None:
            raise P.ProtocolError("server closed the connection")
        return P.decode(frame)

    def close(self):
        self._file.close()
        self.sock.close()


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        conn = Connection(self.server.store)
        self.request.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        reader = self.request.makefile("rb")

        def recv_exact(n):
            data = reader.read(n)
            if not data:
                return None
            if len(data) != n:
                raise P.ProtocolError("connection closed inside a frame")
            return data

        try:
            while True:
                frame = P.read_frame(recv_exact)
                if frame is None:
                    break
                replies = conn.handle_frame(frame)
                self.request.sendall(b"".join(P.encode(m) for m in replies))
        except (OSError, P.ProtocolError) as exc:
            log.info("connection dropped: %s", exc)
        finally:
            conn.close()
            reader.close()


class TcpServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, store: Store, address):
        self.store = store
        super().__init__(address, _Handler)


def parse_address(text: str):
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)
