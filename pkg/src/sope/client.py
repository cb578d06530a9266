"""Key-holding client.

The client decrypts whatever nodes the server sends, makes every plaintext
comparison, and refines server answers for the queries that need exact
distances. Nothing it sends carries a plaintext coordinate: only child
indices, leaf positions, ciphertexts and query parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import protocol as P
from .bptree import choose_child, leaf_position
from .geometry import (DimensionMismatch, Point, Rect, Segment, bisector_split,
                       distance_sq, dynamically_dominates)

CNN_MAX_DEPTH = 64
CNN_TOLERANCE = 1e-9


class ServerError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(f"server error {code}: {message}")
        self.code = code


class ContinuousNNError(Exception):
    """Recursion cap hit; ``partial`` holds the tiles computed so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class NNResultSegment:
    id: int
    t0: float
    t1: float


class _PlainView:
    """Keys of a node, decrypted on demand so a binary search only opens
    the handful of keys it probes."""

    __slots__ = ("client", "blocks", "axis")

    def __init__(self, client, blocks, axis):
        self.client = client
        self.blocks = blocks
        self.axis = axis

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, i):
        return self.client.decrypt(self.blocks[i], self.axis)


class Client:
    def __init__(self, transport, cipher, d: int):
        self.transport = transport
        self.cipher = cipher
        self.d = d
        self._plain = {}             # (axis, ciphertext) -> value
        self.round_trips = 0

    # -- plumbing -----------------------------------------------------------
    def _send(self, msg):
        self.round_trips += 1
        self.transport.send(msg)

    def _recv(self, *expected):
        msg = self.transport.recv()
        if isinstance(msg, P.Error):
            raise ServerError(msg.code, msg.message)
        if expected and not isinstance(msg, expected):
            names = "/".join(c.__name__ for c in expected)
            raise P.ProtocolError(f"expected {names}, got {type(msg).__name__}")
        return msg

    def decrypt(self, block: bytes, axis: int) -> int:
        key = (axis, block)
        value = self._plain.get(key)
        if value is None:
            value = self._plain[key] = self.cipher.decrypt(block, axis)
        return value

    def _check(self, coords):
        if len(coords) != self.d:
            raise DimensionMismatch(f"expected {self.d} coordinates, got {len(coords)}")

    def _descend(self, axis: int, value, insert: bool):
        """Answer the server's NODE messages down one axis tree."""
        while True:
            node = self._recv(P.Node)
            keys = _PlainView(self, node.keys, axis)
            if not node.leaf:
                self._send(P.ChooseChild(choose_child(keys, value)))
                continue
            pos, present = leaf_position(keys, value)
            if present:
                self._send(P.LeafPosition(pos, P.Status.PRESENT))
            elif insert:
                self._send(P.LeafPosition(pos, P.Status.NEW, self.cipher.encrypt(value, axis)))
            else:
                self._send(P.LeafPosition(pos, P.Status.ABSENT))
            return present

    def _encode_point(self, coords):
        for axis, v in enumerate(coords):
            self._descend(axis, v, False)

    def _encode_box(self, box: Rect):
        for corner in (box.lo, box.hi):
            self._encode_point(corner)

    def _points(self, result: P.ResultSet) -> list:
        return [Point(ident, tuple(self.decrypt(c, a) for a, c in enumerate(ciphers)))
                for ident, _, ciphers in result.items]

    def _layers(self, result: P.ResultSet, k: int) -> list:
        layers = [[] for _ in range(k)]
        for ident, layer, ciphers in result.items:
            layers[layer].append(Point(ident, tuple(self.decrypt(c, a) for a, c in enumerate(ciphers))))
        return layers

    # -- insertion ----------------------------------------------------------
    def insert(self, point: Point) -> tuple:
        """Store ``point``; returns its encodings after the insertion."""
        self._check(point.coords)
        self._send(P.BeginInsert(point.id))
        for axis, v in enumerate(point.coords):
            self._descend(axis, v, True)
        encodings = [self._recv(P.Encoding).value for _ in range(self.d)]
        self._recv(P.Ack)
        return tuple(encodings)

    # -- queries answered by the server alone --------------------------------
    def point_query(self, q) -> bool:
        self._check(q)
        self._send(P.BeginPointQuery())
        for axis, v in enumerate(q):
            if not self._descend(axis, v, False):
                self._recv(P.NotFound)
                return False
        return self._recv(P.BoolResult).value

    def range_query(self, box: Rect) -> list:
        self._check(box.lo)
        self._send(P.BeginRangeQuery())
        self._encode_box(box)
        return self._points(self._recv(P.ResultSet))

    def skyline(self) -> list:
        self._send(P.BeginSkyline())
        return self._points(self._recv(P.ResultSet))

    def constrained_skyline(self, box: Rect) -> list:
        self._check(box.lo)
        self._send(P.BeginConstrained(True, 0))
        self._encode_box(box)
        return self._points(self._recv(P.ResultSet))

    def global_skyline(self, q, k: int = 1) -> list:
        """Layers 0..k-1 of the global skyline w.r.t. ``q``."""
        self._check(q)
        if k < 1:
            raise ValueError("k must be at least 1")
        self._send(P.BeginGlobalSkyline(k))
        self._encode_point(q)
        return self._layers(self._recv(P.ResultSet), k)

    def constrained_global_skyline(self, box: Rect, q, k: int = 1) -> list:
        self._check(q)
        self._check(box.lo)
        if k < 1:
            raise ValueError("k must be at least 1")
        self._send(P.BeginConstrained(True, k))
        self._encode_box(box)
        self._encode_point(q)
        return self._layers(self._recv(P.ResultSet), k)

    def stats(self) -> str:
        self._send(P.StatsRequest())
        return self._recv(P.Stats).text

    # -- queries refined on the client ----------------------------------------
    def dynamic_skyline(self, q) -> list:
        candidates = self.global_skyline(q, 1)[0]
        return [p for p in candidates
                if not any(dynamically_dominates(r.coords, p.coords, q) for r in candidates)]

    @staticmethod
    def _nearest(candidates, q, k):
        ranked = sorted(((distance_sq(p.coords, q), p.id, p) for p in candidates),
                        key=lambda t: (t[0], t[1]))
        return [(p, dist) for dist, _, p in ranked[:k]]

    def knn(self, q, k: int) -> list:
        """``k`` nearest ``(Point, distance_sq)``; ties go to the smaller id."""
        layers = self.global_skyline(q, k)
        return self._nearest([p for layer in layers for p in layer], q, k)

    def constrained_knn(self, box: Rect, q, k: int) -> list:
        layers = self.constrained_global_skyline(box, q, k)
        return self._nearest([p for layer in layers for p in layer], q, k)

    def reverse_knn(self, q, k: int = 1) -> list:
        layers = self.global_skyline(q, k)
        fetched = [p for layer in layers for p in layer]
        q = tuple(q)

        def candidate(p):
            # Fewer than k fetched points strictly closer to p than q is.
            dq = distance_sq(p.coords, q)
            closer = 0
            for r in fetched:
                if r.id != p.id and sum((a - b) ** 2 for a, b in zip(p.coords, r.coords)) < dq:
                    closer += 1
                    if closer >= k:
                        return False
            return True

        survivors = {p.id for p in fetched if candidate(p)}
        # When q sits on a stored point, probe every fetched point so the
        # probes reveal nothing about which ones survived the local filter.
        coincides = any(p.coords == q for p in fetched)
        probes = fetched if coincides else [p for p in fetched if p.id in survivors]
        result = []
        for p in probes:
            others = [(r, dist) for r, dist in self.knn(p.coords, k + 1) if r.id != p.id][:k]
            if p.id not in survivors:
                continue
            if len(others) < k or distance_sq(p.coords, q) <= others[-1][1]:
                result.append(p)
        return result

    def continuous_1nn(self, seg: Segment) -> list:
        """Tiling of the parameter range [0, 1] by nearest neighbour."""
        self._check(seg.a)

        def nn(t):
            return self.knn(seg.at(t), 1)[0][0]

        def close(a, b, t):
            x = seg.at(t)
            da, db = distance_sq(a.coords, x), distance_sq(b.coords, x)
            return abs(da - db) <= CNN_TOLERANCE * max(da, db, 1.0)

        tiles = []

        def recurse(t0, a, t1, b, depth):
            if a.id == b.id or close(a, b, t1):
                tiles.append(NNResultSegment(a.id, t0, t1))
                return
            if close(a, b, t0):
                tiles.append(NNResultSegment(b.id, t0, t1))
                return
            if depth >= CNN_MAX_DEPTH:
                raise ContinuousNNError("continuous 1NN recursion cap reached", _merge(tiles))
            t = bisector_split(a.coords, b.coords, seg) if a.coords != b.coords else None
            if t is None or not t0 < t < t1:
                t = (t0 + t1) / 2.0
            m = nn(t)
            recurse(t0, a, t, m, depth + 1)
            recurse(t, m, t1, b, depth + 1)

        recurse(0.0, nn(0.0), 1.0, nn(1.0), 0)
        return _merge(tiles)


def _merge(tiles):
    out = []
    for tile in tiles:
        if out and tile.t1 - tile.t0 <= CNN_TOLERANCE:
            # Sliver below the tolerance: absorb it into its left neighbour.
            last = out[-1]
            out[-1] = NNResultSegment(last.id, last.t0, tile.t1)
            continue
        if out and out[-1].id == tile.id:
            out[-1] = NNResultSegment(tile.id, out[-1].t0, tile.t1)
        elif out and out[-1].t1 - out[-1].t0 <= CNN_TOLERANCE:
            out[-1] = NNResultSegment(tile.id, out[-1].t0, tile.t1)
        else:
            out.append(tile)
    # A sliver absorption can leave two equal neighbours side by side.
    merged = []
    for tile in out:
        if merged and merged[-1].id == tile.id:
            merged[-1] = NNResultSegment(tile.id, merged[-1].t0, tile.t1)
        else:
            merged.append(tile)
    return merged
