"""Structural indistinguishability game.

Two insertion sequences with the same per-axis order pattern must leave the
server with byte-identical views when the cipher is replaced by positional
tokens: the same frames in both directions, the same page accesses and the
same page images after every session.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from .cipher import StubCipher
from .client import Client
from .geometry import Point
from .server import LoopbackTransport, Store


class GamePrecondition(ValueError):
    """The two sequences do not share an order pattern."""


def order_pattern(seq) -> tuple:
    """Per axis, each coordinate's rank among the distinct values seen so far,
    with a flag telling whether it equals one of them."""
    seq = [p.coords if isinstance(p, Point) else tuple(p) for p in seq]
    if not seq:
        return ()
    d = len(seq[0])
    pattern = []
    for axis in range(d):
        seen = []
        marks = []
        for c in seq:
            v = c[axis]
            i = bisect.bisect_left(seen, v)
            equal = i < len(seen) and seen[i] == v
            marks.append((i, equal))
            if not equal:
                seen.insert(i, v)
        pattern.append(tuple(marks))
    return tuple(pattern)


def transcript(seq, branching: int = None, rtree_fanout=(None, None)) -> bytes:
    """Everything the server observes while the sequence is inserted.

    Points are relabelled 0..n-1 in sequence order so both sides of the game
    use the same identifiers.
    """
    coords = [p.coords if isinstance(p, Point) else tuple(p) for p in seq]
    if not coords:
        return b""
    d = len(coords[0])
    trace = []
    frames = []
    store = Store.memory(d, branching, rtree_fanout, trace=trace)
    client = Client(LoopbackTransport(store, recorder=frames), StubCipher(), d)
    out = []
    for i, c in enumerate(coords):
        client.insert(Point(i, c))
        out.append(b"session")
        out.extend(direction.encode() + frame for direction, frame in frames)
        out.extend(f"{op}{pid}".encode() for op, pid in trace)
        for name, pager in store.pagers():
            out.append(name.encode() + pager.image())
        frames.clear()
        trace.clear()
    return b"".join(len(chunk).to_bytes(4, "big") + chunk for chunk in out)


@dataclass(frozen=True)
class Verdict:
    identical: bool
    size: int


def play_game(seq0, seq1, branching: int = None, rtree_fanout=(None, None)) -> Verdict:
    if order_pattern(seq0) != order_pattern(seq1):
        raise GamePrecondition("sequences are not order-isomorphic")
    t0 = transcript(seq0, branching, rtree_fanout)
    t1 = transcript(seq1, branching, rtree_fanout)
    return Verdict(t0 == t1, len(t0))
