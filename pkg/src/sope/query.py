"""Server-side spatial algorithms over the encoded R-tree.

Everything here runs on encodings only. Query points arrive in doubled
encoding space (stored encodings are multiplied by two on the fly) so that a
query coordinate absent from an axis can sit on an odd value strictly
between two stored encodings. Constraint boxes arrive in plain encoding
space because their corners are always rounded onto stored encodings.
"""

from __future__ import annotations

import heapq
import itertools
from operator import itemgetter, le, mul

from .geometry import closest_vertex, dominates_min


class QueryError(ValueError):
    pass


def _intersects(lo, hi, box) -> bool:
    blo, bhi = box
    return all(a <= y and x <= b for a, b, x, y in zip(blo, bhi, lo, hi))


def _inside(c, box) -> bool:
    blo, bhi = box
    return all(a <= x <= b for a, x, b in zip(blo, c, bhi))


def _box_is_empty(box) -> bool:
    return any(a > b for a, b in zip(*box))


# -- skyline -----------------------------------------------------------------

def skyline(rtree, box=None) -> list:
    """BBS skyline (min on every axis), optionally restricted to ``box``.

    Returns ``(id, encodings)`` pairs.
    """
    if box is not None and _box_is_empty(box):
        return []
    result = []
    seq = itertools.count()
    heap = []

    def corner(lo, hi):
        # Best point an entry can contain once clipped to the constraint.
        return lo if box is None else tuple(map(max, lo, box[0]))

    def dominated(c):
        return any(dominates_min(s, c) for _, s in result)

    def admit(entries, leaf):
        for lo, hi, ref in entries:
            if box is not None and not _intersects(lo, hi, box):
                continue
            if leaf and box is not None and not _inside(lo, box):
                continue
            c = corner(lo, hi)
            if dominated(c):
                continue
            heapq.heappush(heap, (sum(c), next(seq), leaf, lo, hi, ref))

    root = rtree.read(rtree.root)
    admit(root.entries, root.leaf)
    while heap:
        _, _, leaf, lo, hi, ref = heapq.heappop(heap)
        c = corner(lo, hi)
        if dominated(c):
            continue
        if leaf:
            result.append((ref, lo))
        else:
            node = rtree.read(ref)
            admit(node.entries, node.leaf)
    return result


# -- global skyline ------------------------------------------------------------

def globally_dominated(e, layers, q) -> bool:
    """True iff some member of ``layers`` globally dominates ``e`` w.r.t. ``q``.

    ``e`` is a point or an ``(lo, hi)`` rectangle; a rectangle is judged by
    its vertex closest to ``q``. Members are compared coordinate by coordinate
    with separate counters for the quadrant, the non-strict and the strict
    conditions.
    """
    if isinstance(e, tuple) and len(e) == 2 and isinstance(e[0], tuple):
        e = closest_vertex(e[0], e[1], q)
    d = len(q)
    for p in layers:
        first = second = 0
        third = False
        for pi, ei, qi in zip(p, e, q):
            dp, de = pi - qi, ei - qi
            if dp * de > 0:
                first += 1
            if abs(dp) <= abs(de):
                second += 1
            if abs(dp) < abs(de):
                third = True
        if first == d and second == d and third:
            return True
    return False


def _box_offsets(lo, hi, q2) -> tuple:
    """Offsets from doubled q to the nearest point of the doubled box [lo, hi]."""
    out = []
    for l, h, c in zip(lo, hi, q2):
        l += l
        if c < l:
            out.append(l - c)
            continue
        h += h
        out.append(h - c if c > h else 0)
    return tuple(out)


_POSITIVE = (0).__lt__


def _dominated_in(buckets, key, mags) -> bool:
    """Whether a layer, bucketed by orthant around q, dominates offsets ``mags``.

    Global dominance only happens inside one open orthant, where it reduces
    to plain dominance of the absolute offsets.
    """
    for m in buckets.get(key, ()):
        if all(map(le, m, mags)) and m != mags:
            return True
    return False


def k_global_skyline(rtree, q2, k: int, box=None) -> list:
    """Layered global skyline w.r.t. the doubled query point ``q2``.

    Returns ``k`` lists of ``(id, encodings)``. With ``box`` only points inside
    the box (plain encoding space) are considered.
    """
    if k < 1:
        raise QueryError("k must be at least 1")
    layers = [[] for _ in range(k)]
    q2 = tuple(q2)
    index = [{} for _ in range(k)]             # orthant -> |offsets| of members
    if box is not None and _box_is_empty(box):
        return layers
    seq = itertools.count()
    heap = []                                  # unexpanded nodes by mindist
    pending = []                               # (distance, offsets, id, encodings)

    def rejected_everywhere(offsets):
        # offsets lead to the closest vertex of an entry; it is dropped only
        # when no layer could take anything inside it.
        if 0 in offsets:
            return False
        key, mags = tuple(map(_POSITIVE, offsets)), tuple(map(abs, offsets))
        return all(_dominated_in(buckets, key, mags) for buckets in index)

    def admit(entries, leaf):
        if leaf:
            for lo, _, ref in entries:
                if box is not None and not _inside(lo, box):
                    continue
                offsets = tuple([x + x - c for x, c in zip(lo, q2)])
                pending.append((sum(map(mul, offsets, offsets)), offsets, ref, lo))
            pending.sort(key=itemgetter(0), reverse=True)
            return
        for lo, hi, ref in entries:
            if box is not None and not _intersects(lo, hi, box):
                continue
            offsets = _box_offsets(lo, hi, q2)
            if not rejected_everywhere(offsets):
                heapq.heappush(heap, (sum(map(mul, offsets, offsets)), next(seq), offsets, ref))

    def place(offsets, ref, lo):
        if 0 in offsets:
            # On an axis through q: nothing globally dominates it.
            layers[0].append((ref, lo))
            return
        key, mags = tuple(map(_POSITIVE, offsets)), tuple(map(abs, offsets))
        for buckets, out in zip(index, layers):
            if not _dominated_in(buckets, key, mags):
                out.append((ref, lo))
                buckets.setdefault(key, []).append(mags)
                return

    # Points are placed in ascending distance. A buffered point goes before
    # any node whose mindist is not smaller, since nothing inside that node
    # can be strictly closer; equal distances never dominate each other.
    root = rtree.read(rtree.root)
    admit(root.entries, root.leaf)
    while heap or pending:
        bound = heap[0][0] if heap else None
        while pending and (bound is None or pending[-1][0] <= bound):
            _, offsets, ref, lo = pending.pop()
            place(offsets, ref, lo)
        if heap:
            _, _, offsets, ref = heapq.heappop(heap)
            if not rejected_everywhere(offsets):
                node = rtree.read(ref)
                admit(node.entries, node.leaf)
    return layers
