"""R*-tree over encoded points.

Coordinates are unsigned integer encodings. Every entry, leaf or index, is
a ``(lo, hi, ref)`` triple; for leaf entries ``lo is hi`` is the point's
encodings and ``ref`` its id, for index entries ``ref`` is a child page id.
MBRs are always recomputed from their entries, so every bound equals some
stored encoding.
"""

from __future__ import annotations

import bisect
import struct

import numpy as np

from .pager import PAGE_SIZE, Pager, PageError

_NODE_HEADER = struct.Struct(">BBH")          # kind, level, count
_TREE_HEADER = struct.Struct(">8sHIIQIQ")     # magic, d, max_leaf, max_index, root, height, count
MAGIC = b"SOPERTR1"
LEAF, INDEX = 1, 2

MIN_FILL = 0.40
REINSERT_FRACTION = 0.30
OVERLAP_CANDIDATES = 32


class RTreeError(Exception):
    pass


class DuplicateId(RTreeError):
    pass


class RemapCorruption(RTreeError):
    """A stored encoding inside a mutation range had no new value."""


def page_capacities(d: int, page_size: int = PAGE_SIZE):
    body = page_size - _NODE_HEADER.size
    return body // (8 + 8 * d), body // (8 + 16 * d)


class RNode:
    # ``columns`` caches, per axis, a leaf's coordinates in sorted order with
    # their entry indices. Remaps keep it valid; anything else must drop it.
    __slots__ = ("level", "entries", "columns")

    def __init__(self, level: int, entries=None):
        self.level = level
        self.entries = entries if entries is not None else []
        self.columns = None

    def column(self, axis: int, d: int):
        if self.columns is None:
            self.columns = [None] * d
        col = self.columns[axis]
        if col is None:
            entries = self.entries
            order = sorted(range(len(entries)), key=lambda i: entries[i][0][axis])
            col = self.columns[axis] = ([entries[i][0][axis] for i in order], order)
        return col

    @property
    def leaf(self) -> bool:
        return self.level == 0

    def __repr__(self):
        return f"RNode(level={self.level}, {len(self.entries)} entries)"


class RNodeCodec:
    def __init__(self, d: int):
        self.d = d
        self._leaf = struct.Struct(f">Q{d}Q")
        self._index = struct.Struct(f">Q{2 * d}Q")

    def encode(self, node: RNode) -> bytes:
        parts = [_NODE_HEADER.pack(LEAF if node.leaf else INDEX, node.level, len(node.entries))]
        if node.leaf:
            for lo, _, ref in node.entries:
                parts.append(self._leaf.pack(ref, *lo))
        else:
            for lo, hi, ref in node.entries:
                parts.append(self._index.pack(ref, *lo, *hi))
        return b"".join(parts)

    def decode(self, data: bytes) -> RNode:
        kind, level, count = _NODE_HEADER.unpack_from(data)
        d = self.d
        off = _NODE_HEADER.size
        entries = []
        if kind == LEAF:
            for i in range(count):
                vals = self._leaf.unpack_from(data, off + i * self._leaf.size)
                c = tuple(vals[1:])
                entries.append((c, c, vals[0]))
        elif kind == INDEX:
            for i in range(count):
                vals = self._index.unpack_from(data, off + i * self._index.size)
                entries.append((tuple(vals[1:1 + d]), tuple(vals[1 + d:]), vals[0]))
        else:
            raise PageError(f"bad R-tree node kind {kind}")
        return RNode(level, entries)


def mbr(entries):
    los = [e[0] for e in entries]
    his = [e[1] for e in entries]
    return tuple(map(min, *los)) if len(los) > 1 else los[0], \
        tuple(map(max, *his)) if len(his) > 1 else his[0]


def _area(lo, hi) -> float:
    a = 1.0
    for l, h in zip(lo, hi):
        a *= float(h - l)
    return a


def _margin(lo, hi) -> float:
    return float(sum(h - l for l, h in zip(lo, hi)))


def _overlap(alo, ahi, blo, bhi) -> float:
    a = 1.0
    for l1, h1, l2, h2 in zip(alo, ahi, blo, bhi):
        w = min(h1, h2) - max(l1, l2)
        if w <= 0:
            return 0.0
        a *= float(w)
    return a


class _InsertContext:
    __slots__ = ("reinserted", "pending")

    def __init__(self):
        self.reinserted = set()
        self.pending = []


class RTree:
    def __init__(self, pager: Pager, d: int, max_leaf: int = None, max_index: int = None, *,
                 _root=None, _height=1, _count=0):
        cap_leaf, cap_index = page_capacities(d)
        self.max_leaf = max_leaf or cap_leaf
        self.max_index = max_index or cap_index
        if self.max_leaf > cap_leaf or self.max_index > cap_index:
            raise ValueError(f"fan-out does not fit a {PAGE_SIZE}-byte page")
        if min(self.max_leaf, self.max_index) < 4:
            raise ValueError("R-tree fan-out must be at least 4")
        self.pager = pager
        self.d = d
        self.height = _height                 # number of levels, leaves included
        self.count = _count
        self.root = _root if _root is not None else pager.alloc(RNode(0))
        self.ids = set()

    # -- persistence -------------------------------------------------------
    def header(self) -> bytes:
        return _TREE_HEADER.pack(MAGIC, self.d, self.max_leaf, self.max_index, self.root,
                                 self.height, self.count)

    @classmethod
    def open(cls, pager: Pager) -> "RTree":
        data = pager.backing.read_page(0)
        magic, d, max_leaf, max_index, root, height, count = _TREE_HEADER.unpack_from(data)
        if magic != MAGIC:
            raise PageError(f"bad R-tree magic {magic!r}")
        pager.codec = RNodeCodec(d)
        pager.load_all()
        tree = cls(pager, d, max_leaf, max_index, _root=root, _height=height, _count=count)
        tree.ids = {e[2] for e in tree.iter_entries()}
        return tree

    def commit(self, sync: bool = True) -> None:
        self.pager.commit(self.header(), sync)

    def page_stats(self):
        return self.pager.stats

    def _capacity(self, node: RNode) -> int:
        return self.max_leaf if node.leaf else self.max_index

    def _min_fill(self, node: RNode) -> int:
        return max(2, int(MIN_FILL * self._capacity(node)))

    # -- insertion ----------------------------------------------------------
    def insert_point(self, pid_or_id, encodings=None) -> None:
        """``insert_point(EncodedPoint)`` or ``insert_point(id, encodings)``."""
        if encodings is None:
            ident, encodings = pid_or_id.id, pid_or_id.encodings
        else:
            ident = pid_or_id
        coords = tuple(encodings)
        if len(coords) != self.d:
            raise RTreeError(f"expected {self.d} encodings, got {len(coords)}")
        if ident in self.ids:
            raise DuplicateId(f"object id {ident} already stored")
        ctx = _InsertContext()
        self._insert(ctx, (coords, coords, ident), 0)
        while ctx.pending:
            entry, level = ctx.pending.pop(0)
            self._insert(ctx, entry, level)
        self.ids.add(ident)
        self.count += 1

    def _insert(self, ctx, entry, level):
        split = self._insert_rec(ctx, self.root, entry, level)
        if split is not None:
            old = self.pager.peek(self.root)
            lo, hi = mbr(old.entries)
            self.root = self.pager.alloc(RNode(old.level + 1, [(lo, hi, self.root), split]))
            self.height += 1

    def _insert_rec(self, ctx, pid, entry, level):
        node = self.pager.read(pid)
        node.columns = None
        if node.level == level:
            node.entries.append(entry)
        else:
            i = self._choose_subtree(node, entry)
            child = node.entries[i][2]
            split = self._insert_rec(ctx, child, entry, level)
            lo, hi = mbr(self.pager.peek(child).entries)
            node.entries[i] = (lo, hi, child)
            if split is not None:
                node.entries.append(split)
        out = None
        if len(node.entries) > self._capacity(node):
            out = self._overflow(ctx, pid, node)
        self.pager.write(pid, node)
        return out

    def _choose_subtree(self, node: RNode, entry) -> int:
        entries = node.entries
        if len(entries) == 1:
            return 0
        blo, bhi = entry[0], entry[1]
        keys = []
        for i, (lo, hi, pid) in enumerate(entries):
            area = grown = 1
            for l, h, a, b in zip(lo, hi, blo, bhi):
                area *= h - l
                grown *= (h if h > b else b) - (l if l < a else a)
            keys.append((grown - area, area, pid, i))
        keys.sort()
        # A child whose area does not grow also gains no overlap, so it wins
        # outright at either level.
        if node.level != 1 or keys[0][0] == 0:
            return keys[0][3]
        # Overlap enlargement, evaluated for the best candidates by area
        # enlargement only (the usual R* approximation for large fan-out).
        cand = np.array([k[3] for k in keys[:OVERLAP_CANDIDATES]])
        lo = np.array([e[0] for e in entries], dtype=float)
        hi = np.array([e[1] for e in entries], dtype=float)
        elo = np.minimum(lo[cand], np.array(blo, dtype=float))
        ehi = np.maximum(hi[cand], np.array(bhi, dtype=float))

        def overlap_sum(alo, ahi):
            w = np.minimum(ahi[:, None, :], hi[None, :, :]) - np.maximum(alo[:, None, :], lo[None, :, :])
            ov = np.prod(np.clip(w, 0.0, None), axis=2)
            ov[np.arange(len(cand)), cand] = 0.0
            return ov.sum(axis=1)

        ov_enl = overlap_sum(elo, ehi) - overlap_sum(lo[cand], hi[cand])
        best = min(range(len(cand)), key=lambda j: (ov_enl[j], keys[j]))
        return keys[best][3]

    def _overflow(self, ctx, pid, node):
        if pid != self.root and node.level not in ctx.reinserted:
            ctx.reinserted.add(node.level)
            self._reinsert(ctx, node)
            return None
        return self._split(node)

    def _reinsert(self, ctx, node):
        lo, hi = mbr(node.entries)
        center = [(l + h) / 2.0 for l, h in zip(lo, hi)]

        def dist(e):
            return sum(((l + h) / 2.0 - c) ** 2 for l, h, c in zip(e[0], e[1], center))

        p = max(1, int(round(REINSERT_FRACTION * len(node.entries))))
        ranked = sorted(range(len(node.entries)), key=lambda i: (-dist(node.entries[i]), i))
        far = set(ranked[:p])
        removed = [node.entries[i] for i in reversed(ranked[:p])]   # closest first
        node.entries = [e for i, e in enumerate(node.entries) if i not in far]
        node.columns = None
        ctx.pending.extend((e, node.level) for e in removed)

    def _split(self, node: RNode):
        entries = node.entries
        m = self._min_fill(node)
        total = len(entries)
        best_axis, best_margin, axis_sorts = None, None, {}
        for axis in range(self.d):
            sorts = [
                sorted(entries, key=lambda e: (e[0][axis], e[1][axis])),
                sorted(entries, key=lambda e: (e[1][axis], e[0][axis])),
            ]
            margin = 0.0
            splits = []
            for s in sorts:
                pre, suf = self._prefix_boxes(s), self._prefix_boxes(s[::-1])[::-1]
                for k in range(m, total - m + 1):
                    a, b = pre[k - 1], suf[k]
                    margin += _margin(*a) + _margin(*b)
                    splits.append((s, k, a, b))
            axis_sorts[axis] = splits
            if best_margin is None or margin < best_margin:
                best_axis, best_margin = axis, margin
        best = None
        for s, k, a, b in axis_sorts[best_axis]:
            key = (_overlap(*a, *b), _area(*a) + _area(*b))
            if best is None or key < best[0]:
                best = (key, s, k)
        _, s, k = best
        node.entries = list(s[:k])
        node.columns = None
        sibling = RNode(node.level, list(s[k:]))
        sib_pid = self.pager.alloc(sibling)
        lo, hi = mbr(sibling.entries)
        return (lo, hi, sib_pid)

    @staticmethod
    def _prefix_boxes(entries):
        out = []
        lo, hi = list(entries[0][0]), list(entries[0][1])
        for e in entries:
            for j, (l, h) in enumerate(zip(e[0], e[1])):
                if l < lo[j]:
                    lo[j] = l
                if h > hi[j]:
                    hi[j] = h
            out.append((tuple(lo), tuple(hi)))
        return out

    # -- encoding remap -----------------------------------------------------
    def axis_range_update(self, axis: int, mrange) -> int:
        """Rewrite every axis-``axis`` encoding found in ``mrange.remap``.

        The remap is strictly increasing and MBR bounds are always stored
        encodings, so a bound moves exactly like the entry that defines it.
        """
        if mrange.empty:
            return 0
        mapping = mrange.mapping()
        lo, hi = mrange.lo, mrange.hi
        updated = 0

        def walk(pid):
            nonlocal updated
            node = self.pager.read(pid)
            entries = node.entries
            changed = False
            if node.leaf:
                values, order = node.column(axis, self.d)
                first = bisect.bisect_left(values, lo)
                last = bisect.bisect_right(values, hi)
                for j in range(first, last):
                    v = values[j]
                    nv = mapping.get(v)
                    i = order[j]
                    c, _, ident = entries[i]
                    if nv is None:
                        raise RemapCorruption(
                            f"object {ident}: encoding {v} on axis {axis} in [{lo}, {hi}] "
                            "has no remap entry")
                    nc = c[:axis] + (nv,) + c[axis + 1:]
                    entries[i] = (nc, nc, ident)
                    values[j] = nv
                updated += last - first
                changed = last > first
            else:
                for i, (l, h, child) in enumerate(entries):
                    if l[axis] <= hi and h[axis] >= lo and walk(child):
                        la, ha = l[axis], h[axis]
                        if lo <= la <= hi:
                            l = l[:axis] + (mapping[la],) + l[axis + 1:]
                        if lo <= ha <= hi:
                            h = h[:axis] + (mapping[ha],) + h[axis + 1:]
                        entries[i] = (l, h, child)
                        changed = True
            if changed:
                self.pager.write(pid, node)
            return changed

        walk(self.root)
        return updated

    # -- searches -----------------------------------------------------------
    def point_search(self, encodings) -> set:
        target = tuple(encodings)
        found = set()

        def walk(pid):
            node = self.pager.read(pid)
            if node.leaf:
                found.update(e[2] for e in node.entries if e[0] == target)
                return
            for l, h, child in node.entries:
                if all(a <= x <= b for a, x, b in zip(l, target, h)):
                    walk(child)

        walk(self.root)
        return found

    def range_search(self, lo, hi) -> list:
        """(id, encodings) of every stored point inside the closed box."""
        lo, hi = tuple(lo), tuple(hi)
        out = []

        def walk(pid):
            node = self.pager.read(pid)
            if node.leaf:
                for c, _, ident in node.entries:
                    if all(a <= x <= b for a, x, b in zip(lo, c, hi)):
                        out.append((ident, c))
                return
            for l, h, child in node.entries:
                if all(a <= y and x <= b for a, b, x, y in zip(lo, hi, l, h)):
                    walk(child)

        walk(self.root)
        return out

    def read(self, pid: int) -> RNode:
        return self.pager.read(pid)

    # -- inspection (uncounted) ---------------------------------------------
    def iter_entries(self):
        stack = [self.root]
        while stack:
            node = self.pager.peek(stack.pop())
            if node.leaf:
                yield from node.entries
            else:
                stack.extend(e[2] for e in reversed(node.entries))

    def all_points(self) -> dict:
        return {ident: c for c, _, ident in self.iter_entries()}

    def check_invariants(self) -> None:
        leaf_depths = set()
        seen = []

        def walk(pid, depth, expect_level):
            node = self.pager.peek(pid)
            assert node.level == expect_level, "level bookkeeping"
            cap = self._capacity(node)
            assert len(node.entries) <= cap, "node over capacity"
            if pid != self.root:
                assert len(node.entries) >= self._min_fill(node) or self.count < self._min_fill(node), \
                    "node under minimum fill"
            if node.leaf:
                leaf_depths.add(depth)
                seen.extend(e[2] for e in node.entries)
                return
            assert node.entries, "empty index node"
            for l, h, child in node.entries:
                clo, chi = mbr(self.pager.peek(child).entries)
                assert (clo, chi) == (l, h), "stored MBR is not the tight child MBR"
                walk(child, depth + 1, expect_level - 1)

        walk(self.root, 1, self.height - 1)
        assert len(leaf_depths) <= 1, "leaves at different depths"
        assert len(seen) == self.count == len(set(seen)), "object count"
        assert set(seen) == self.ids
