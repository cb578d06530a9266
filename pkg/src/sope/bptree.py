"""Per-axis B+-tree over ciphertexts with mutable path encodings.

The server never compares ciphertexts. The client decrypts each node it is
sent and answers with a child index (index nodes) or a slot (leaves); the
helpers :func:`choose_child` and :func:`leaf_position` are that client-side
decision on plaintext keys.

A key's encoding concatenates ``ceil(log2 B)``-bit groups for every index
level on its root-to-leaf path plus one group for its slot in the leaf.
Encodings are not padded, so a root split prepends a zero group and leaves
the value of every key left of the split unchanged.

Separator convention: an index key is the largest key of the subtree to its
left, and a search for ``v`` follows the first child whose separator is
``>= v``. Insertions therefore land in the leaf that holds their successor.
"""

from __future__ import annotations

import bisect
import struct
from dataclasses import dataclass, field

from .pager import PAGE_SIZE, Pager, PageError

CIPHER_BYTES = 16
INF = (1 << 64) - 1          # +infinity sentinel for encodings and ranges
MAX_ENCODING = INF - 1

_NODE_HEADER = struct.Struct(">BH")           # kind, count
_TREE_HEADER = struct.Struct(">8sIIQQH")      # magic, B, height, root, keys, axis
MAGIC = b"SOPEBPT1"
LEAF, INDEX = 1, 2


def page_branching(page_size: int = PAGE_SIZE) -> int:
    """Largest B such that an index node with B children fits in a page."""
    return (page_size - _NODE_HEADER.size + CIPHER_BYTES) // (CIPHER_BYTES + 8)


def bits_per_level(branching: int) -> int:
    return max(1, (branching - 1).bit_length())


class EncodingOverflow(Exception):
    pass


class ProtocolViolation(Exception):
    """A client-supplied index or position that the tree cannot honour."""


class StaleEncoding(LookupError):
    pass


class UnsupportedOperation(Exception):
    pass


class BNode:
    __slots__ = ("leaf", "keys", "children")

    def __init__(self, leaf: bool, keys=None, children=None):
        self.leaf = leaf
        self.keys = keys if keys is not None else []
        self.children = children if children is not None else []

    def __repr__(self):
        kind = "Leaf" if self.leaf else "Index"
        return f"{kind}({len(self.keys)} keys, {len(self.children)} children)"


class BNodeCodec:
    @staticmethod
    def encode(node: BNode) -> bytes:
        if node.leaf:
            return _NODE_HEADER.pack(LEAF, len(node.keys)) + b"".join(node.keys)
        head = _NODE_HEADER.pack(INDEX, len(node.children))
        return head + b"".join(node.keys) + struct.pack(f">{len(node.children)}Q", *node.children)

    @staticmethod
    def decode(data: bytes) -> BNode:
        kind, count = _NODE_HEADER.unpack_from(data)
        off = _NODE_HEADER.size
        if kind == LEAF:
            keys = [data[off + i * CIPHER_BYTES: off + (i + 1) * CIPHER_BYTES] for i in range(count)]
            return BNode(True, keys)
        if kind != INDEX:
            raise PageError(f"bad B+-tree node kind {kind}")
        nkeys = count - 1
        keys = [data[off + i * CIPHER_BYTES: off + (i + 1) * CIPHER_BYTES] for i in range(nkeys)]
        off += nkeys * CIPHER_BYTES
        children = list(struct.unpack_from(f">{count}Q", data, off))
        return BNode(False, keys, children)


@dataclass
class MutationRange:
    """Old encodings invalidated by one insertion and where they moved."""

    lo: int = None
    hi: int = None
    remap: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.remap

    def mapping(self) -> dict:
        return dict(self.remap)


def choose_child(separators, value) -> int:
    """Client rule at an index node, on decrypted separators."""
    return bisect.bisect_left(separators, value)


def leaf_position(keys, value):
    """Client rule at a leaf: (slot, already_present)."""
    i = bisect.bisect_left(keys, value)
    return i, i < len(keys) and keys[i] == value


def encode_path(steps, branching: int) -> int:
    bits = bits_per_level(branching)
    limit = 1 << bits
    value = 0
    for s in steps:
        if not 0 <= s < limit:
            raise ValueError(f"path step {s} does not fit in {bits} bits")
        value = (value << bits) | s
    if value > MAX_ENCODING:
        raise EncodingOverflow(f"path of {len(steps)} levels exceeds 64-bit encodings")
    return value


class BPlusTree:
    """One axis of the store. Nodes live in ``pager``; all accesses are counted."""

    def __init__(self, pager: Pager, branching: int, axis: int = 0, *, _root=None,
                 _height=0, _count=0):
        if branching < 2:
            raise ValueError("branching factor must be at least 2")
        if branching > page_branching():
            raise ValueError(f"branching {branching} does not fit a {PAGE_SIZE}-byte page")
        self.pager = pager
        self.branching = branching
        self.bits = bits_per_level(branching)
        self.axis = axis
        self.height = _height        # number of index levels above the leaves
        self.key_count = _count
        self.root = _root if _root is not None else pager.alloc(BNode(True))

    # -- persistence -------------------------------------------------------
    def header(self) -> bytes:
        return _TREE_HEADER.pack(MAGIC, self.branching, self.height, self.root,
                                 self.key_count, self.axis)

    @classmethod
    def open(cls, pager: Pager) -> "BPlusTree":
        data = pager.backing.read_page(0)
        magic, branching, height, root, count, axis = _TREE_HEADER.unpack_from(data)
        if magic != MAGIC:
            raise PageError(f"bad B+-tree magic {magic!r}")
        pager.load_all()
        return cls(pager, branching, axis, _root=root, _height=height, _count=count)

    def commit(self, sync: bool = True) -> None:
        self.pager.commit(self.header(), sync)

    # -- navigation ---------------------------------------------------------
    def read_root(self) -> BNode:
        return self.pager.read(self.root)

    def descend_step(self, node: BNode, chosen: int) -> int:
        if node.leaf:
            raise ProtocolViolation("cannot descend below a leaf")
        if not 0 <= chosen < len(node.children):
            raise ProtocolViolation(f"child index {chosen} out of range 0..{len(node.children) - 1}")
        return node.children[chosen]

    def encoding_of(self, steps, position: int) -> int:
        return encode_path(list(steps) + [position], self.branching)

    def lookup_ciphertext(self, encoding: int) -> bytes:
        levels = self.height + 1
        if encoding < 0 or encoding >> (self.bits * levels):
            raise StaleEncoding(f"encoding {encoding} is wider than the tree")
        bits = self.bits
        mask = (1 << bits) - 1
        read = self.pager.read
        node = read(self.root)
        for shift in range(bits * (levels - 1), 0, -bits):
            step = (encoding >> shift) & mask
            if node.leaf or step >= len(node.children):
                raise StaleEncoding(f"encoding {encoding} names a missing child")
            node = read(node.children[step])
        slot = encoding & mask
        if not node.leaf or slot >= len(node.keys):
            raise StaleEncoding(f"encoding {encoding} names a missing slot")
        return node.keys[slot]

    # -- insertion ----------------------------------------------------------
    def insert_at(self, pids, steps, position: int, cipher: bytes):
        """Insert ``cipher`` at ``position`` of the leaf reached via ``steps``.

        ``pids`` are the page ids visited from the root to the leaf during the
        client-driven descent. Returns ``(encoding, MutationRange)``.
        """
        steps = list(steps)
        if len(pids) != self.height + 1 or len(steps) != self.height:
            raise ProtocolViolation("descent path does not match tree height")
        leaf = self.pager.peek(pids[-1])  # already read during the descent
        if not leaf.leaf:
            raise ProtocolViolation("descent did not end at a leaf")
        if not 0 <= position <= len(leaf.keys):
            raise ProtocolViolation(f"leaf position {position} out of range")
        if position < len(leaf.keys) and leaf.keys[position] == cipher:
            return self.encoding_of(steps, position), MutationRange()

        # Which nodes split: a node overflows iff it is full and (for index
        # nodes) the child below it splits too.
        top = len(pids)
        if len(leaf.keys) + 1 > self.branching:
            top = len(pids) - 1
            while top > 0 and len(self.pager.peek(pids[top - 1]).children) + 1 > self.branching:
                top -= 1
        root_split = top == 0
        if top == len(pids):
            region = len(pids) - 1          # no split: only the leaf moves
        elif root_split:
            region = 0
        else:
            region = top - 1                # parent of the highest split

        # Keys that can move: from the new slot on when nothing splits, else
        # every key under the highest split node and its right siblings.
        if top == len(pids):
            old = self._collect(pids[-1], steps, None, position)
        elif root_split:
            old = self._collect(self.root, [], None, None)
        else:
            old = self._collect(pids[region], steps[:region], steps[region], None)
        new_steps, new_pos = self._do_insert(pids, steps, position, cipher)
        if top == len(pids):
            new = self._collect(pids[-1], new_steps, None, new_pos)
        elif root_split:
            new = self._collect(self.root, [], None, None)
        else:
            new = self._collect(pids[region], new_steps[:region], steps[region], None)
        before = len(new)
        new = [kv for kv in new if kv[0] != cipher]
        if len(new) != before - 1:
            raise AssertionError("inserted key not found where expected")
        if len(old) != len(new):
            raise AssertionError("mutation region changed size")
        remap = []
        for (c_old, e_old), (c_new, e_new) in zip(old, new):
            if c_old != c_new:
                raise AssertionError("key order changed during insertion")
            if e_old != e_new:
                remap.append((e_old, e_new))
        self.key_count += 1
        encoding = self.encoding_of(new_steps, new_pos)
        if not remap:
            return encoding, MutationRange()
        hi = INF if root_split else remap[-1][0]
        return encoding, MutationRange(remap[0][0], hi, remap)

    def _collect(self, pid, prefix, first_child, first_slot):
        """(cipher, encoding) of keys under ``pid`` in key order.

        At ``pid`` itself, skip children before ``first_child`` (index node)
        or slots before ``first_slot`` (leaf).
        """
        out = []
        bits = self.bits

        def walk(pid, acc, first):
            node = self.pager.read(pid)
            if node.leaf:
                for i in range(first or 0, len(node.keys)):
                    out.append((node.keys[i], (acc << bits) | i))
                return
            for i in range(first or 0, len(node.children)):
                walk(node.children[i], (acc << bits) | i, None)

        acc = 0
        for s in prefix:
            acc = (acc << bits) | s
        walk(pid, acc, first_child if first_child is not None else first_slot)
        return out

    def _do_insert(self, pids, steps, position, cipher):
        B = self.branching
        pager = self.pager
        leaf = pager.read(pids[-1])
        leaf.keys.insert(position, cipher)
        pager.write(pids[-1], leaf)
        new_steps = list(steps)
        new_pos = position
        level = len(pids) - 1
        node = leaf
        while True:
            over = len(node.keys) > B if node.leaf else len(node.children) > B
            if not over:
                break
            if node.leaf:
                mid = (len(node.keys) + 1) // 2
                right = BNode(True, node.keys[mid:])
                sep = node.keys[mid - 1]
                del node.keys[mid:]
                moved = new_pos >= mid
                if moved:
                    new_pos -= mid
            else:
                lc = (len(node.children) + 1) // 2
                right = BNode(False, node.keys[lc:], node.children[lc:])
                sep = node.keys[lc - 1]
                del node.keys[lc - 1:]
                del node.children[lc:]
                moved = new_steps[level] >= lc
                if moved:
                    new_steps[level] -= lc
            pager.write(pids[level], node)
            right_pid = pager.alloc(right)
            if level == 0:
                self.root = pager.alloc(BNode(False, [sep], [pids[0], right_pid]))
                self.height += 1
                new_steps.insert(0, 1 if moved else 0)
                break
            parent = pager.read(pids[level - 1])
            i = steps[level - 1]
            parent.keys.insert(i, sep)
            parent.children.insert(i + 1, right_pid)
            pager.write(pids[level - 1], parent)
            if moved:
                new_steps[level - 1] += 1
            level -= 1
            node = parent
        return new_steps, new_pos

    def delete(self, *args, **kwargs):
        raise UnsupportedOperation("deletion is not supported by the encoding trees")

    # -- whole-tree views ---------------------------------------------------
    def full_reencode(self) -> dict:
        """Cipher -> encoding for every stored key, by exhaustive traversal."""
        out = {}
        bits = self.bits

        def walk(pid, acc):
            node = self.pager.read(pid)
            if node.leaf:
                for i, c in enumerate(node.keys):
                    out[c] = (acc << bits) | i
            else:
                for i, child in enumerate(node.children):
                    walk(child, (acc << bits) | i)

        walk(self.root, 0)
        return out

    def keys_in_order(self) -> list:
        out = []

        def walk(pid):
            node = self.pager.peek(pid)
            if node.leaf:
                out.extend(node.keys)
            else:
                for child in node.children:
                    walk(child)

        walk(self.root)
        return out

    def check_invariants(self, decrypt=None) -> None:
        """Structural checks; with ``decrypt`` also checks key order."""
        B = self.branching
        depths = set()

        def walk(pid, depth, is_root):
            node = self.pager.peek(pid)
            if node.leaf:
                depths.add(depth)
                assert len(node.keys) <= B, "leaf over capacity"
                if not is_root:
                    assert len(node.keys) >= 1, "empty non-root leaf"
                return
            assert len(node.keys) == len(node.children) - 1, "separator count"
            assert len(node.children) <= B, "index over capacity"
            assert len(node.children) >= (1 if B == 2 else 2) or is_root
            if is_root:
                assert len(node.children) >= 2, "root index with a single child"
            for child in node.children:
                walk(child, depth + 1, False)

        walk(self.root, 0, True)
        assert depths == {self.height} or (self.key_count == 0 and depths == {0}), "unbalanced"
        if decrypt is not None:
            values = [decrypt(c) for c in self.keys_in_order()]
            assert values == sorted(values) and len(set(values)) == len(values), "key order"
            assert len(values) == self.key_count

            def check_seps(pid):
                node = self.pager.peek(pid)
                if node.leaf:
                    return
                for sep, child in zip(node.keys, node.children):
                    assert decrypt(sep) == max(decrypt(c) for c in self._subtree_keys(child))
                for child in node.children:
                    check_seps(child)

            check_seps(self.root)

    def _subtree_keys(self, pid):
        node = self.pager.peek(pid)
        if node.leaf:
            return list(node.keys)
        out = []
        for child in node.children:
            out.extend(self._subtree_keys(child))
        return out
