import pytest

from sope.cipher import TestCipher
from sope.client import Client
from sope.datasets import reference_points
from sope.server import LoopbackTransport, Store

KEY = bytes(range(32))


def make_client(d=2, branching=None, rtree_fanout=(None, None), store=None):
    store = store or Store.memory(d, branching, rtree_fanout)
    return Client(LoopbackTransport(store), TestCipher(KEY), d), store


def loaded(points, d=2, branching=None, rtree_fanout=(None, None)):
    client, store = make_client(d, branching, rtree_fanout)
    for p in points:
        client.insert(p)
    return client, store


@pytest.fixture
def ref_points():
    return reference_points()


@pytest.fixture
def ref_client(ref_points):
    client, _ = loaded(ref_points)
    return client


def plain_block(v: int) -> bytes:
    """Order-preserving stand-in ciphertext for driving a bare B+-tree."""
    return v.to_bytes(16, "big")


def plain_value(block: bytes) -> int:
    return int.from_bytes(block, "big")


def plain_insert(tree, v):
    """Drive one client-side descent with plaintext keys; returns (encoding, range)."""
    from sope.bptree import MutationRange, choose_child, leaf_position

    pids, steps = [tree.root], []
    node = tree.read_root()
    while not node.leaf:
        i = choose_child([plain_value(k) for k in node.keys], v)
        pids.append(tree.descend_step(node, i))
        steps.append(i)
        node = tree.pager.read(pids[-1])
    pos, present = leaf_position([plain_value(k) for k in node.keys], v)
    if present:
        return tree.encoding_of(steps, pos), MutationRange()
    return tree.insert_at(pids, steps, pos, plain_block(v))


def new_tree(branching):
    from sope.bptree import BNodeCodec, BPlusTree
    from sope.pager import Pager

    return BPlusTree(Pager(BNodeCodec()), branching)


# Keys reproducing the two-way tree of the insertion walkthrough: after these
# six insertions key 70 encodes to 5 and key 58 to 2.
WALKTHROUGH_SEQUENCE = [30, 58, 60, 50, 70, 90]


def check_incremental(tree, keys):
    """Insert ``keys`` one by one and compare the patched encodings against a
    full traversal after every insertion. Returns the number of mismatches."""
    by_enc = {}
    bad = 0
    for v in keys:
        enc, mr = plain_insert(tree, v)
        moved = [(new, by_enc.pop(old)) for old, new in mr.remap]
        by_enc.update(moved)
        by_enc[enc] = plain_block(v)
        full = tree.full_reencode()
        if {c: e for e, c in by_enc.items()} != full:
            bad += 1
    return bad
