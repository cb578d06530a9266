import random

import pytest

from conftest import (WALKTHROUGH_SEQUENCE, check_incremental, new_tree, plain_block, plain_insert,
                      plain_value)
from sope.bptree import (INF, BNode, BNodeCodec, BPlusTree, EncodingOverflow, ProtocolViolation,
                         StaleEncoding, UnsupportedOperation, bits_per_level, choose_child,
                         encode_path, leaf_position, page_branching)
from sope.pager import MemoryFile, PageError, Pager


def test_encode_path_examples():
    assert encode_path([1, 0, 1], 2) == 5
    assert encode_path([0, 1, 1, 0], 2) == 6
    for b in (2, 3, 171):
        assert encode_path([0], b) == 0


def test_encode_path_rejects_wide_steps_and_overflow():
    with pytest.raises(ValueError):
        encode_path([2], 2)
    with pytest.raises(EncodingOverflow):
        encode_path([1] * 65, 2)


def test_page_branching():
    b = page_branching()
    assert b == 171
    assert bits_per_level(b) == 8
    assert bits_per_level(2) == 1 and bits_per_level(3) == 2


def test_client_rules():
    assert choose_child([10, 20], 10) == 0
    assert choose_child([10, 20], 15) == 1
    assert choose_child([10, 20], 25) == 2
    assert leaf_position([10, 20], 20) == (1, True)
    assert leaf_position([10, 20], 5) == (0, False)


def test_split_walkthrough():
    tree = new_tree(2)
    for v in WALKTHROUGH_SEQUENCE:
        plain_insert(tree, v)
    enc = tree.full_reencode()
    assert enc[plain_block(70)] == 5 and enc[plain_block(58)] == 2

    _, mr = plain_insert(tree, 55)
    assert (mr.lo, mr.hi, mr.remap) == (2, 2, [(2, 3)])
    assert tree.lookup_ciphertext(3) == plain_block(58)

    tree = new_tree(2)
    for v in WALKTHROUGH_SEQUENCE:
        plain_insert(tree, v)
    height = tree.height
    _, mr = plain_insert(tree, 65)
    assert (mr.lo, mr.hi) == (5, INF)
    assert tree.height == height + 1


def test_empty_tree_insert():
    tree = new_tree(4)
    assert tree.full_reencode() == {}
    enc, mr = plain_insert(tree, 42)
    assert enc == 0 and mr.empty
    assert tree.full_reencode() == {plain_block(42): 0}


def test_present_key_reuses_encoding():
    tree = new_tree(4)
    for v in (5, 9, 1):
        plain_insert(tree, v)
    before = tree.full_reencode()
    enc, mr = plain_insert(tree, 9)
    assert mr.empty and enc == before[plain_block(9)]
    assert tree.full_reencode() == before


@pytest.mark.parametrize("branching", [2, 3, 4, 5, 8])
def test_incremental_matches_full_reencode(branching):
    rng = random.Random(branching)
    for _ in range(40):
        keys = [rng.randrange(10 ** 6) for _ in range(rng.randint(1, 80))]
        tree = new_tree(branching)
        assert check_incremental(tree, keys) == 0
        tree.check_invariants(plain_value)
        assert [plain_value(c) for c in tree.keys_in_order()] == sorted(set(keys))


def test_lookup_inverts_encoding():
    tree = new_tree(3)
    for v in random.Random(0).sample(range(1000), 200):
        plain_insert(tree, v)
    for block, enc in tree.full_reencode().items():
        assert tree.lookup_ciphertext(enc) == block
    with pytest.raises(StaleEncoding):
        tree.lookup_ciphertext(INF - 1)


def test_lookup_past_leaf_end():
    tree = new_tree(4)
    plain_insert(tree, 1)
    with pytest.raises(StaleEncoding):
        tree.lookup_ciphertext(1)


def test_descend_step_bounds():
    tree = new_tree(2)
    for v in (1, 2, 3):
        plain_insert(tree, v)
    root = tree.read_root()
    assert not root.leaf and len(root.children) == 2
    assert tree.descend_step(root, 1) == root.children[1]
    with pytest.raises(ProtocolViolation):
        tree.descend_step(root, 2)
    leaf = tree.pager.read(root.children[0])
    with pytest.raises(ProtocolViolation):
        tree.descend_step(leaf, 0)


def test_insert_rejects_bad_paths():
    tree = new_tree(2)
    for v in (1, 2, 3):
        plain_insert(tree, v)
    with pytest.raises(ProtocolViolation):
        tree.insert_at([tree.root], [], 0, plain_block(9))


def test_delete_unsupported():
    with pytest.raises(UnsupportedOperation):
        new_tree(2).delete(plain_block(1))


def test_codec_round_trip():
    codec = BNodeCodec()
    leaf = BNode(True, [plain_block(1), plain_block(2)])
    index = BNode(False, [plain_block(5)], [3, 7])
    for node in (leaf, index):
        back = codec.decode(codec.encode(node))
        assert (back.leaf, back.keys, back.children) == (node.leaf, node.keys, node.children)


def test_persistence_round_trip(tmp_path):
    from sope.pager import PageFile

    path = str(tmp_path / "axis0.bpt")
    tree = BPlusTree(Pager(BNodeCodec(), PageFile(path)), 3, 0)
    keys = random.Random(1).sample(range(10 ** 6), 300)
    for v in keys:
        plain_insert(tree, v)
    tree.commit()
    expected = tree.full_reencode()
    tree.pager.close()

    reopened = BPlusTree.open(Pager(BNodeCodec(), PageFile(path)))
    assert reopened.full_reencode() == expected
    assert reopened.branching == 3 and reopened.key_count == 300


def test_open_rejects_bad_magic():
    f = MemoryFile()
    f.write_page(0, b"NOTATREE" + bytes(100))
    with pytest.raises(PageError):
        BPlusTree.open(Pager(BNodeCodec(), f))
