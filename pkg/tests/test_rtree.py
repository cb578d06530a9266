import random

import pytest

from sope.bptree import INF, MutationRange
from sope.datasets import reference_encodings
from sope.geometry import EncodedPoint
from sope.pager import MemoryFile, PageError, Pager, PageFile
from sope.rtree import DuplicateId, RemapCorruption, RNode, RNodeCodec, RTree, page_capacities


def new_rtree(d=2, cap=None):
    return RTree(Pager(RNodeCodec(d), MemoryFile()), d, cap, cap)


@pytest.fixture
def ref_rtree():
    t = new_rtree()
    for ident, enc in sorted(reference_encodings().items()):
        t.insert_point(ident, enc)
    return t


def random_tree(n, cap, seed, domain=1000):
    rng = random.Random(seed)
    t = new_rtree(cap=cap)
    pts = {}
    for i in range(n):
        c = (rng.randrange(domain), rng.randrange(domain))
        pts[i] = c
        t.insert_point(i, c)
    return t, pts, rng


def test_point_search_reference(ref_rtree):
    assert ref_rtree.point_search((11, 13)) == {3}
    assert ref_rtree.point_search((99, 99)) == set()
    assert new_rtree().point_search((0, 0)) == set()


def test_range_search_reference(ref_rtree):
    got = {i for i, _ in ref_rtree.range_search((1, 1), (5, 7))}
    assert got == {1, 2, 4, 11, 22, 27}
    assert {i for i, _ in ref_rtree.range_search((0, 0), (INF, INF))} == set(range(1, 29))
    assert {i for i, _ in ref_rtree.range_search((11, 13), (11, 13))} == {3}


def test_duplicate_coordinates_distinct_ids():
    t = new_rtree()
    t.insert_point(EncodedPoint(1, (4, 4)))
    t.insert_point(EncodedPoint(2, (4, 4)))
    assert t.point_search((4, 4)) == {1, 2}
    with pytest.raises(DuplicateId):
        t.insert_point(1, (5, 5))


@pytest.mark.parametrize("cap", [4, 8, None])
def test_range_search_matches_scan(cap):
    t, pts, rng = random_tree(1500, cap, cap or 0)
    t.check_invariants()
    for _ in range(100):
        a = (rng.randrange(1000), rng.randrange(1000))
        b = (rng.randrange(1000), rng.randrange(1000))
        lo, hi = tuple(map(min, a, b)), tuple(map(max, a, b))
        got = sorted(i for i, _ in t.range_search(lo, hi))
        assert got == sorted(i for i, c in pts.items()
                             if all(l <= x <= h for l, x, h in zip(lo, c, hi)))


def test_size_linear_in_n():
    t, _, _ = random_tree(4000, None, 5)
    leaf_cap, _ = page_capacities(2)
    # Leaves are at least 40% full; index pages add a small fraction.
    assert t.pager.page_count <= 1.2 * 4000 / (0.4 * leaf_cap) + 2


@pytest.mark.parametrize("cap", [4, None])
def test_axis_range_update_matches_rebuild(cap):
    t, pts, _ = random_tree(2000, cap, 11)
    vals = sorted({c[0] for c in pts.values() if c[0] >= 500})
    mr = MutationRange(vals[0], vals[-1], [(v, v + 1000) for v in vals])
    updated = t.axis_range_update(0, mr)
    assert updated == sum(1 for c in pts.values() if c[0] >= 500)
    t.check_invariants()
    assert t.all_points() == {i: ((x + 1000 if x >= 500 else x), y) for i, (x, y) in pts.items()}


def test_single_key_remap(ref_rtree):
    # X-encodings equal to 2 become 3 (a single-key range).
    before = ref_rtree.all_points()
    ref_rtree.axis_range_update(0, MutationRange(2, 2, [(2, 3)]))
    after = ref_rtree.all_points()
    for ident, (x, y) in before.items():
        assert after[ident] == ((3 if x == 2 else x), y)


def test_empty_remap_touches_nothing(ref_rtree):
    image = ref_rtree.pager.image()
    ref_rtree.pager.stats.reset()
    assert ref_rtree.axis_range_update(0, MutationRange()) == 0
    assert ref_rtree.pager.image() == image
    assert ref_rtree.pager.stats.reads == 0


def test_remap_missing_value_is_corruption(ref_rtree):
    with pytest.raises(RemapCorruption):
        ref_rtree.axis_range_update(0, MutationRange(1, 5, [(1, 2)]))


def test_page_counters(ref_rtree):
    stats = ref_rtree.pager.stats
    stats.reset()
    assert (stats.reads, stats.writes) == (0, 0)
    ref_rtree.point_search((11, 13))
    once = stats.reads
    assert once == ref_rtree.height
    ref_rtree.point_search((11, 13))
    assert stats.reads == 2 * once


def test_codec_round_trip():
    codec = RNodeCodec(2)
    node = RNode(1, [((1, 2), (3, 4), 7), ((0, 0), (9, 9), 8)])
    back = codec.decode(codec.encode(node))
    assert back.level == 1 and back.entries == node.entries


def test_persistence(tmp_path):
    path = str(tmp_path / "rtree.rt")
    t = RTree(Pager(RNodeCodec(2), PageFile(path)), 2, 4, 4)
    rng = random.Random(2)
    for i in range(300):
        t.insert_point(i, (rng.randrange(100), rng.randrange(100)))
    t.commit()
    expected = t.all_points()
    t.pager.close()
    back = RTree.open(Pager(None, PageFile(path)))
    assert back.all_points() == expected and back.count == 300
    back.check_invariants()


def test_bad_magic():
    f = MemoryFile()
    f.write_page(0, b"XXXXXXXX" + bytes(64))
    with pytest.raises(PageError):
        RTree.open(Pager(None, f))


def test_fanout_validation():
    with pytest.raises(ValueError):
        new_rtree(cap=3)
    with pytest.raises(ValueError):
        new_rtree(cap=10 ** 6)
