import random

import pytest

from sope.datasets import reference_encodings
from sope.geometry import globally_dominates
from sope.pager import MemoryFile, Pager
from sope.query import QueryError, globally_dominated, k_global_skyline, skyline
from sope.rtree import RNodeCodec, RTree


def rtree_of(points, cap=4):
    t = RTree(Pager(RNodeCodec(2), MemoryFile()), 2, cap, cap)
    for ident, c in points.items():
        t.insert_point(ident, c)
    return t


def ids(pairs):
    return {i for i, _ in pairs}


def test_skyline_reference_encodings():
    t = rtree_of(reference_encodings(), cap=None)
    assert ids(skyline(t)) == {1, 15, 18}


def test_skyline_small_cases():
    assert ids(skyline(rtree_of({7: (3, 3)}))) == {7}
    stair = {i: (i, 20 - i) for i in range(15)}
    assert ids(skyline(rtree_of(stair))) == set(stair)
    assert skyline(rtree_of({})) == []


def test_constrained_skyline_box():
    t = rtree_of(reference_encodings())
    whole = ((0, 0), (100, 100))
    assert ids(skyline(t, whole)) == ids(skyline(t))
    assert skyline(t, ((50, 50), (60, 60))) == []


def test_globally_dominated_edge_cases():
    q = (10, 10)
    assert not globally_dominated((3, 3), [], q)
    assert not globally_dominated((3, 3), [(3, 3)], q)
    assert globally_dominated((3, 3), [(5, 4)], q)
    assert globally_dominated(((0, 0), (4, 4)), [(5, 5)], q)


def test_globally_dominated_agrees_with_geometry():
    rng = random.Random(7)
    for _ in range(100_000):
        p, r, q = [tuple(rng.randrange(-4, 5) for _ in range(2)) for _ in range(3)]
        assert globally_dominated(r, [p], q) == globally_dominates(p, r, q)


def _oracle_layers(points, q, k):
    remaining = dict(points)
    layers = []
    for _ in range(k):
        layer = {i for i, c in remaining.items()
                 if not any(globally_dominates(o, c, q) for j, o in remaining.items() if j != i)}
        layers.append(layer)
        for i in layer:
            del remaining[i]
    return layers


@pytest.mark.parametrize("seed", range(5))
def test_k_global_skyline_matches_layers(seed):
    rng = random.Random(seed)
    pts = {i: (rng.randrange(60), rng.randrange(60)) for i in range(150)}
    t = rtree_of(pts)
    for _ in range(10):
        q = (rng.randrange(60), rng.randrange(60))
        got = k_global_skyline(t, (2 * q[0], 2 * q[1]), 3)
        assert [ids(layer) for layer in got] == _oracle_layers(pts, q, 3)


def test_k_global_skyline_rejects_k0():
    with pytest.raises(QueryError):
        k_global_skyline(rtree_of({1: (1, 1)}), (0, 0), 0)


def test_k_global_skyline_empty_box():
    t = rtree_of({1: (1, 1), 2: (5, 5)})
    assert k_global_skyline(t, (4, 4), 2, ((2, 2), (3, 3))) == [[], []]
