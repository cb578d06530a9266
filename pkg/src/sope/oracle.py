"""Plaintext brute-force answers for every supported query.

These functions never touch a tree. Each one evaluates the defining
predicate of its query over the whole dataset, vectorised with numpy where
the quadratic cost would otherwise dominate test time. Results are id sets,
except kNN (ids ordered by distance then id), the layered global skyline
(a list of id sets) and continuous 1NN (a list of ``(id, t0, t1)`` tiles
with exact rational bounds).
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def _array(points, extra=()):
    coords = [p.coords for p in points]
    big = max((abs(int(x)) for c in list(coords) + list(extra) for x in c), default=0)
    # Squared distances must not overflow int64.
    dtype = np.int64 if big < (1 << 30) else object
    return np.array(coords, dtype=dtype).reshape(len(points), -1), dtype


def _ids(points):
    return np.array([p.id for p in points], dtype=np.int64)


def oracle_point(points, q) -> bool:
    q = tuple(q)
    return any(p.coords == q for p in points)


def oracle_range(points, box) -> set:
    return {p.id for p in points
            if all(l <= x <= h for l, x, h in zip(box.lo, p.coords, box.hi))}


def _pairwise(a, op):
    """Per-axis n x n comparison matrices ``op(a[i, k], a[j, k])``."""
    return [op(col[:, None], col[None, :]) for col in a.T]


def _min_dominance(a):
    """M[i, j] iff row i dominates row j under min conditions."""
    le = np.logical_and.reduce(_pairwise(a, np.less_equal))
    lt = np.logical_or.reduce(_pairwise(a, np.less))
    return le & lt


def oracle_skyline(points) -> set:
    if not points:
        return set()
    a, _ = _array(points)
    dominated = _min_dominance(a).any(axis=0)
    return set(_ids(points)[~dominated].tolist())


def oracle_constrained_skyline(points, box) -> set:
    inside = [p for p in points if all(l <= x <= h for l, x, h in zip(box.lo, p.coords, box.hi))]
    return oracle_skyline(inside)


def _global_dominance(points, q):
    """G[i, j] iff point i globally dominates point j w.r.t. q."""
    a, dtype = _array(points, [q])
    delta = a - np.array(q, dtype=dtype)
    same_side = np.logical_and.reduce(_pairwise(delta, lambda x, y: x * y > 0))
    return same_side & _min_dominance(np.abs(delta))


def oracle_k_global_skyline(points, q, k: int) -> list:
    """Layers peeled by repeated global-skyline filtering."""
    layers = []
    if not points:
        return [set() for _ in range(k)]
    g = _global_dominance(points, q)
    ids = _ids(points)
    remaining = np.ones(len(points), dtype=bool)
    for _ in range(k):
        dominated = (g & remaining[:, None]).any(axis=0)
        layer = remaining & ~dominated
        layers.append(set(ids[layer].tolist()))
        remaining &= ~layer
    return layers


def oracle_dynamic_skyline(points, q) -> set:
    if not points:
        return set()
    a, dtype = _array(points, [q])
    dist = np.abs(a - np.array(q, dtype=dtype))
    dominated = _min_dominance(dist).any(axis=0)
    return set(_ids(points)[~dominated].tolist())


def _sq_dists(points, q):
    a, dtype = _array(points, [q])
    diff = a - np.array(q, dtype=dtype)
    return (diff * diff).sum(axis=1)


def oracle_knn(points, q, k: int) -> list:
    """Ids of the k nearest points, ordered by (distance, id)."""
    if not points:
        return []
    dist = _sq_dists(points, q)
    order = sorted(range(len(points)), key=lambda i: (dist[i], points[i].id))
    return [points[i].id for i in order[:k]]


def oracle_constrained_knn(points, box, q, k: int) -> list:
    inside = [p for p in points if all(l <= x <= h for l, x, h in zip(box.lo, p.coords, box.hi))]
    return oracle_knn(inside, q, k)


def oracle_reverse_knn(points, q, k: int) -> set:
    """Points having q among their k nearest neighbours.

    p qualifies iff fewer than k other points are strictly closer to p than q.
    """
    if not points:
        return set()
    a, dtype = _array(points, [q])
    diff = a[:, None, :] - a[None, :, :]
    pair = (diff * diff).sum(axis=2)
    dq = _sq_dists(points, q)
    closer = (pair < dq[:, None])
    np.fill_diagonal(closer, False)
    keep = closer.sum(axis=1) < k
    return set(_ids(points)[keep].tolist())


def oracle_nn_at(points, x):
    """(best squared distance, ids attaining it) at the point x (floats ok)."""
    best, ids = None, []
    for p in points:
        dist = sum((a - b) ** 2 for a, b in zip(p.coords, x))
        if best is None or dist < best:
            best, ids = dist, [p.id]
        elif dist == best:
            ids.append(p.id)
    return best, ids


def oracle_continuous_1nn(points, seg) -> list:
    """Exact nearest-neighbour tiling of the segment's parameter range.

    Along the segment, |a + t v - p|^2 = |v|^2 t^2 + s_p t + c_p with
    s_p = 2 v.(a - p) and c_p = |a - p|^2; the quadratic term is shared, so
    the tiling is the lower envelope of the lines s_p t + c_p on [0, 1].
    Ties prefer the smaller slope (the winner just after the tie), then the
    smaller id.
    """
    if not points:
        return []
    a, b = seg.a, seg.b
    v = [y - x for x, y in zip(a, b)]
    lines = {}
    for p in points:
        diff = [x - y for x, y in zip(a, p.coords)]
        key = (2 * sum(vi * di for vi, di in zip(v, diff)), sum(di * di for di in diff))
        if key not in lines or p.id < lines[key]:
            lines[key] = p.id
    entries = sorted((s, c, ident) for (s, c), ident in lines.items())
    t = Fraction(0)
    cur = min(entries, key=lambda e: (e[1], e[0], e[2]))
    tiles = []
    while True:
        s0, c0, _ = cur
        nxt, t_next = None, None
        for e in entries:
            s, c, _ = e
            if s >= s0:
                continue
            cross = Fraction(c - c0, s0 - s)
            if cross < t:
                continue
            if t_next is None or cross < t_next or (cross == t_next and (s, e[2]) < (nxt[0], nxt[2])):
                nxt, t_next = e, cross
        if nxt is None or t_next >= 1:
            tiles.append((cur[2], t, Fraction(1)))
            return tiles
        if t_next > t:
            tiles.append((cur[2], t, t_next))
        t, cur = t_next, nxt
