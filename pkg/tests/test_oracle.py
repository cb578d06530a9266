from fractions import Fraction

from sope.geometry import Point, Rect, Segment, dominates_min
from sope.oracle import (oracle_constrained_knn, oracle_continuous_1nn, oracle_dynamic_skyline,
                         oracle_k_global_skyline, oracle_knn, oracle_nn_at, oracle_point,
                         oracle_range, oracle_reverse_knn, oracle_skyline)


def test_reference(ref_points):
    assert oracle_skyline(ref_points) == {1, 15, 18}
    assert oracle_knn(ref_points, (450, 450), 1) == [5]
    assert oracle_range(ref_points, Rect((100, 100), (300, 400))) == {1, 2, 4, 11, 22, 27}
    assert oracle_point(ref_points, (600, 600)) and not oracle_point(ref_points, (601, 600))


def test_skyline_hand_checked_pairs(ref_points):
    by_id = {p.id: p.coords for p in ref_points}
    assert dominates_min(by_id[1], by_id[2])          # (100,100) vs (250,250)
    assert not dominates_min(by_id[1], by_id[18])     # (100,100) vs (400,50)
    assert not dominates_min(by_id[18], by_id[15])    # (400,50) vs (50,950)


def test_knn_tie_rule():
    pts = [Point(3, (1, 0)), Point(1, (-1, 0)), Point(2, (0, 5))]
    assert oracle_knn(pts, (0, 0), 2) == [1, 3]
    assert oracle_constrained_knn(pts, Rect((0, -1), (9, 9)), (0, 0), 5) == [3, 2]


def test_dynamic_skyline_coincident_q():
    pts = [Point(1, (5, 5)), Point(2, (1, 9)), Point(3, (9, 1))]
    assert oracle_dynamic_skyline(pts, (5, 5)) == {1}


def test_layers_partition():
    pts = [Point(i, (i, i)) for i in range(1, 6)]
    assert oracle_k_global_skyline(pts, (0, 0), 3) == [{1}, {2}, {3}]


def test_reverse_knn_definition():
    pts = [Point(1, (0, 0)), Point(2, (10, 0))]
    assert oracle_reverse_knn(pts, (4, 0), 1) == {1, 2}
    cluster = [Point(1, (0, 0)), Point(2, (1, 0)), Point(3, (0, 1))]
    assert oracle_reverse_knn(cluster, (50, 50), 1) == set()


def test_nn_at_reports_ties():
    pts = [Point(1, (0, 0)), Point(2, (2, 0))]
    assert oracle_nn_at(pts, (1, 0)) == (1, [1, 2])


def test_continuous_symmetric_pair():
    pts = [Point(1, (0, 1)), Point(2, (2, 1))]
    tiles = oracle_continuous_1nn(pts, Segment((0, 0), (2, 0)))
    assert tiles == [(1, Fraction(0), Fraction(1, 2)), (2, Fraction(1, 2), Fraction(1))]


def test_continuous_single_winner():
    pts = [Point(1, (5, 0)), Point(2, (100, 100))]
    assert oracle_continuous_1nn(pts, Segment((0, 0), (10, 0))) == [(1, 0, 1)]
