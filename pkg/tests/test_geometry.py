import pytest

from sope.geometry import (DimensionMismatch, Rect, Segment, bisector_split, closest_vertex,
                           distance_sq, dominates_min, dynamically_dominates, globally_dominates,
                           globally_dominates_rect, mindist_sq)


@pytest.mark.parametrize("p, r, expected", [
    ((100, 100), (250, 250), True),
    ((100, 100), (100, 100), False),
    ((100, 100), (400, 50), False),
])
def test_dominates_min(p, r, expected):
    assert dominates_min(p, r) is expected


@pytest.mark.parametrize("p, r, q, expected", [
    ((300, 400), (250, 250), (450, 450), True),
    ((200, 300), (800, 550), (450, 450), False),
    ((250, 250), (250, 250), (450, 450), False),
])
def test_globally_dominates(p, r, q, expected):
    assert globally_dominates(p, r, q) is expected


def test_globally_dominates_rect_uses_closest_vertex():
    er = Rect((200, 200), (280, 240))
    assert closest_vertex(er.lo, er.hi, (450, 450)) == (280, 240)
    assert globally_dominates_rect((300, 400), er, (450, 450))


def test_rect_containing_q_is_never_dominated():
    er = Rect((400, 400), (500, 500))
    assert closest_vertex(er.lo, er.hi, (450, 450)) == (450, 450)
    assert not globally_dominates_rect((300, 400), er, (450, 450))


def test_point_equal_to_closest_vertex_does_not_dominate():
    er = Rect((200, 200), (280, 240))
    assert not globally_dominates_rect((280, 240), er, (450, 450))


@pytest.mark.parametrize("p, r, q, expected", [
    ((450, 450), (250, 250), (450, 450), True),
    ((250, 250), (250, 250), (450, 450), False),
    ((300, 400), (600, 600), (450, 450), True),
])
def test_dynamically_dominates(p, r, q, expected):
    assert dynamically_dominates(p, r, q) is expected


@pytest.mark.parametrize("p, q, expected", [
    ((450, 450), (450, 450), 0),
    ((100, 100), (250, 250), 45000),
    ((0, 0), (3, 4), 25),
])
def test_distance_sq(p, q, expected):
    assert distance_sq(p, q) == expected


def test_mindist_sq():
    assert mindist_sq((0, 0), (10, 10), (5, 5)) == 0
    assert mindist_sq((0, 0), (10, 10), (13, 14)) == 9 + 16
    assert mindist_sq((0, 0), (10, 10), (-2, 5)) == 4


def test_bisector_split():
    assert bisector_split((0, 0), (2, 0), Segment((0, 0), (2, 0))) == 0.5
    assert bisector_split((0, 0), (0, 2), Segment((0, 1), (2, 1))) is None
    assert bisector_split((0, 0), (4, 0), Segment((0, 0), (1, 0))) is None


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        dominates_min((1, 2), (1, 2, 3))
    with pytest.raises(DimensionMismatch):
        globally_dominates((1, 2), (1, 2), (1,))
    with pytest.raises(DimensionMismatch):
        distance_sq((1,), (1, 2))


def test_rect_and_segment_validation():
    assert Rect.from_corners((5, 1), (2, 7)) == Rect((2, 1), (5, 7))
    with pytest.raises(ValueError):
        Rect((5, 5), (1, 1))
    with pytest.raises(ValueError):
        Segment((1, 1), (1, 1))
    assert Segment((0, 0), (10, 20)).at(0.5) == (5.0, 10.0)
