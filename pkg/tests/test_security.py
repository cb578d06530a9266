import random

import pytest

from sope.security import GamePrecondition, order_pattern, play_game, transcript

# Two sequences with the same spatial order: the second point lies north-east
# of the first, the third south-east of the second, the fourth north-east of
# the third.
PATTERN_A = [(10, 10), (20, 30), (40, 20), (50, 40)]
PATTERN_B = [(100, 200), (300, 700), (900, 400), (950, 800)]


def test_order_patterns_match():
    assert order_pattern(PATTERN_A) == order_pattern(PATTERN_B)


def test_pattern_self_and_difference():
    assert order_pattern(PATTERN_A) == order_pattern(list(PATTERN_A))
    changed = [(10, 10), (20, 30), (40, 35), (50, 40)]
    assert order_pattern(changed) != order_pattern(PATTERN_A)


def test_pattern_marks_equal_values():
    assert order_pattern([(5,), (5,)]) != order_pattern([(5,), (6,)])


def test_isomorphic_pair_indistinguishable():
    assert play_game(PATTERN_A, PATTERN_B).identical


def test_precondition():
    with pytest.raises(GamePrecondition):
        play_game(PATTERN_A, [(10, 10), (20, 5), (40, 20), (50, 40)])


def isomorphic_pair(rng, n, d):
    """Two sequences sharing one order pattern, via distinct monotone relabellings."""
    base = [tuple(rng.randrange(n) for _ in range(d)) for _ in range(n)]

    def relabel():
        out = []
        for axis in range(d):
            values = sorted({c[axis] for c in base})
            image = sorted(rng.sample(range(10 ** 6), len(values)))
            out.append(dict(zip(values, image)))
        return [tuple(out[a][c[a]] for a in range(d)) for c in base]

    return relabel(), relabel()


def test_random_pairs_small_fanout():
    rng = random.Random(9)
    for _ in range(10):
        s0, s1 = isomorphic_pair(rng, rng.randint(1, 40), rng.randint(1, 3))
        assert play_game(s0, s1, branching=3, rtree_fanout=(4, 4)).identical


def test_non_isomorphic_transcripts_differ():
    a = [(1, 1), (2, 2), (3, 3)]
    b = [(3, 3), (2, 2), (1, 1)]
    assert order_pattern(a) != order_pattern(b)
    assert transcript(a, 2, (4, 4)) != transcript(b, 2, (4, 4))
