"""Plaintext and encoded geometry.

Coordinates are Python integers everywhere on the index path, so every
predicate here is exact. The same functions are used on plaintext points
and on (doubled) encoded points, since they only look at order and
differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

Coords = Sequence[int]


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Point:
    id: int
    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))

    @property
    def d(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class EncodedPoint:
    id: int
    encodings: tuple

    def __post_init__(self):
        object.__setattr__(self, "encodings", tuple(self.encodings))


@dataclass(frozen=True)
class Rect:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(self.lo))
        object.__setattr__(self, "hi", tuple(self.hi))
        _check(self.lo, self.hi)
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"inverted rectangle {self.lo} > {self.hi}")

    @classmethod
    def from_corners(cls, a: Coords, b: Coords) -> "Rect":
        """Normalise two arbitrary diagonal vertices into lo/hi form."""
        _check(a, b)
        return cls(tuple(map(min, a, b)), tuple(map(max, a, b)))

    def contains(self, p: Coords) -> bool:
        return all(l <= x <= h for l, x, h in zip(self.lo, p, self.hi))

    def intersects(self, lo: Coords, hi: Coords) -> bool:
        return all(a <= h and l <= b for a, b, l, h in zip(self.lo, self.hi, lo, hi))


@dataclass(frozen=True)
class Segment:
    a: tuple
    b: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "b", tuple(self.b))
        _check(self.a, self.b)
        if self.a == self.b:
            raise ValueError("degenerate segment")

    def at(self, t: float) -> tuple:
        return tuple(x + t * (y - x) for x, y in zip(self.a, self.b))


def _check(p: Coords, r: Coords, q: Optional[Coords] = None) -> None:
    if len(p) != len(r) or (q is not None and len(q) != len(p)):
        raise DimensionMismatch(
            f"dimension mismatch: {len(p)} vs {len(r)}"
            + ("" if q is None else f" vs {len(q)}")
        )


def dominates_min(p: Coords, r: Coords) -> bool:
    """Skyline dominance under min conditions on every axis."""
    _check(p, r)
    strict = False
    for a, b in zip(p, r):
        if a > b:
            return False
        if a < b:
            strict = True
    return strict


def globally_dominates(p: Coords, r: Coords, q: Coords) -> bool:
    """True iff p globally dominates r with respect to q."""
    _check(p, r, q)
    strict = False
    for a, b, c in zip(p, r, q):
        da, db = a - c, b - c
        if da * db <= 0:
            return False
        if da < 0:
            da, db = -da, -db
        if da > db:
            return False
        if da < db:
            strict = True
    return strict


def closest_vertex(lo: Coords, hi: Coords, q: Coords) -> tuple:
    """Per-axis clamp of q into [lo, hi]: the rectangle point nearest to q."""
    return tuple(l if c < l else h if c > h else c for l, h, c in zip(lo, hi, q))


def globally_dominates_rect(p: Coords, er: Rect, q: Coords) -> bool:
    _check(p, er.lo, q)
    return globally_dominates(p, closest_vertex(er.lo, er.hi, q), q)


def dynamically_dominates(p: Coords, r: Coords, q: Coords) -> bool:
    _check(p, r, q)
    strict = False
    for a, b, c in zip(p, r, q):
        da, db = abs(c - a), abs(c - b)
        if da > db:
            return False
        if da < db:
            strict = True
    return strict


def distance_sq(p: Coords, q: Coords):
    _check(p, q)
    return sum((a - b) * (a - b) for a, b in zip(p, q))


def mindist_sq(lo: Coords, hi: Coords, q: Coords):
    """Squared distance from q to the closed box [lo, hi]."""
    total = 0
    for l, h, c in zip(lo, hi, q):
        if c < l:
            total += (l - c) * (l - c)
        elif c > h:
            total += (c - h) * (c - h)
    return total


def bisector_split(nna: Coords, nnb: Coords, seg: Segment) -> Optional[float]:
    """Parameter t in (0, 1) where seg crosses the perpendicular bisector of
    [nna, nnb], or None when the crossing is absent or not interior.

    Points x on the bisector satisfy (nnb - nna) . x = (|nnb|^2 - |nna|^2) / 2.
    """
    _check(nna, nnb)
    _check(nna, seg.a)
    if tuple(nna) == tuple(nnb):
        raise ValueError("bisector of a point with itself")
    normal = [b - a for a, b in zip(nna, nnb)]
    offset = (sum(b * b for b in nnb) - sum(a * a for a in nna)) / 2.0
    direction = [y - x for x, y in zip(seg.a, seg.b)]
    denom = sum(n * v for n, v in zip(normal, direction))
    if denom == 0:
        return None
    t = (offset - sum(n * x for n, x in zip(normal, seg.a))) / denom
    if not 0.0 < t < 1.0:
        return None
    return t
