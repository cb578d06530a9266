"""Datasets: the 28-point reference table, a uniform generator and CSV I/O."""

from __future__ import annotations

import csv

import numpy as np

from .geometry import Point

# id: (X, Y, X', Y')
REFERENCE28 = {
    1: (100, 100, 1, 1), 2: (250, 250, 4, 4), 3: (600, 600, 11, 13),
    4: (300, 400, 5, 7), 5: (450, 450, 8, 8), 6: (100, 700, 1, 15),
    7: (300, 480, 5, 9), 8: (500, 900, 9, 19), 9: (800, 550, 15, 12),
    10: (350, 850, 6, 18), 11: (200, 300, 3, 5), 12: (650, 150, 12, 2),
    13: (950, 900, 18, 19), 14: (600, 300, 11, 5), 15: (50, 950, 0, 20),
    16: (900, 750, 17, 16), 17: (950, 950, 18, 20), 18: (400, 50, 7, 0),
    19: (750, 250, 14, 4), 20: (850, 150, 16, 2), 21: (150, 650, 2, 14),
    22: (100, 200, 1, 3), 23: (550, 100, 10, 1), 24: (700, 510, 13, 11),
    25: (700, 800, 13, 17), 26: (700, 350, 13, 6), 27: (100, 350, 1, 6),
    28: (100, 500, 1, 10),
}

DOMAIN = 10 ** 6


def reference_points() -> list:
    return [Point(i, row[:2]) for i, row in sorted(REFERENCE28.items())]


def reference_encodings() -> dict:
    return {i: row[2:] for i, row in REFERENCE28.items()}


def uniform_points(n: int, d: int, seed: int, domain: int = DOMAIN) -> list:
    """``n`` distinct integer points uniform over ``[0, domain)^d``, ids 0..n-1."""
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    if n > domain ** d:
        raise ValueError("domain too small for n distinct points")
    rng = np.random.default_rng(seed)
    seen = set()
    out = []
    while len(out) < n:
        batch = rng.integers(0, domain, size=(max(16, n - len(out)), d))
        for row in batch.tolist():
            key = tuple(row)
            if key not in seen:
                seen.add(key)
                out.append(key)
                if len(out) == n:
                    break
    return [Point(i, c) for i, c in enumerate(out)]


class CsvError(ValueError):
    pass


def _parse_id(text: str) -> int:
    text = text.strip()
    if text[:1] in ("p", "P"):
        text = text[1:]
    return int(text)


def read_csv(path: str):
    """Yield ``(row_number, Point)``; rows are ``id,x1,...,xd``, header optional.

    Ids may carry a ``p`` prefix. A first row that does not parse is taken as
    a header.
    """
    d = None
    with open(path, newline="", encoding="utf-8") as fh:
        for number, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                ident = _parse_id(row[0])
                coords = tuple(int(cell) for cell in row[1:])
            except ValueError:
                if number == 1:
                    continue
                raise CsvError(f"row {number}: expected integers, got {row!r}") from None
            if not coords:
                raise CsvError(f"row {number}: no coordinates")
            if d is None:
                d = len(coords)
            elif len(coords) != d:
                raise CsvError(f"row {number}: expected {d} coordinates, got {len(coords)}")
            yield number, Point(ident, coords)


def write_csv(path: str, points, header: bool = True) -> None:
    points = list(points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header and points:
            writer.writerow(["id"] + [f"x{i + 1}" for i in range(len(points[0].coords))])
        for p in points:
            writer.writerow([p.id, *p.coords])
