"""Load and query benchmarks that report page accesses per tree.

Everything goes through a :class:`~sope.client.Client`, so the same code
measures an in-process store or a remote server. Page counters come from the
server's stats session and are diffed around each operation.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import DOMAIN
from .geometry import Rect, Segment

CHECKPOINTS = 5
RANGE_FRACTIONS = (0.01, 0.03, 0.05)
KS = (1, 2, 3)
SEGMENT_FRACTIONS = (0.01, 0.03, 0.05)


def parse_stats(text: str) -> dict:
    """Stats text -> {tree name: {reads, writes, pages, levels, entries}}."""
    out = {}
    for line in text.splitlines():
        if line.strip():
            row = json.loads(line)
            out[row.pop("tree")] = row
    return out


def counter_delta(after: dict, before: dict, field_name: str) -> dict:
    return {name: after[name][field_name] - before[name][field_name] for name in after}


@dataclass
class Checkpoint:
    points: int
    wall: float
    reads: dict
    writes: dict
    pages: dict
    round_trips: int

    @property
    def total_pages(self) -> int:
        return sum(self.pages.values())


@dataclass
class QueryRecord:
    kind: str
    param: str
    k: int
    results: int
    wall_ms: float
    reads: dict
    round_trips: int


@dataclass
class BenchReport:
    n: int
    d: int
    checkpoints: list = field(default_factory=list)
    queries: list = field(default_factory=list)
    levels: dict = field(default_factory=dict)

    @property
    def trees(self) -> list:
        return [f"axis{i}" for i in range(self.d)] + ["rtree"]


def checkpoint_marks(n: int, parts: int = CHECKPOINTS) -> list:
    return sorted({max(1, math.ceil(n * i / parts)) for i in range(1, parts + 1)}) if n else []


def load(client, points, on_checkpoint=None) -> list:
    """Insert ``points`` in order, sampling the counters every 20% of the load.

    Counters are cumulative from the start of the load.
    """
    points = list(points)
    marks = set(checkpoint_marks(len(points)))
    base = parse_stats(client.stats())
    rt0 = client.round_trips
    start = time.perf_counter()
    out = []
    for i, p in enumerate(points, start=1):
        client.insert(p)
        if i in marks:
            wall = time.perf_counter() - start
            rt = client.round_trips - rt0
            now = parse_stats(client.stats())
            cp = Checkpoint(i, wall, counter_delta(now, base, "reads"),
                            counter_delta(now, base, "writes"),
                            {name: row["pages"] for name, row in now.items()}, rt)
            out.append(cp)
            if on_checkpoint is not None:
                on_checkpoint(cp)
    return out


def window(rng, fraction: float, d: int, domain: int = DOMAIN) -> Rect:
    """An axis-aligned cube covering ``fraction`` of the integer workspace."""
    side = max(1, round(domain * fraction ** (1.0 / d)))
    lo = tuple(int(v) for v in rng.integers(0, domain - side + 1, size=d))
    return Rect(lo, tuple(v + side - 1 for v in lo))


def segment(rng, fraction: float, d: int, domain: int = DOMAIN) -> Segment:
    """A segment of length ``fraction`` of the side, lying inside the workspace."""
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    offset = [int(round(x)) for x in u * fraction * domain]
    a = [int(rng.integers(max(0, -o), domain - max(0, o))) for o in offset]
    return Segment(tuple(a), tuple(x + o for x, o in zip(a, offset)))


def _measure(client, kind, param, k, fn):
    before = parse_stats(client.stats())
    rt0 = client.round_trips
    start = time.perf_counter()
    result = fn()
    wall_ms = (time.perf_counter() - start) * 1000.0
    rt = client.round_trips - rt0
    after = parse_stats(client.stats())
    size = result if isinstance(result, int) else len(result)
    return QueryRecord(kind, param, k, size, wall_ms, counter_delta(after, before, "reads"), rt)


def _fmt(values) -> str:
    return " ".join(str(v) for v in values)


KINDS = ("point", "range", "knn", "rknn", "cnn")


def query_battery(client, points, d: int, seed: int, queries: int = 20,
                  domain: int = DOMAIN, point_queries: int = 100, kinds=KINDS) -> list:
    """Run the standard query mix; returns one :class:`QueryRecord` per query."""
    rng = np.random.default_rng(seed + 1)
    records = []
    if points and "point" in kinds:
        for i in rng.choice(len(points), size=min(point_queries, len(points)), replace=False):
            q = points[int(i)].coords
            records.append(_measure(client, "point", _fmt(q), 0,
                                    lambda q=q: int(client.point_query(q))))
    if "range" in kinds:
        for frac in RANGE_FRACTIONS:
            for _ in range(queries):
                box = window(rng, frac, d, domain)
                records.append(_measure(client, "range", f"{frac:g}", 0,
                                        lambda box=box: client.range_query(box)))
    for k in KS:
        if "knn" in kinds:
            for _ in range(queries):
                q = tuple(int(v) for v in rng.integers(0, domain, size=d))
                records.append(_measure(client, "knn", _fmt(q), k,
                                        lambda q=q, k=k: client.knn(q, k)))
        if "rknn" in kinds:
            for _ in range(queries):
                q = tuple(int(v) for v in rng.integers(0, domain, size=d))
                records.append(_measure(client, "rknn", _fmt(q), k,
                                        lambda q=q, k=k: client.reverse_knn(q, k)))
    if "cnn" in kinds:
        for frac in SEGMENT_FRACTIONS:
            for _ in range(queries):
                seg = segment(rng, frac, d, domain)
                records.append(_measure(client, "cnn", f"{frac:g}", 1,
                                        lambda seg=seg: client.continuous_1nn(seg)))
    return records


def run(client, points, d: int, seed: int = 0, queries: int = 20, domain: int = DOMAIN,
        on_checkpoint=None, kinds=KINDS) -> BenchReport:
    points = list(points)
    report = BenchReport(len(points), d)
    report.checkpoints = load(client, points, on_checkpoint)
    stats = parse_stats(client.stats())
    report.levels = {name: row["levels"] for name, row in stats.items()}
    if queries > 0:
        report.queries = query_battery(client, points, d, seed, queries, domain, kinds=kinds)
    return report


# -- output -----------------------------------------------------------------------

def write_checkpoints(report: BenchReport, path: str) -> None:
    trees = report.trees
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["points", "wall_s", "round_trips"]
                   + [f"{t}_reads" for t in trees] + [f"{t}_writes" for t in trees]
                   + [f"{t}_pages" for t in trees] + ["total_pages"])
        for cp in report.checkpoints:
            w.writerow([cp.points, f"{cp.wall:.3f}", cp.round_trips]
                       + [cp.reads[t] for t in trees] + [cp.writes[t] for t in trees]
                       + [cp.pages[t] for t in trees] + [cp.total_pages])


def write_queries(report: BenchReport, path: str) -> None:
    trees = report.trees
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "param", "k", "results", "wall_ms", "round_trips"]
                   + [f"{t}_reads" for t in trees])
        for r in report.queries:
            w.writerow([r.kind, r.param, r.k, r.results, f"{r.wall_ms:.3f}", r.round_trips]
                       + [r.reads[t] for t in trees])


def write_report(report: BenchReport, out_dir: str) -> list:
    """CSV files plus PNG figures in ``out_dir``; returns the paths written."""
    from . import plotting

    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "checkpoints.csv"), os.path.join(out_dir, "queries.csv")]
    write_checkpoints(report, paths[0])
    write_queries(report, paths[1])
    paths += plotting.render(report, out_dir)
    return paths


# -- trend checks ---------------------------------------------------------------

@dataclass(frozen=True)
class Trend:
    name: str
    passed: bool
    detail: str


def r_squared(xs, ys) -> float:
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if len(xs) < 2:
        return float("nan")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    total = ((ys - ys.mean()) ** 2).sum()
    return 1.0 - (resid ** 2).sum() / total if total else 1.0


def trend_pages_linear(report: BenchReport, threshold: float = 0.99) -> Trend:
    r2 = r_squared([c.points for c in report.checkpoints],
                   [c.total_pages for c in report.checkpoints])
    return Trend("pages linear in n", r2 > threshold, f"R^2={r2:.5f}")


def trend_point_reads(report: BenchReport) -> Trend:
    """Every point query on a stored point must read the same pages per tree.

    The B+-tree part is one root-to-leaf descent per axis. The R-tree part
    varies whenever the point lies inside several sibling rectangles.
    """
    recs = [r for r in report.queries if r.kind == "point"]
    spread = {t: sorted({r.reads[t] for r in recs}) for t in report.trees}
    ok = bool(recs) and all(len(v) == 1 for v in spread.values())
    detail = "; ".join(f"{t} reads {v} (levels {report.levels.get(t)})" for t, v in spread.items())
    return Trend("point-query reads constant", ok, detail)


def trend_range_fraction(report: BenchReport, tolerance: float = 0.01) -> Trend:
    worst = 0.0
    recs = [r for r in report.queries if r.kind == "range"]
    for r in recs:
        worst = max(worst, abs(r.results / report.n - float(r.param)))
    return Trend("range counts match window area", bool(recs) and worst <= tolerance,
                 f"max |count/n - area| = {worst:.5f} over {len(recs)} windows")


def trend_range_reads(report: BenchReport, tolerance: float = 0.20) -> Trend:
    """Each axis tree: two corner descents plus one lookup per result."""
    worst = 0.0
    recs = [r for r in report.queries if r.kind == "range"]
    for r in recs:
        for t in report.trees[:-1]:
            expected = (r.results + 2) * report.levels[t]
            worst = max(worst, abs(r.reads[t] - expected) / expected)
    return Trend("range B+ reads = (count+2) x levels", bool(recs) and worst <= tolerance,
                 f"max relative error {worst:.4f}")


def trends(report: BenchReport) -> list:
    return [trend_pages_linear(report), trend_point_reads(report),
            trend_range_fraction(report), trend_range_reads(report)]
