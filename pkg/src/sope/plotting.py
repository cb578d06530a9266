"""PNG figures for a bench report (headless matplotlib)."""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_load(report, path: str) -> str:
    xs = [c.points for c in report.checkpoints]
    fig, (ax_pages, ax_time) = plt.subplots(1, 2, figsize=(10, 4))
    for t in report.trees:
        ax_pages.plot(xs, [c.pages[t] for c in report.checkpoints], marker="o", label=t)
    ax_pages.plot(xs, [c.total_pages for c in report.checkpoints], marker="s", color="k", label="total")
    ax_pages.set(xlabel="points inserted", ylabel="pages", title="Index size")
    ax_pages.legend()
    ax_time.plot(xs, [c.wall for c in report.checkpoints], marker="o", label="wall time (s)")
    io = [sum(c.reads.values()) + sum(c.writes.values()) for c in report.checkpoints]
    ax_io = ax_time.twinx()
    ax_io.plot(xs, [v / max(x, 1) for v, x in zip(io, xs)], marker="^", color="tab:red",
               label="page I/O per insert")
    ax_time.set(xlabel="points inserted", ylabel="seconds", title="Load cost")
    ax_io.set_ylabel("page accesses per insert")
    return _save(fig, path)


def plot_queries(report, path: str) -> str:
    groups = defaultdict(list)
    for r in report.queries:
        label = r.kind if r.kind == "point" else (
            f"{r.kind} k={r.k}" if r.kind in ("knn", "rknn") else f"{r.kind} {float(r.param):.0%}")
        groups[label].append(r)
    labels = list(groups)
    reads = [sum(sum(r.reads.values()) for r in rs) / len(rs) for rs in groups.values()]
    times = [sum(r.wall_ms for r in rs) / len(rs) for rs in groups.values()]
    fig, (ax_reads, ax_time) = plt.subplots(1, 2, figsize=(12, 4))
    ax_reads.bar(labels, reads)
    ax_reads.set(ylabel="mean page reads", title="Query I/O")
    ax_time.bar(labels, times, color="tab:orange")
    ax_time.set(ylabel="mean wall time (ms)", title="Query time")
    for ax in (ax_reads, ax_time):
        ax.tick_params(axis="x", rotation=60)
    return _save(fig, path)


def render(report, out_dir: str) -> list:
    paths = []
    if report.checkpoints:
        paths.append(plot_load(report, os.path.join(out_dir, "load.png")))
    if report.queries:
        paths.append(plot_queries(report, os.path.join(out_dir, "queries.png")))
    return paths
