"""Page-granular node storage with access accounting.

Every tree node lives in one 4096-byte page. Page 0 of each file is a header
owned by the tree. Each logical node read or write bumps a counter; there is
no buffer pool, so two identical traversals cost exactly twice as much.

Decoded nodes are held in an in-memory table and dirty pages are encoded and
written to the backing file on :meth:`Pager.commit`, which the server calls
at the end of every mutating session.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

PAGE_SIZE = 4096


class PageError(Exception):
    pass


@dataclass
class PageStats:
    reads: int = 0
    writes: int = 0

    def reset(self) -> None:
        self.reads = 0
        self.writes = 0

    def snapshot(self) -> "PageStats":
        return PageStats(self.reads, self.writes)

    def __sub__(self, other: "PageStats") -> "PageStats":
        return PageStats(self.reads - other.reads, self.writes - other.writes)


class MemoryFile:
    """Stand-in for a page file when nothing has to survive the process."""

    def __init__(self):
        self.pages: dict = {}

    def read_page(self, pid: int) -> bytes:
        return self.pages[pid]

    def write_page(self, pid: int, data: bytes) -> None:
        self.pages[pid] = data

    def page_count(self) -> int:
        return len(self.pages)

    def sync(self) -> None:
        pass

    def close(self) -> None:
        pass


class PageFile:
    def __init__(self, path: str):
        self.path = path
        flags = os.O_RDWR | os.O_CREAT
        self._fd = os.open(path, flags, 0o600)

    def read_page(self, pid: int) -> bytes:
        data = os.pread(self._fd, PAGE_SIZE, pid * PAGE_SIZE)
        if len(data) != PAGE_SIZE:
            raise PageError(f"{self.path}: short read of page {pid}")
        return data

    def write_page(self, pid: int, data: bytes) -> None:
        os.pwrite(self._fd, data, pid * PAGE_SIZE)

    def page_count(self) -> int:
        return os.fstat(self._fd).st_size // PAGE_SIZE

    def sync(self) -> None:
        os.fsync(self._fd)

    def close(self) -> None:
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1


def pad_page(data: bytes) -> bytes:
    if len(data) > PAGE_SIZE:
        raise PageError(f"node needs {len(data)} bytes, page holds {PAGE_SIZE}")
    return data + bytes(PAGE_SIZE - len(data))


@dataclass
class Pager:
    """Node table for one tree.

    ``codec`` supplies ``encode(node) -> bytes`` and ``decode(bytes) -> node``.
    """

    codec: object
    backing: object = field(default_factory=MemoryFile)
    stats: PageStats = field(default_factory=PageStats)
    trace: list = None

    def __post_init__(self):
        self._nodes: dict = {}
        self._dirty: set = set()
        self._next = 1

    # -- loading ---------------------------------------------------------
    def load_all(self) -> None:
        count = self.backing.page_count()
        for pid in range(1, count):
            self._nodes[pid] = self.codec.decode(self.backing.read_page(pid))
        self._next = max(count, 1)

    # -- accounting -------------------------------------------------------
    def read(self, pid: int):
        self.stats.reads += 1
        if self.trace is not None:
            self.trace.append(("r", pid))
        try:
            return self._nodes[pid]
        except KeyError:
            raise PageError(f"no such page {pid}") from None

    def write(self, pid: int, node) -> None:
        self.stats.writes += 1
        if self.trace is not None:
            self.trace.append(("w", pid))
        self._nodes[pid] = node
        self._dirty.add(pid)

    def alloc(self, node) -> int:
        pid = self._next
        self._next += 1
        self.write(pid, node)
        return pid

    def peek(self, pid: int):
        """Uncounted access, for invariant checks and snapshots only."""
        return self._nodes[pid]

    @property
    def page_count(self) -> int:
        """Node pages in use (the header page is not counted)."""
        return len(self._nodes)

    def page_ids(self):
        return sorted(self._nodes)

    # -- persistence ------------------------------------------------------
    def commit(self, header: bytes, sync: bool = True) -> None:
        for pid in sorted(self._dirty):
            self.backing.write_page(pid, pad_page(self.codec.encode(self._nodes[pid])))
        self._dirty.clear()
        self.backing.write_page(0, pad_page(header))
        if sync:
            self.backing.sync()

    def image(self) -> bytes:
        """Byte image of every node page in page-id order."""
        return b"".join(pad_page(self.codec.encode(self._nodes[pid])) for pid in self.page_ids())

    def close(self) -> None:
        self.backing.close()
