"""``sope`` command-line tool: keygen, serve, load, query and bench."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import bench
from .cipher import CipherError, generate_key, load_key, make_cipher, save_key
from .client import Client, ContinuousNNError, ServerError
from .datasets import DOMAIN, CsvError, read_csv, uniform_points
from .geometry import Rect, Segment
from .pager import PageError
from .protocol import ProtocolError
from .server import LoopbackTransport, Store, TcpServer, TcpTransport, parse_address

KEY_ENV = "SOPE_KEY_FILE"
QUERIES = ("point", "range", "skyline", "gskyline", "dskyline", "knn", "cknn", "cskyline",
           "rknn", "cnn")


class UsageError(Exception):
    pass


# -- argument helpers ---------------------------------------------------------------

def _ints(text: str, name: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated integers, got {text!r}") from None


def _need(args, name):
    value = getattr(args, name)
    if value is None:
        raise UsageError(f"this query needs --{name}")
    return value


def _point(args, d):
    q = _ints(_need(args, "q"), "q")
    if len(q) != d:
        raise UsageError(f"--q needs {d} coordinates")
    return q


def _box(args, d):
    v = _ints(_need(args, "box"), "box")
    if len(v) != 2 * d:
        raise UsageError(f"--box needs {2 * d} integers: the low corner then the high corner")
    lo, hi = v[:d], v[d:]
    if any(a > b for a, b in zip(lo, hi)):
        raise UsageError("--box low corner exceeds the high corner")
    return Rect(lo, hi)


def _k(args, default=1):
    k = default if args.k is None else args.k
    if k < 1:
        raise UsageError("--k must be at least 1")
    return k


def _segment(args, d):
    v = _ints(_need(args, "seg"), "seg")
    if len(v) != 2 * d:
        raise UsageError(f"--seg needs {2 * d} integers: the start point then the end point")
    return Segment(v[:d], v[d:])


def _cipher(kind: str, key: bytes = None):
    if kind == "auto":
        try:
            import cryptography  # noqa: F401
            kind = "aes"
        except ImportError:
            kind = "test"
    return make_cipher(kind, key)


def _key(args) -> bytes:
    path = args.key or os.environ.get(KEY_ENV)
    if not path:
        raise UsageError(f"no key: pass --key or set {KEY_ENV}")
    return load_key(path)


def _connect(args):
    """Client on ``--connect``; the dimension comes from the server's stats."""
    transport = TcpTransport(*parse_address(args.connect))
    probe = Client(transport, None, 0)
    d = sum(1 for name in bench.parse_stats(probe.stats()) if name.startswith("axis"))
    return Client(transport, _cipher(args.cipher, _key(args)), d)


def _fmt(p) -> str:
    return f"p{p.id} " + ",".join(str(v) for v in p.coords)


# -- commands -----------------------------------------------------------------------

def cmd_keygen(args) -> int:
    if os.path.exists(args.out) and not args.force:
        raise UsageError(f"{args.out} exists; pass --force to overwrite")
    save_key(args.out, generate_key())
    print(f"wrote key to {args.out}")
    return 0


def cmd_serve(args) -> int:
    store = Store.open(args.pages, d=args.dims, branching=args.branching)
    server = TcpServer(store, parse_address(args.listen))
    host, port = server.server_address[:2]
    print(f"serving {args.pages} (d={store.d}, {store.count} points) on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        store.close()
    return 0


def _print_checkpoint(cp):
    reads = " ".join(f"{t}={v}" for t, v in cp.reads.items())
    writes = " ".join(f"{t}={v}" for t, v in cp.writes.items())
    print(f"checkpoint points={cp.points} wall={cp.wall:.2f}s pages={cp.total_pages} "
          f"round_trips={cp.round_trips} reads[{reads}] writes[{writes}]", flush=True)


def cmd_load(args) -> int:
    client = _connect(args)
    rows = list(read_csv(args.csv))
    for number, p in rows:
        if len(p.coords) != client.d:
            raise UsageError(f"row {number}: server stores {client.d}-dimensional points")
    marks = set(bench.checkpoint_marks(len(rows)))
    base = bench.parse_stats(client.stats())
    rt0 = client.round_trips
    start = time.perf_counter()
    for i, (number, p) in enumerate(rows, start=1):
        try:
            client.insert(p)
        except ServerError as exc:
            print(f"error: row {number}: {exc}", file=sys.stderr)
            print(f"inserted {i - 1}")
            return 1
        if i in marks:
            now = bench.parse_stats(client.stats())
            _print_checkpoint(bench.Checkpoint(
                i, time.perf_counter() - start, bench.counter_delta(now, base, "reads"),
                bench.counter_delta(now, base, "writes"), {t: r["pages"] for t, r in now.items()},
                client.round_trips - rt0))
    print(f"inserted {len(rows)}")
    return 0


def _run_query(client, args) -> list:
    """Returns the output lines for one query subcommand."""
    d, kind = client.d, args.kind
    if kind == "point":
        return ["TRUE" if client.point_query(_point(args, d)) else "FALSE"]
    if kind == "range":
        points = client.range_query(_box(args, d))
    elif kind == "skyline":
        points = client.skyline()
    elif kind == "cskyline":
        points = client.constrained_skyline(_box(args, d))
    elif kind == "dskyline":
        points = client.dynamic_skyline(_point(args, d))
    elif kind == "gskyline":
        k = _k(args)
        layers = client.global_skyline(_point(args, d), k)
        tagged = sorted((p.id, i, p) for i, layer in enumerate(layers) for p in layer)
        return [f"{_fmt(p)} layer={i}" for _, i, p in tagged]
    elif kind in ("knn", "cknn"):
        q, k = _point(args, d), _k(args)
        found = client.knn(q, k) if kind == "knn" else client.constrained_knn(_box(args, d), q, k)
        return [f"{_fmt(p)} d2={dist}" for p, dist in sorted(found, key=lambda t: t[0].id)]
    elif kind == "rknn":
        points = client.reverse_knn(_point(args, d), _k(args))
    else:
        try:
            tiles = client.continuous_1nn(_segment(args, d))
        except ContinuousNNError as exc:
            print(f"warning: {exc}; printing the partial tiling", file=sys.stderr)
            tiles = exc.partial
        return [f"p{t.id} t=[{t.t0:.9f},{t.t1:.9f}]" for t in tiles]
    return [_fmt(p) for p in sorted(points, key=lambda p: p.id)]


def cmd_query(args) -> int:
    client = _connect(args)
    before = bench.parse_stats(client.stats()) if args.stats else None
    rt0 = client.round_trips
    lines = _run_query(client, args)
    for line in lines:
        print(line)
    if args.stats:
        rt = client.round_trips - rt0
        reads = bench.counter_delta(bench.parse_stats(client.stats()), before, "reads")
        print("reads " + " ".join(f"{t}={v}" for t, v in reads.items())
              + f" total={sum(reads.values())} round_trips={rt}")
    return 0


def cmd_bench(args) -> int:
    if args.csv:
        points = [p for _, p in read_csv(args.csv)]
        if not points:
            raise UsageError(f"{args.csv} holds no points")
        d = len(points[0].coords)
        domain = max(DOMAIN, max(max(p.coords) for p in points) + 1)
    else:
        if args.n < 1 or args.d < 1:
            raise UsageError("--n and --d must be positive")
        d, domain = args.d, DOMAIN
        points = uniform_points(args.n, d, args.seed)
    store = Store.memory(d, args.branching)
    client = Client(LoopbackTransport(store), _cipher(args.cipher, generate_key()), d)
    report = bench.run(client, points, d, args.seed, args.queries, domain, _print_checkpoint)
    for path in bench.write_report(report, args.out):
        print(f"wrote {path}")
    if args.queries > 0:
        for trend in bench.trends(report):
            print(f"{'PASS' if trend.passed else 'FAIL'} {trend.name}: {trend.detail}")
    return 0


# -- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sope", description="Spatial order-preserving "
                                     "encrypted index: server, client and benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="write a fresh 32-byte key")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("serve", help="serve a page directory over TCP")
    p.add_argument("--pages", required=True, help="directory holding the page files")
    p.add_argument("--listen", default="127.0.0.1:7400", help="host:port (port 0 picks one)")
    p.add_argument("--branching", type=int, help="B+-tree fan-out for a new store")
    p.add_argument("--dims", type=int, default=2, help="dimension of a new store")
    p.set_defaults(func=cmd_serve)

    def client_flags(p):
        p.add_argument("--connect", default="127.0.0.1:7400")
        p.add_argument("--key", help=f"key file (default: ${KEY_ENV})")
        p.add_argument("--cipher", choices=("auto", "aes", "test"), default="auto")

    p = sub.add_parser("load", help="insert the rows of a CSV file")
    p.add_argument("csv")
    client_flags(p)
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("query", help="run one query and print plaintext results")
    p.add_argument("kind", choices=QUERIES)
    p.add_argument("--q", help="query point x1,...,xd")
    p.add_argument("--box", help="window lo1,...,lod,hi1,...,hid")
    p.add_argument("--k", type=int)
    p.add_argument("--seg", help="segment a1,...,ad,b1,...,bd")
    p.add_argument("--stats", action="store_true", help="print page reads for the query")
    client_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="load a dataset in-process and run the query mix")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="load this CSV instead of generating points")
    p.add_argument("--out", default="bench-out", help="directory for CSV and PNG output")
    p.add_argument("--queries", type=int, default=20, help="queries per battery (0 skips)")
    p.add_argument("--branching", type=int)
    p.add_argument("--cipher", choices=("auto", "aes", "test"), default="auto")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CsvError, CipherError, PageError, ServerError, ProtocolError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
