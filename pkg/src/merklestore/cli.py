"""Command-line harness.

Subcommands: ``init`` builds a device image, ``run`` drives a workload and
emits JSON/CSV reports, ``cost-model`` prints the fanout cost table,
``export-shape`` dumps the tree structure for plotting, ``trace-scale``
rescales a recorded trace to a new capacity.

Exit codes: 0 ok, 2 usage error, 3 integrity failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys

from .bench import (
    RunConfig,
    init_device,
    open_engine,
    run_benchmark,
    store_layout,
    verify_device,
)
from .core import RangeError, UsageError
from .costmodel import arity_cost, measure_hash_latency
from .crypto import KeyMaterial, write_key_file
from .engine import IntegrityError
from .topology import depth_histogram, export_shape_lines
from .workload import TraceParseError, parse_trace, scale_trace, serialize_trace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTEGRITY = 3
EXIT_IO = 4


def _add_device_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--capacity-bytes", type=int, required=True)
    p.add_argument("--data-path", required=True)
    p.add_argument("--meta-path", required=True)
    p.add_argument("--anchor-path", required=True)
    p.add_argument("--key-file", required=True)
    p.add_argument("--tree", default="balanced:2",
                   help="balanced:K | huffman:TRACE.csv | dmt")
    p.add_argument("--block-size", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--splay-p", type=float, default=0.01)
    p.add_argument("--splay-w", type=int, choices=(0, 1), default=1)
    p.add_argument("--fast-hash", action="store_true",
                   help="keyed BLAKE2b node hashing (faster; same hash counts)")


def _config_from(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        capacity_bytes=args.capacity_bytes,
        data_path=args.data_path,
        meta_path=args.meta_path,
        anchor_path=args.anchor_path,
        key_path=args.key_file,
        tree=args.tree,
        block_size=args.block_size,
        cache_ratio=getattr(args, "cache_ratio", 0.10),
        read_ratio=getattr(args, "read_ratio", 0.01),
        io_size=getattr(args, "io_size", 32768),
        threads=getattr(args, "threads", 1),
        iodepth=getattr(args, "iodepth", 32),
        splay_probability=args.splay_p,
        splay_window=bool(args.splay_w),
        seed=args.seed,
        workload=getattr(args, "workload", "zipf:2.5"),
        duration_s=getattr(args, "duration", 60.0),
        warmup_s=getattr(args, "warmup", 10.0),
        ops_per_second=getattr(args, "ops_per_second", 2000.0),
        simulate_device_latency_us=getattr(args, "simulate_device_latency_us", 0.0),
        fast_hash=args.fast_hash,
    )


def cmd_init(args: argparse.Namespace) -> int:
    config = _config_from(args)
    if args.create_key:
        if os.path.exists(args.key_file) and not args.force:
            raise UsageError(f"{args.key_file} exists; pass --force to overwrite")
        write_key_file(args.key_file, KeyMaterial.generate(random.Random(args.seed)))
    for data_dir in {os.path.dirname(os.path.abspath(config.data_path)),
                     os.path.dirname(os.path.abspath(config.meta_path))}:
        if os.path.dirname(os.path.abspath(args.key_file)) == data_dir:
            print("warning: key file shares a directory with untrusted images",
                  file=sys.stderr)
    anchor = init_device(config, force=args.force)
    layout = store_layout(config)
    print(f"initialized {config.tree} over {config.n_blocks} blocks "
          f"({layout.max_nodes} nodes); root generation {anchor.generation}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from(args)
    engine = open_engine(config)
    try:
        verify_device(engine)
        report = run_benchmark(config, engine)
    finally:
        engine.store.close()
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    if args.csv_out:
        report.write_csv(args.csv_out)
    print(f"ops {report.ops} ({report.read_ops} reads / {report.write_ops} writes), "
          f"{report.throughput_mb_s:.1f} MB/s wall, "
          f"hashes/write {report.mean_hashes_per_write:.2f}, "
          f"hashes/read {report.mean_hashes_per_read:.2f}, "
          f"cache hit rate {report.cache_hit_rate:.4f}")
    print(f"write p50 {report.write_p50_us or 0:.1f} us, "
          f"p99.9 {report.write_p999_us or 0:.1f} us; "
          f"root generation {report.final_anchor['generation']}")
    return EXIT_OK


def cmd_cost_model(args: argparse.Namespace) -> int:
    arities = [int(k) for k in args.arities.split(",")]
    table = measure_hash_latency([k * 32 for k in arities], iterations=args.iterations)
    lines = ["k,height,input_bytes,hash_ns,expected_ns_per_io"]
    for k in arities:
        height = math.ceil(math.log(args.n_blocks, k)) if args.n_blocks > 1 else 0
        size = k * 32
        cost = arity_cost(args.n_blocks, k, table, args.io_size, args.block_size)
        lines.append(f"{k},{height},{size},{table[size]:.1f},{cost:.1f}")
    out = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def cmd_export_shape(args: argparse.Namespace) -> int:
    config = _config_from(args)
    engine = open_engine(config)
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            for line in export_shape_lines(engine.topology):
                fh.write(line + "\n")
        if args.histogram_out:
            hist = depth_histogram(engine.topology)
            with open(args.histogram_out, "w", encoding="utf-8") as fh:
                fh.write("depth,leaves\n")
                for depth, count in hist.items():
                    fh.write(f"{depth},{count}\n")
    finally:
        engine.store.close()
    print(f"exported shape for {config.tree} to {args.out}")
    return EXIT_OK


def cmd_trace_scale(args: argparse.Namespace) -> int:
    ops = parse_trace(args.trace_in)
    scaled = scale_trace(ops, args.from_capacity, args.to_capacity)
    serialize_trace(scaled, args.trace_out)
    print(f"scaled {len(ops)} ops from {args.from_capacity} to {args.to_capacity} bytes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="merklestore",
        description="Authenticated block store with pluggable hash-tree strategies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create and seal a device image")
    _add_device_flags(p)
    p.add_argument("--create-key", action="store_true",
                   help="derive a key file from --seed instead of requiring one")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", help="drive a workload against an initialized image")
    _add_device_flags(p)
    p.add_argument("--workload", default="zipf:2.5",
                   help="uniform | zipf:THETA | trace:PATH | phases:zipf2.5@30,uniform@30,...")
    p.add_argument("--cache-ratio", type=float, default=0.10)
    p.add_argument("--read-ratio", type=float, default=0.01)
    p.add_argument("--io-size", type=int, default=32768)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--iodepth", type=int, default=32)
    p.add_argument("--duration", type=float, default=60.0, help="virtual seconds")
    p.add_argument("--warmup", type=float, default=10.0, help="virtual seconds excluded from metrics")
    p.add_argument("--ops-per-second", type=float, default=2000.0)
    p.add_argument("--simulate-device-latency-us", type=float, default=0.0)
    p.add_argument("--json-out")
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("cost-model", help="measured hash latency and per-I/O cost by fanout")
    p.add_argument("--n-blocks", type=int, default=262144)
    p.add_argument("--io-size", type=int, default=32768)
    p.add_argument("--block-size", type=int, default=4096)
    p.add_argument("--arities", default="2,4,8,64")
    p.add_argument("--iterations", type=int, default=10000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost_model)

    p = sub.add_parser("export-shape", help="dump tree structure and depth histogram")
    _add_device_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--histogram-out")
    p.set_defaults(func=cmd_export_shape)

    p = sub.add_parser("trace-scale", help="rescale a trace to a new capacity")
    p.add_argument("--in", dest="trace_in", required=True)
    p.add_argument("--out", dest="trace_out", required=True)
    p.add_argument("--from-capacity", type=int, required=True)
    p.add_argument("--to-capacity", type=int, required=True)
    p.set_defaults(func=cmd_trace_scale)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IntegrityError as exc:
        print("integrity failure:", file=sys.stderr)
        print(json.dumps(exc.forensic(), indent=2), file=sys.stderr)
        return EXIT_INTEGRITY
    except (UsageError, RangeError, TraceParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
