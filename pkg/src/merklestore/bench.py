"""Benchmark harness: device lifecycle, workload execution, reporting.

A run executes a deterministic op stream (virtual clock) against one engine
and reports counters, per-block hash means, latency percentiles, per-second
samples, and the end-of-run tree shape. Wall-clock figures (throughput,
latencies) vary by host; everything else is reproducible from config plus
seeds, including the final root anchor.

Submitter threads pull the next op and execute it while holding the
engine's global lock, so multi-threaded runs serialize exactly like the
single-threaded case and keep the op order (and therefore all counters)
deterministic. ``iodepth`` is accepted for config parity but cannot change
behavior under a fully serialized engine.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import asdict, dataclass, field

from .cache import SecureCache
from .core import DEFAULT_BLOCK_SIZE, RootAnchor, UsageError, WorkloadOp
from .crypto import CryptoProvider, FastCryptoProvider, KeyMaterial, load_key_file
from .dmt import DynamicMerkleTree, SplayPolicy
from .engine import (
    AuthenticatedEngine,
    IntegrityError,
    initialize_tree,
    load_anchor_file,
    save_anchor_file,
)
from .static_trees import BalancedTopology, build_huffman, trace_to_profile
from .store import BlockStore, StoreLayout
from .topology import depth_histogram
from .workload import OpGenerator, WorkloadSpec, parse_trace, phase_schedule


@dataclass
class RunConfig:
    """Everything a run needs; mirrors the CLI flags one to one."""

    capacity_bytes: int
    data_path: str
    meta_path: str
    anchor_path: str
    key_path: str
    tree: str = "balanced:2"  # balanced:K | huffman[:trace] | dmt
    block_size: int = DEFAULT_BLOCK_SIZE
    cache_ratio: float = 0.10
    read_ratio: float = 0.01
    io_size: int = 32768
    threads: int = 1
    iodepth: int = 32
    splay_probability: float = 0.01
    splay_window: bool = True
    seed: int = 0
    workload: str = "zipf:2.5"  # uniform | zipf:T | trace:PATH | phases:SPEC
    duration_s: float = 60.0
    warmup_s: float = 10.0
    ops_per_second: float = 2000.0
    simulate_device_latency_us: float = 0.0
    fast_hash: bool = False

    @property
    def n_blocks(self) -> int:
        return self.capacity_bytes // self.block_size

    def tree_kind(self) -> tuple[str, str | None]:
        kind, _, arg = self.tree.partition(":")
        if kind not in ("balanced", "huffman", "dmt"):
            raise UsageError(f"tree must be balanced:K | huffman[:trace] | dmt, got {self.tree!r}")
        return kind, arg or None


def total_nodes_for(config: RunConfig) -> int:
    kind, arg = config.tree_kind()
    n = config.n_blocks
    if kind == "balanced":
        return BalancedTopology(n, int(arg or 2)).total_nodes
    if kind == "huffman":
        return 2 * n - 1
    padded = 1
    while padded < n:
        padded <<= 1
    return 2 * padded - 1


def store_layout(config: RunConfig) -> StoreLayout:
    return StoreLayout(
        capacity_bytes=config.capacity_bytes,
        max_nodes=total_nodes_for(config),
        data_path=config.data_path,
        meta_path=config.meta_path,
        block_size=config.block_size,
    )


def make_provider(config: RunConfig, keys: KeyMaterial) -> CryptoProvider:
    cls = FastCryptoProvider if config.fast_hash else CryptoProvider
    return cls(keys, config.block_size)


def build_topology_for_init(config: RunConfig):
    kind, arg = config.tree_kind()
    n = config.n_blocks
    if kind == "balanced":
        return BalancedTopology(n, int(arg or 2))
    if kind == "dmt":
        return DynamicMerkleTree(
            n, SplayPolicy(config.splay_window, config.splay_probability, config.seed)
        )
    if arg is None:
        raise UsageError("huffman init needs a recorded trace: --tree huffman:TRACE.csv")
    trace = parse_trace(arg)
    profile = trace_to_profile(trace, config.block_size, config.capacity_bytes)
    return build_huffman(profile, n)


def init_device(config: RunConfig, force: bool = False) -> RootAnchor:
    """Create zeroed images, seal every block, build the tree, write anchor."""
    for path in (config.data_path, config.meta_path, config.anchor_path):
        if os.path.exists(path) and not force:
            raise UsageError(f"{path} exists; pass force to reinitialize")
    keys = load_key_file(config.key_path)
    topo = build_topology_for_init(config)
    layout = store_layout(config)
    provider = make_provider(config, keys)
    rng = random.Random(config.seed)
    with BlockStore(layout).create() as store:
        anchor = initialize_tree(store, topo, provider, rng)
    save_anchor_file(config.anchor_path, anchor)
    return anchor


def open_engine(config: RunConfig, allow_tamper: bool = False) -> AuthenticatedEngine:
    """Open an initialized device, rebuilding the topology from records."""
    keys = load_key_file(config.key_path)
    layout = store_layout(config)
    store = BlockStore(
        layout,
        simulate_device_latency_us=config.simulate_device_latency_us,
        allow_tamper=allow_tamper,
    ).open()
    kind, _ = config.tree_kind()
    n = config.n_blocks
    if kind == "balanced":
        _, arg = config.tree_kind()
        topo = BalancedTopology(n, int(arg or 2))
    elif kind == "dmt":
        topo = DynamicMerkleTree.from_records(
            n,
            store.read_node,
            SplayPolicy(config.splay_window, config.splay_probability, config.seed),
        )
    else:
        from .static_trees import HuffmanTopology

        topo = HuffmanTopology(n)
        topo.load_structure(store.read_node)
    anchor = load_anchor_file(config.anchor_path)
    cache = SecureCache(max(1, int(config.cache_ratio * topo.total_nodes)))
    return AuthenticatedEngine(
        store,
        topo,
        make_provider(config, keys),
        cache,
        anchor,
        anchor_path=config.anchor_path,
        seed=config.seed,
    )


def verify_device(engine: AuthenticatedEngine) -> None:
    """Full recomputation against the anchor; catches offline tampering."""
    recomputed = engine.recompute_root_full()
    if recomputed != engine.anchor.digest:
        raise IntegrityError(
            "stored tree does not match the trusted anchor",
            node=engine.topology.root_id,
            level=None,
            expected=engine.anchor.digest,
            computed=recomputed,
        )


# -- workload wiring -------------------------------------------------------------


def _parse_phase_token(token: str) -> WorkloadSpec:
    token = token.strip()
    if token == "uniform":
        return WorkloadSpec(shape="uniform", center=None)
    if token.startswith("zipf"):
        return WorkloadSpec(shape="zipf", theta=float(token[4:]), center=None)
    raise UsageError(f"unknown phase shape {token!r}")


def build_op_stream(config: RunConfig):
    """Yield the run's ops; exhausts at the configured duration."""
    kind, _, arg = config.workload.partition(":")
    end_ns = int(config.duration_s * 1e9)
    if kind == "trace":
        if not arg:
            raise UsageError("trace workload needs a path: trace:PATH")
        for op in parse_trace(arg):
            yield op
        return
    if kind == "phases":
        if not arg:
            raise UsageError("phases workload needs a schedule: phases:zipf2.5@30,uniform@30")
        phases = []
        for item in arg.split(","):
            shape, _, seconds = item.partition("@")
            spec = _parse_phase_token(shape)
            spec = _respec(spec, config)
            phases.append((float(seconds), spec))
        yield from phase_schedule(
            phases,
            config.capacity_bytes,
            config.block_size,
            config.ops_per_second,
            seed=config.seed,
        )
        return
    if kind == "uniform":
        spec = WorkloadSpec(shape="uniform", read_ratio=config.read_ratio,
                            io_size=config.io_size, seed=config.seed)
    elif kind == "zipf":
        spec = WorkloadSpec(shape="zipf", theta=float(arg or 2.5), center=0,
                            read_ratio=config.read_ratio, io_size=config.io_size,
                            seed=config.seed)
    else:
        raise UsageError(f"workload must be uniform|zipf:T|trace:P|phases:S, got {config.workload!r}")
    gen = OpGenerator(spec, config.capacity_bytes, config.block_size, config.ops_per_second)
    while gen.t_ns < end_ns:
        yield gen.next_op()


def _respec(spec: WorkloadSpec, config: RunConfig) -> WorkloadSpec:
    from dataclasses import replace

    return replace(spec, read_ratio=config.read_ratio, io_size=config.io_size, seed=config.seed)


# -- measurement -----------------------------------------------------------------


def percentile(samples: list[float], q: float) -> float | None:
    """Linear-interpolated percentile over the full retained sample set."""
    if not samples:
        return None
    ordered = sorted(samples)
    if len(ordered) == 1:
        return ordered[0]
    pos = (len(ordered) - 1) * q / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(ordered) - 1)
    frac = pos - lo
    return ordered[lo] * (1 - frac) + ordered[hi] * frac


@dataclass
class SecondSample:
    t_s: int
    ops: int = 0
    block_ops: int = 0
    node_hashes: int = 0
    bytes_moved: int = 0

    @property
    def hashes_per_block_op(self) -> float:
        return self.node_hashes / self.block_ops if self.block_ops else 0.0


@dataclass
class RunReport:
    config: dict
    elapsed_wall_s: float
    ops: int
    block_ops: int
    read_ops: int
    write_ops: int
    bytes_moved: int
    throughput_mb_s: float
    ops_per_s: float
    counters: dict
    mean_hashes_per_write: float
    mean_hashes_per_read: float
    cache_hit_rate: float
    read_p50_us: float | None
    read_p999_us: float | None
    write_p50_us: float | None
    write_p999_us: float | None
    per_second: list[dict]
    depth_histogram: dict[int, int]
    final_anchor: dict
    integrity_failure: dict | None = None

    def to_json(self) -> str:
        payload = asdict(self)
        payload["schema"] = "merklestore-run-report-v1"
        return json.dumps(payload, indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t_s,ops,block_ops,node_hashes,hashes_per_block_op,bytes\n")
            for row in self.per_second:
                fh.write(
                    f"{row['t_s']},{row['ops']},{row['block_ops']},{row['node_hashes']},"
                    f"{row['hashes_per_block_op']:.4f},{row['bytes']}\n"
                )


def run_benchmark(config: RunConfig, engine: AuthenticatedEngine | None = None) -> RunReport:
    """Drive the configured workload and assemble the report.

    Warmup ops execute but are excluded from every reported metric; counter
    totals are post-warmup deltas. The caller may hand in an open engine
    (tests do); otherwise one is opened and verified first.
    """
    own_engine = engine is None
    if own_engine:
        engine = open_engine(config)
        verify_device(engine)
    warmup_ns = int(config.warmup_s * 1e9)
    ops_iter = build_op_stream(config)

    seconds: dict[int, SecondSample] = {}
    read_lat_us: list[float] = []
    write_lat_us: list[float] = []
    totals = {"ops": 0, "block_ops": 0, "reads": 0, "writes": 0, "bytes": 0}
    hash_split = {"read": 0, "write": 0}
    block_split = {"read": 0, "write": 0}
    baseline: dict[str, int] | None = None
    cache_base = (0, 0)
    failure: dict | None = None
    wall_start = time.perf_counter()

    def execute(op: WorkloadOp) -> None:
        nonlocal baseline, cache_base
        counters = engine.counters
        if baseline is None and op.t_ns >= warmup_ns:
            baseline = counters.snapshot()
            cache_base = (counters.cache_hits, counters.cache_misses)
        hashes_before = counters.node_hashes_computed
        result = engine.io(op)
        if op.t_ns < warmup_ns:
            return
        hashes = counters.node_hashes_computed - hashes_before
        totals["ops"] += 1
        totals["block_ops"] += result.blocks
        totals["bytes"] += op.length
        hash_split[op.kind] += hashes
        block_split[op.kind] += result.blocks
        if op.kind == "read":
            totals["reads"] += 1
            read_lat_us.append(result.wall_ns / 1000.0)
        else:
            totals["writes"] += 1
            write_lat_us.append(result.wall_ns / 1000.0)
        sec = int(op.t_ns // 1_000_000_000)
        sample = seconds.get(sec)
        if sample is None:
            sample = seconds[sec] = SecondSample(sec)
        sample.ops += 1
        sample.block_ops += result.blocks
        sample.node_hashes += hashes
        sample.bytes_moved += op.length

    stop = threading.Event()
    error_box: list[BaseException] = []

    def worker() -> None:
        while not stop.is_set():
            with engine.lock:
                try:
                    op = next(ops_iter)
                except StopIteration:
                    return
                try:
                    execute(op)
                except IntegrityError as exc:
                    error_box.append(exc)
                    stop.set()
                    return

    if config.threads <= 1:
        worker()
    else:
        threads = [threading.Thread(target=worker) for _ in range(config.threads)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    elapsed = time.perf_counter() - wall_start
    engine.flush()
    if error_box:
        if own_engine:
            engine.store.close()
        raise error_box[0]

    if baseline is None:
        baseline = engine.counters.snapshot()
    counters = engine.counters.delta(baseline)
    hits = engine.counters.cache_hits - cache_base[0]
    misses = engine.counters.cache_misses - cache_base[1]
    lookups = hits + misses

    report = RunReport(
        config=asdict(config),
        elapsed_wall_s=elapsed,
        ops=totals["ops"],
        block_ops=totals["block_ops"],
        read_ops=totals["reads"],
        write_ops=totals["writes"],
        bytes_moved=totals["bytes"],
        throughput_mb_s=totals["bytes"] / (1024 * 1024) / elapsed if elapsed > 0 else 0.0,
        ops_per_s=totals["ops"] / elapsed if elapsed > 0 else 0.0,
        counters=counters,
        mean_hashes_per_write=hash_split["write"] / block_split["write"] if block_split["write"] else 0.0,
        mean_hashes_per_read=hash_split["read"] / block_split["read"] if block_split["read"] else 0.0,
        cache_hit_rate=hits / lookups if lookups else 0.0,
        read_p50_us=percentile(read_lat_us, 50),
        read_p999_us=percentile(read_lat_us, 99.9),
        write_p50_us=percentile(write_lat_us, 50),
        write_p999_us=percentile(write_lat_us, 99.9),
        per_second=[
            {
                "t_s": s.t_s,
                "ops": s.ops,
                "block_ops": s.block_ops,
                "node_hashes": s.node_hashes,
                "hashes_per_block_op": s.hashes_per_block_op,
                "bytes": s.bytes_moved,
            }
            for s in sorted(seconds.values(), key=lambda s: s.t_s)
        ],
        depth_histogram=depth_histogram(engine.topology),
        final_anchor={
            "digest": engine.anchor.digest.hex(),
            "generation": engine.anchor.generation,
        },
        integrity_failure=failure,
    )
    if own_engine:
        engine.store.close()
    return report
