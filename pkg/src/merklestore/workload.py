"""Workload generation and trace ingestion.

Generators run on a virtual clock: ops carry synthetic nanosecond
timestamps spaced by the configured op rate, so a "60 second" run means the
same op sequence on every host and replays are exact. Skewed streams use a
Zipfian rank distribution mapped onto blocks through a rotation (the
``center``), which is how hotspots move between phases.

Trace files are minimal CSV (``t_ns,kind,offset,length`` header, UTF-8, LF)
so recorded workloads can be scaled and replayed; converters from external
recorders are out of scope but the format is one line per request.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Iterator

import numpy as np

from .core import DEFAULT_BLOCK_SIZE, UsageError, WorkloadOp

TRACE_HEADER = "t_ns,kind,offset,length"
TRACE_ALIGN = 512


class ZipfSampler:
    """Rank-r block drawn with probability proportional to 1/r^theta."""

    def __init__(self, n_blocks: int, theta: float, center: int = 0, seed: int = 0):
        if theta <= 0:
            raise UsageError(f"zipf theta must be > 0, got {theta}")
        if n_blocks < 1:
            raise UsageError("need at least one block")
        self.n_blocks = n_blocks
        self.theta = theta
        self.center = center % n_blocks
        ranks = np.arange(1, n_blocks + 1, dtype=np.float64)
        weights = ranks**-theta
        self._pmf = weights / weights.sum()
        self._cdf = np.cumsum(self._pmf)
        self._cdf[-1] = 1.0
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._buf: np.ndarray | None = None
        self._pos = 0

    def pmf(self) -> np.ndarray:
        """Probability per rank (rank 0 is the hottest)."""
        return self._pmf.copy()

    def next_block(self) -> int:
        if self._buf is None or self._pos >= len(self._buf):
            draws = self._rng.random(4096)
            self._buf = np.searchsorted(self._cdf, draws, side="right")
            self._pos = 0
        rank = int(self._buf[self._pos])
        self._pos += 1
        return (self.center + rank) % self.n_blocks

    def __iter__(self) -> Iterator[int]:
        while True:
            yield self.next_block()


class UniformSampler:
    def __init__(self, n_blocks: int, seed: int = 0):
        self.n_blocks = n_blocks
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._buf: np.ndarray | None = None
        self._pos = 0

    def next_block(self) -> int:
        if self._buf is None or self._pos >= len(self._buf):
            self._buf = self._rng.integers(0, self.n_blocks, size=4096)
            self._pos = 0
        block = int(self._buf[self._pos])
        self._pos += 1
        return block

    def __iter__(self) -> Iterator[int]:
        while True:
            yield self.next_block()


@dataclass(frozen=True)
class WorkloadSpec:
    """Shape and mix of one generated workload (or one phase of one)."""

    shape: str = "uniform"  # "uniform" | "zipf"
    theta: float = 2.5
    center: int | None = 0  # None: pick a random hotspot (phase behavior)
    read_ratio: float = 0.01
    io_size: int = 32768
    seed: int = 0

    def __post_init__(self) -> None:
        if self.shape not in ("uniform", "zipf"):
            raise UsageError(f"shape must be uniform|zipf, got {self.shape!r}")
        if not 0.0 <= self.read_ratio <= 1.0:
            raise UsageError("read_ratio must be in [0, 1]")
        if self.io_size % TRACE_ALIGN:
            raise UsageError(f"io_size must be a multiple of {TRACE_ALIGN}")
        if self.shape == "zipf" and self.theta <= 0:
            raise UsageError("zipf theta must be > 0")


class OpGenerator:
    """Deterministic op stream for one spec on the virtual clock."""

    def __init__(
        self,
        spec: WorkloadSpec,
        capacity_bytes: int,
        block_size: int = DEFAULT_BLOCK_SIZE,
        ops_per_second: float = 2000.0,
        t_start_ns: int = 0,
    ):
        if spec.io_size > capacity_bytes:
            raise UsageError("io_size exceeds capacity")
        self.spec = spec
        self.capacity_bytes = capacity_bytes
        self.block_size = block_size
        self.interval_ns = int(round(1e9 / ops_per_second))
        self.t_ns = t_start_ns
        n_blocks = capacity_bytes // block_size
        center = spec.center if spec.center is not None else 0
        if spec.shape == "zipf":
            self._sampler = ZipfSampler(n_blocks, spec.theta, center, spec.seed)
        else:
            self._sampler = UniformSampler(n_blocks, spec.seed)
        self._kind_rng = np.random.Generator(np.random.PCG64(spec.seed + 0x9E3779B9))

    def next_op(self) -> WorkloadOp:
        block = self._sampler.next_block()
        io = self.spec.io_size
        offset = (block * self.block_size) // io * io
        if offset + io > self.capacity_bytes:
            offset = (self.capacity_bytes - io) // io * io
        kind = "read" if self._kind_rng.random() < self.spec.read_ratio else "write"
        op = WorkloadOp(self.t_ns, kind, offset, io)
        self.t_ns += self.interval_ns
        return op

    def __iter__(self) -> Iterator[WorkloadOp]:
        while True:
            yield self.next_op()


def phase_schedule(
    phases: list[tuple[float, WorkloadSpec]],
    capacity_bytes: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    ops_per_second: float = 2000.0,
    seed: int = 0,
) -> Iterator[WorkloadOp]:
    """Concatenate specs on one continuous timeline, one after the other.

    Specs with ``center=None`` get a hotspot drawn fresh per phase, so
    successive skewed phases land on new regions of the address space.
    """
    if not phases:
        raise UsageError("phase schedule needs at least one phase")
    recenter_rng = np.random.Generator(np.random.PCG64(seed + 0x51))
    n_blocks = capacity_bytes // block_size
    t_ns = 0
    for duration_s, spec in phases:
        if spec.center is None:
            spec = replace(spec, center=int(recenter_rng.integers(0, n_blocks)))
        gen = OpGenerator(spec, capacity_bytes, block_size, ops_per_second, t_ns)
        end_ns = t_ns + int(duration_s * 1e9)
        while gen.t_ns < end_ns:
            yield gen.next_op()
        t_ns = end_ns


# -- trace files ---------------------------------------------------------------


class TraceParseError(UsageError):
    pass


def parse_trace(path) -> list[WorkloadOp]:
    ops: list[WorkloadOp] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise TraceParseError(f"{path}:1: expected header {TRACE_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise TraceParseError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                t_ns, offset, length = int(parts[0]), int(parts[2]), int(parts[3])
                kind = parts[1]
                ops.append(WorkloadOp(t_ns, kind, offset, length))
            except (ValueError, UsageError) as exc:
                raise TraceParseError(f"{path}:{lineno}: {exc}") from exc
    return ops


def serialize_trace(ops: Iterable[WorkloadOp], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_HEADER + "\n")
        for op in ops:
            fh.write(f"{op.t_ns},{op.kind},{op.offset},{op.length}\n")


def scale_trace(
    ops: list[WorkloadOp],
    from_capacity: int,
    to_capacity: int,
) -> list[WorkloadOp]:
    """Scale offsets and lengths by to/from, re-aligned to 512 bytes."""
    if from_capacity <= 0 or to_capacity <= 0:
        raise UsageError("capacities must be positive")
    scaled: list[WorkloadOp] = []
    for op in ops:
        offset = op.offset * to_capacity // from_capacity
        offset -= offset % TRACE_ALIGN
        length = op.length * to_capacity // from_capacity
        length = max(TRACE_ALIGN, (length + TRACE_ALIGN - 1) // TRACE_ALIGN * TRACE_ALIGN)
        if offset + length > to_capacity:
            offset = max(0, to_capacity - length)
            offset -= offset % TRACE_ALIGN
        scaled.append(WorkloadOp(op.t_ns, op.kind, offset, length))
    return scaled
