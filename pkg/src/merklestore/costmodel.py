"""Analytical cost calculators: hash-latency profiling, expected hashing
cost per I/O as a function of tree fanout, and the cache-extended
average-access-time work model.

Costs come in two currencies. Structural quantities are expressed in
expected hashes (the unit constant of the work model is one hash); the
latency table converts them to nanoseconds for the host actually running.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import os
import time
from dataclasses import dataclass, field

from .core import DEFAULT_BLOCK_SIZE, DIGEST_SIZE, FrequencyProfile, UsageError


@dataclass
class LatencyTable:
    """Mean keyed-hash latency (ns) per input size, measured on this host."""

    latency_ns: dict[int, float] = field(default_factory=dict)

    def __getitem__(self, size: int) -> float:
        if size not in self.latency_ns:
            raise UsageError(f"latency table has no entry for input size {size}")
        return self.latency_ns[size]

    def __contains__(self, size: int) -> bool:
        return size in self.latency_ns

    def is_monotone(self, slack: float = 1.2) -> bool:
        """True when latency does not shrink by more than ``slack`` headroom
        as inputs grow; measurement jitter earns the headroom."""
        sizes = sorted(self.latency_ns)
        return all(
            self.latency_ns[b] * slack >= self.latency_ns[a]
            for a, b in zip(sizes, sizes[1:])
        )


def measure_hash_latency(
    sizes: list[int],
    iterations: int = 10_000,
    warmup: int = 1_000,
    key: bytes | None = None,
) -> LatencyTable:
    """Time keyed SHA-256 over each input size; mean of ``iterations`` runs."""
    key = key or os.urandom(32)
    base = hmac.new(key, digestmod=hashlib.sha256)
    table = LatencyTable()
    for size in sizes:
        payload = os.urandom(size)
        for _ in range(warmup):
            h = base.copy()
            h.update(payload)
            h.digest()
        start = time.perf_counter_ns()
        for _ in range(iterations):
            h = base.copy()
            h.update(payload)
            h.digest()
        elapsed = time.perf_counter_ns() - start
        table.latency_ns[size] = elapsed / iterations
    return table


def arity_sizes(arities: list[int]) -> list[int]:
    """Hash input sizes implied by fanouts: k children of 32-byte digests."""
    return [k * DIGEST_SIZE for k in arities]


def arity_cost(
    n_blocks: int,
    k: int,
    table: LatencyTable,
    io_size: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> float:
    """Expected hashing nanoseconds for one I/O under a balanced k-ary tree.

    blocks-per-I/O x tree height x hash latency at this fanout's input size.
    """
    if n_blocks < 1 or k < 2:
        raise UsageError("need n_blocks >= 1 and k >= 2")
    height = math.ceil(math.log(n_blocks, k)) if n_blocks > 1 else 0
    input_size = k * DIGEST_SIZE
    blocks_per_io = io_size // block_size
    return blocks_per_io * height * table[input_size]


@dataclass(frozen=True)
class CostParams:
    """Work-model constants: hit cost H, miss rate m, miss penalty D (ns)."""

    hit_ns: float
    miss_rate: float
    miss_penalty_ns: float

    def __post_init__(self) -> None:
        if self.hit_ns < 0 or self.miss_penalty_ns < 0:
            raise UsageError("costs must be non-negative")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise UsageError(f"miss rate must be in [0, 1], got {self.miss_rate}")


def amat(params: CostParams) -> float:
    """Average access time: hit time plus miss rate times miss penalty."""
    return params.hit_ns + params.miss_rate * params.miss_penalty_ns


def total_work(
    profile: FrequencyProfile,
    depths: dict[int, int],
    params: CostParams,
) -> tuple[float, float]:
    """Split expected work into (base_work, io_cost).

    Base work is the expected number of hashes per access (unit constant 1);
    the I/O term scales the same sum by miss rate times miss penalty. With a
    perfect cache the I/O term vanishes and total work is the base exactly.
    """
    missing = [b for b in profile.freq if b not in depths]
    if missing:
        raise UsageError(f"depth map does not cover blocks {missing[:5]}")
    weighted = sum(f * depths[b] for b, f in profile.freq.items())
    base_work = weighted
    io_cost = params.miss_rate * params.miss_penalty_ns * weighted
    return base_work, io_cost
