"""Simulated untrusted storage: a data region and a metadata region on disk.

The data file holds raw ciphertext blocks at ``block_size`` stride. The
metadata file holds fixed 80-byte little-endian node records:

    offset  size  field
    0       8     parent node id (NONE sentinel when absent/implicit)
    8       8     left child id
    16      8     right child id
    24      8     hotness counter (signed)
    32      32    digest
    64      12    iv (leaves only, zero otherwise)
    76      4     flags: bit 0 = leaf, bits 1..31 = block id + 1 (0 = unbound)

A record's node id is implicit in its position: record i lives at byte
``i * 80``. Balanced-tree layouts compute structure arithmetically and store
NONE in all pointer fields; pointer topologies persist real ids.

Both regions are attacker territory. ``tamper()`` mutates them for integrity
tests and is refused unless the store was opened with ``allow_tamper``; it
never touches trusted state (anchor, cache), which lives elsewhere.
"""

from __future__ import annotations

import mmap
import os
import struct
import time
from dataclasses import dataclass, replace

from .core import DEFAULT_BLOCK_SIZE, DIGEST_SIZE, IV_SIZE, RangeError, UsageError, ZERO_DIGEST

NONE_ID = 0xFFFF_FFFF_FFFF_FFFF
NODE_RECORD_SIZE = 80
_RECORD = struct.Struct("<QQQq32s12sI")
assert _RECORD.size == NODE_RECORD_SIZE

_FLAG_LEAF = 0x1
ZERO_IV = b"\x00" * IV_SIZE


@dataclass
class NodeRecord:
    """In-memory image of one on-disk tree node record."""

    node_id: int
    parent: int = NONE_ID
    left: int = NONE_ID
    right: int = NONE_ID
    hotness: int = 0
    digest: bytes = ZERO_DIGEST
    iv: bytes = ZERO_IV
    is_leaf: bool = False
    block: int | None = None

    def pack(self) -> bytes:
        flags = _FLAG_LEAF if self.is_leaf else 0
        if self.block is not None:
            flags |= (self.block + 1) << 1
        return _RECORD.pack(
            self.parent, self.left, self.right, self.hotness, self.digest, self.iv, flags
        )

    @classmethod
    def unpack(cls, node_id: int, raw: bytes) -> "NodeRecord":
        parent, left, right, hotness, digest, iv, flags = _RECORD.unpack(raw)
        block = (flags >> 1) - 1 if flags >> 1 else None
        return cls(node_id, parent, left, right, hotness, digest, iv, bool(flags & _FLAG_LEAF), block)

    def with_digest(self, digest: bytes) -> "NodeRecord":
        return replace(self, digest=digest)


@dataclass(frozen=True)
class StoreLayout:
    capacity_bytes: int
    max_nodes: int
    data_path: str
    meta_path: str
    block_size: int = DEFAULT_BLOCK_SIZE
    node_record_size: int = NODE_RECORD_SIZE

    @property
    def n_blocks(self) -> int:
        return self.capacity_bytes // self.block_size

    @property
    def data_size(self) -> int:
        return self.n_blocks * self.block_size

    @property
    def meta_size(self) -> int:
        return self.max_nodes * self.node_record_size


def _busy_wait_us(us: float) -> None:
    if us <= 0:
        return
    deadline = time.perf_counter_ns() + int(us * 1000)
    while time.perf_counter_ns() < deadline:
        pass


class BlockStore:
    """mmap-backed persistence for the data and metadata regions."""

    def __init__(
        self,
        layout: StoreLayout,
        simulate_device_latency_us: float = 0.0,
        allow_tamper: bool = False,
    ):
        self.layout = layout
        self.simulate_device_latency_us = simulate_device_latency_us
        self.allow_tamper = allow_tamper
        self._data_file = None
        self._meta_file = None
        self._data: mmap.mmap | None = None
        self._meta: mmap.mmap | None = None

    # -- lifecycle ---------------------------------------------------------

    def create(self) -> "BlockStore":
        """Create zero-filled data/metadata images and open them."""
        for path, size in ((self.layout.data_path, self.layout.data_size),
                           (self.layout.meta_path, self.layout.meta_size)):
            with open(path, "wb") as fh:
                fh.truncate(size)
        return self.open()

    def open(self) -> "BlockStore":
        for path, size in ((self.layout.data_path, self.layout.data_size),
                           (self.layout.meta_path, self.layout.meta_size)):
            if not os.path.exists(path) or os.path.getsize(path) != size:
                raise UsageError(f"store image {path} missing or mis-sized; run init first")
        self._data_file = open(self.layout.data_path, "r+b")
        self._meta_file = open(self.layout.meta_path, "r+b")
        self._data = mmap.mmap(self._data_file.fileno(), self.layout.data_size)
        self._meta = mmap.mmap(self._meta_file.fileno(), self.layout.meta_size)
        return self

    def flush(self) -> None:
        # Advisory only; torn-write/crash ordering is out of scope.
        if self._data is not None:
            self._data.flush()
        if self._meta is not None:
            self._meta.flush()

    def close(self) -> None:
        for m in (self._data, self._meta):
            if m is not None:
                m.flush()
                m.close()
        for fh in (self._data_file, self._meta_file):
            if fh is not None:
                fh.close()
        self._data = self._meta = None
        self._data_file = self._meta_file = None

    def __enter__(self) -> "BlockStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- data region -------------------------------------------------------

    def _block_span(self, block: int) -> tuple[int, int]:
        if not 0 <= block < self.layout.n_blocks:
            raise RangeError(f"block {block} out of range [0, {self.layout.n_blocks})")
        off = block * self.layout.block_size
        return off, off + self.layout.block_size

    def read_block_raw(self, block: int) -> bytes:
        start, end = self._block_span(block)
        _busy_wait_us(self.simulate_device_latency_us)
        return self._data[start:end]

    def write_block_raw(self, block: int, ciphertext: bytes) -> None:
        if len(ciphertext) != self.layout.block_size:
            raise UsageError(f"ciphertext must be {self.layout.block_size} bytes")
        start, end = self._block_span(block)
        _busy_wait_us(self.simulate_device_latency_us)
        self._data[start:end] = ciphertext

    # -- metadata region ----------------------------------------------------

    def _node_span(self, node: int) -> tuple[int, int]:
        if not 0 <= node < self.layout.max_nodes:
            raise RangeError(f"node {node} out of range [0, {self.layout.max_nodes})")
        off = node * NODE_RECORD_SIZE
        return off, off + NODE_RECORD_SIZE

    def read_node(self, node: int) -> NodeRecord:
        start, end = self._node_span(node)
        return NodeRecord.unpack(node, self._meta[start:end])

    def write_node(self, node: int, rec: NodeRecord) -> None:
        start, end = self._node_span(node)
        self._meta[start:end] = rec.pack()

    def read_node_digest(self, node: int) -> bytes:
        # Hot path: skip full struct decode when only the digest matters.
        start, _ = self._node_span(node)
        return self._meta[start + 32 : start + 64]

    # -- adversarial hooks ---------------------------------------------------

    def _region(self, region: str) -> mmap.mmap:
        if region == "data":
            return self._data
        if region == "meta":
            return self._meta
        raise UsageError(f"region must be data|meta, got {region!r}")

    def _check_tamper(self) -> None:
        if not self.allow_tamper:
            raise UsageError("tampering hooks are disabled outside test mode")

    def tamper_flip_bit(self, region: str, byte_offset: int, bit: int = 0) -> None:
        self._check_tamper()
        m = self._region(region)
        m[byte_offset] ^= 1 << (bit & 7)

    def tamper_overwrite(self, region: str, byte_offset: int, data: bytes) -> None:
        self._check_tamper()
        m = self._region(region)
        m[byte_offset : byte_offset + len(data)] = data

    def snapshot(self, region: str, byte_offset: int, length: int) -> bytes:
        """Record attacker-visible bytes for a later replay."""
        m = self._region(region)
        return m[byte_offset : byte_offset + length]

    def tamper_restore(self, region: str, byte_offset: int, snapshot: bytes) -> None:
        self._check_tamper()
        self.tamper_overwrite(region, byte_offset, snapshot)
