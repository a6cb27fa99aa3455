"""The verify/update engine over a pluggable tree topology.

Reads authenticate the sealed block, then recompute digests up the leaf's
path until hitting either a cached (already authenticated) ancestor or the
trusted root anchor; the first match proves authenticity and freshness.
Writes reseal the block under a fresh IV and recompute every ancestor up to
the root unconditionally, so the anchor always reflects the latest commit.

Sibling digests fetched during an update are absorbed into the new root
without a separate chain check (one hash per level, the whole point of the
cost model); tampering with them surfaces as an integrity failure on the
next read that descends through the affected subtree. Verification-fetched
digests, by contrast, are chain-validated before they are cached.

All state transitions happen under one global re-entrant lock; concurrent
callers serialize per I/O request.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import asdict, dataclass, field

from .core import (
    DEFAULT_BLOCK_SIZE,
    IV_SIZE,
    RangeError,
    RootAnchor,
    WorkloadOp,
    ZERO_DIGEST,
    blocks_for_io,
)
from .crypto import AuthenticityError, CryptoProvider, SealedBlock, leaf_digest, mac_from_leaf_digest
from .cache import CacheEntry, SecureCache
from .store import NONE_ID, BlockStore, NodeRecord, ZERO_IV
from .topology import PointerTopology, Topology, iter_bottom_up


class IntegrityError(Exception):
    """Verification failed: the untrusted image disagrees with trusted state."""

    def __init__(
        self,
        message: str,
        block: int | None = None,
        node: int | None = None,
        level: int | None = None,
        expected: bytes | None = None,
        computed: bytes | None = None,
    ):
        super().__init__(message)
        self.block = block
        self.node = node
        self.level = level
        self.expected = expected
        self.computed = computed

    def forensic(self) -> dict:
        return {
            "error": str(self),
            "block": self.block,
            "node": self.node,
            "level": self.level,
            "expected": self.expected.hex() if self.expected else None,
            "computed": self.computed.hex() if self.computed else None,
        }


@dataclass
class OpCounters:
    """Monotone instrumentation totals for one engine lifetime."""

    node_hashes_computed: int = 0
    bytes_hashed: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    meta_reads: int = 0
    meta_writes: int = 0
    data_reads: int = 0
    data_writes: int = 0
    block_seals: int = 0
    block_opens: int = 0
    block_updates: int = 0
    block_verifies: int = 0
    splays_performed: int = 0
    rotations_performed: int = 0

    def snapshot(self) -> dict[str, int]:
        return asdict(self)

    def delta(self, since: dict[str, int]) -> dict[str, int]:
        now = asdict(self)
        return {k: now[k] - since.get(k, 0) for k in now}


@dataclass
class IoResult:
    op: WorkloadOp
    blocks: int
    wall_ns: int
    generation: int
    data: bytes | None = None


def anchor_path_bytes(anchor: RootAnchor) -> bytes:
    return anchor.pack()


def load_anchor_file(path) -> RootAnchor:
    with open(path, "rb") as fh:
        return RootAnchor.unpack(fh.read())


def save_anchor_file(path, anchor: RootAnchor) -> None:
    with open(path, "wb") as fh:
        fh.write(anchor.pack())


class AuthenticatedEngine:
    """Block read/write API with hash-tree integrity and a secure cache."""

    def __init__(
        self,
        store: BlockStore,
        topology: Topology,
        provider: CryptoProvider,
        cache: SecureCache,
        anchor: RootAnchor,
        anchor_path=None,
        seed: int = 0,
    ):
        self.store = store
        self.topology = topology
        self.provider = provider
        self.cache = cache
        self.anchor = anchor
        self.anchor_path = anchor_path
        self.counters = OpCounters()
        self.lock = threading.RLock()
        self.rng = random.Random(seed)
        self.block_size = store.layout.block_size
        self.capacity_bytes = store.layout.n_blocks * self.block_size

    # -- small counted primitives -------------------------------------------

    def hash_children(self, digests: list[bytes]) -> bytes:
        self.counters.node_hashes_computed += 1
        self.counters.bytes_hashed += sum(len(d) for d in digests)
        return self.provider.node_digest(digests)

    def _cache_lookup(self, node: int) -> CacheEntry | None:
        entry = self.cache.get(node)
        if entry is None:
            self.counters.cache_misses += 1
        else:
            self.counters.cache_hits += 1
        return entry

    def _disk_digest(self, node: int) -> bytes:
        self.counters.meta_reads += 1
        return self.store.read_node_digest(node)

    def _read_record(self, node: int) -> NodeRecord:
        self.counters.meta_reads += 1
        return self.store.read_node(node)

    def _write_back(self, entry: CacheEntry) -> None:
        topo = self.topology
        node = entry.node
        iv = entry.iv
        is_leaf = topo.is_leaf(node)
        if is_leaf and iv is None:
            iv = self._read_record(node).iv  # keep the persisted IV we never saw
        if isinstance(topo, PointerTopology):
            parent = topo.parent(node)
            kids = topo.children(node)
            rec = NodeRecord(
                node,
                parent=NONE_ID if parent is None else parent,
                left=kids[0] if kids else NONE_ID,
                right=kids[1] if len(kids) > 1 else NONE_ID,
                hotness=entry.hotness,
                digest=entry.digest,
                iv=iv or ZERO_IV,
                is_leaf=is_leaf,
                block=topo.block_of(node),
            )
        else:
            # Arithmetic layouts persist no pointers (NONE sentinels).
            rec = NodeRecord(
                node,
                hotness=entry.hotness,
                digest=entry.digest,
                iv=iv or ZERO_IV,
                is_leaf=is_leaf,
                block=topo.block_of(node),
            )
        self.counters.meta_writes += 1
        self.store.write_node(node, rec)

    def set_node_digest(self, node: int, digest: bytes, iv: bytes | None = None) -> None:
        """Record a trusted digest for a node and mark it for write-back."""
        victim = self.cache.insert_authenticated(node, digest, iv=iv, dirty=True)
        if victim is not None and victim.dirty:
            self._write_back(victim)

    def _cache_clean(self, node: int, digest: bytes, iv: bytes | None = None) -> None:
        victim = self.cache.insert_authenticated(node, digest, iv=iv, dirty=False)
        if victim is not None and victim.dirty:
            self._write_back(victim)

    def mark_structure_dirty(self, node: int) -> None:
        """Persist a pointer-only change for an already-authenticated node."""
        if self.cache.peek(node) is None:
            self.authenticate_node(node)
        self.cache.mark_dirty(node)

    def commit_root(self, digest: bytes) -> RootAnchor:
        self.anchor = self.anchor.advanced(digest)
        return self.anchor

    # -- authentication chains ----------------------------------------------

    def _authenticate_chain(
        self,
        node: int,
        computed: bytes,
        iv: bytes | None,
        block: int | None,
    ) -> None:
        """Validate ``computed`` for ``node`` against the first cached ancestor
        or the root anchor, then cache every digest the chain touched."""
        topo = self.topology
        pending: list[tuple[int, bytes, bytes | None]] = [(node, computed, iv)]
        level = 0
        while True:
            parent = topo.parent(node)
            if parent is None:
                if computed != self.anchor.digest:
                    raise IntegrityError(
                        "root anchor mismatch",
                        block=block,
                        node=node,
                        level=level,
                        expected=self.anchor.digest,
                        computed=computed,
                    )
                break
            digests = []
            for child in topo.children(parent):
                if child == node:
                    digests.append(computed)
                    continue
                entry = self._cache_lookup(child)
                if entry is not None:
                    digests.append(entry.digest)
                else:
                    fetched = self._disk_digest(child)
                    digests.append(fetched)
                    pending.append((child, fetched, None))
            computed = self.hash_children(digests)
            level += 1
            node = parent
            entry = self._cache_lookup(node)
            if entry is not None:
                if entry.digest != computed:
                    raise IntegrityError(
                        "authenticated ancestor mismatch",
                        block=block,
                        node=node,
                        level=level,
                        expected=entry.digest,
                        computed=computed,
                    )
                break
            pending.append((node, computed, None))
        for nid, digest, leaf_iv in pending:
            self._cache_clean(nid, digest, iv=leaf_iv)

    def authenticate_node(self, node: int) -> bytes:
        """Return the node's digest, chain-validating a fetch if uncached."""
        entry = self._cache_lookup(node)
        if entry is not None:
            return entry.digest
        digest = self._disk_digest(node)
        self._authenticate_chain(node, digest, None, None)
        return digest

    # -- public block API -----------------------------------------------------

    def _check_block(self, block: int) -> None:
        if not 0 <= block < self.store.layout.n_blocks:
            raise RangeError(f"block {block} out of range [0, {self.store.layout.n_blocks})")

    def read_verified(self, block: int) -> bytes:
        """Fetch, authenticate, and return one block's plaintext."""
        with self.lock:
            self._check_block(block)
            topo = self.topology
            leaf = topo.leaf_of(block)
            self.counters.data_reads += 1
            ciphertext = self.store.read_block_raw(block)

            entry = self._cache_lookup(leaf)
            if entry is not None:
                iv = entry.iv
                if iv is None:
                    iv = self._read_record(leaf).iv
                sealed = SealedBlock(ciphertext, iv, mac_from_leaf_digest(entry.digest))
                plaintext = self._open(block, leaf, sealed)
                if entry.iv is None:
                    entry.iv = iv  # validated jointly with the tag just now
            else:
                rec = self._read_record(leaf)
                sealed = SealedBlock(ciphertext, rec.iv, mac_from_leaf_digest(rec.digest))
                plaintext = self._open(block, leaf, sealed)
                self._authenticate_chain(leaf, leaf_digest(sealed), rec.iv, block)

            self.counters.block_verifies += 1
            topo.post_access_hook(leaf, self.rng, self)
            return plaintext

    def _open(self, block: int, leaf: int, sealed: SealedBlock) -> bytes:
        self.counters.block_opens += 1
        try:
            return self.provider.open_block(block, sealed)
        except AuthenticityError as exc:
            raise IntegrityError(str(exc), block=block, node=leaf, level=0) from exc

    def write_authenticated(self, block: int, plaintext: bytes) -> int:
        """Seal and persist one block, recomputing the path to the root.

        Every ancestor digest is recomputed regardless of cache state; the
        new root replaces the anchor and the generation advances by one.
        """
        with self.lock:
            self._check_block(block)
            topo = self.topology
            leaf = topo.leaf_of(block)
            iv = self.rng.randbytes(IV_SIZE)
            self.counters.block_seals += 1
            sealed = self.provider.seal_block(block, plaintext, iv)
            self.counters.data_writes += 1
            self.store.write_block_raw(block, sealed.ciphertext)

            computed = leaf_digest(sealed)
            self.set_node_digest(leaf, computed, iv=iv)
            node = leaf
            while True:
                parent = topo.parent(node)
                if parent is None:
                    break
                digests = []
                for child in topo.children(parent):
                    if child == node:
                        digests.append(computed)
                        continue
                    entry = self._cache_lookup(child)
                    if entry is not None:
                        digests.append(entry.digest)
                    else:
                        digests.append(self._disk_digest(child))
                computed = self.hash_children(digests)
                self.set_node_digest(parent, computed)
                node = parent
            self.commit_root(computed)
            self.counters.block_updates += 1
            topo.post_access_hook(leaf, self.rng, self)
            return self.anchor.generation

    def io(self, op: WorkloadOp) -> IoResult:
        """Execute one request; all touched blocks run under one lock hold."""
        with self.lock:
            start = time.perf_counter_ns()
            blocks = blocks_for_io(op.offset, op.length, self.block_size, self.capacity_bytes)
            data: bytes | None = None
            if op.kind == "read":
                if blocks:
                    first_off = blocks[0] * self.block_size
                    buf = b"".join(self.read_verified(b) for b in blocks)
                    lo = op.offset - first_off
                    data = buf[lo : lo + op.length]
                else:
                    data = b""
            else:
                payload = _write_payload(op)
                for i, block in enumerate(blocks):
                    blk_start = block * self.block_size
                    blk_end = blk_start + self.block_size
                    lo = max(op.offset, blk_start)
                    hi = min(op.offset + op.length, blk_end)
                    if hi - lo == self.block_size:
                        chunk = payload[lo - op.offset : hi - op.offset]
                    else:
                        # Sub-block write: read-modify-write keeps integrity per-block.
                        current = bytearray(self.read_verified(block))
                        current[lo - blk_start : hi - blk_start] = payload[
                            lo - op.offset : hi - op.offset
                        ]
                        chunk = bytes(current)
                    self.write_authenticated(block, chunk)
            return IoResult(
                op,
                blocks=len(blocks),
                wall_ns=time.perf_counter_ns() - start,
                generation=self.anchor.generation,
                data=data,
            )

    # -- maintenance ----------------------------------------------------------

    def flush(self) -> int:
        """Write back all dirty cache entries and persist the anchor."""
        with self.lock:
            count = self.cache.flush_dirty(self._write_back)
            self.store.flush()
            self.save_anchor()
            return count

    def save_anchor(self) -> None:
        if self.anchor_path is not None:
            save_anchor_file(self.anchor_path, self.anchor)

    def recompute_root_full(self) -> bytes:
        """Recompute the root from on-disk leaf digests; pure, ignores cache.

        The caller should flush first; dirty cached digests are invisible
        here by design, making this the independent consistency oracle.
        """
        with self.lock:
            topo = self.topology
            digests: dict[int, bytes] = {}
            for node in iter_bottom_up(topo):
                if topo.is_leaf(node):
                    digests[node] = self.store.read_node_digest(node)
                else:
                    kids = topo.children(node)
                    digests[node] = self.provider.node_digest([digests[c] for c in kids])
                    for c in kids:
                        del digests[c]
            return digests[topo.root_id]


def _write_payload(op: WorkloadOp) -> bytes:
    # Deterministic, cheap, and distinct per op; content is irrelevant to
    # the integrity machinery being measured.
    stamp = op.t_ns.to_bytes(8, "little") + op.offset.to_bytes(8, "little")
    reps = (op.length + len(stamp) - 1) // len(stamp)
    return (stamp * reps)[: op.length]


def initialize_tree(
    store: BlockStore,
    topology: Topology,
    provider: CryptoProvider,
    rng: random.Random,
) -> RootAnchor:
    """Seal every block with zeros, build all node records, return the anchor.

    Padding leaves (no backing block) keep zero digests. Pointer topologies
    persist their structure; arithmetic layouts store NONE pointers.
    """
    block_size = store.layout.block_size
    zero_block = bytes(block_size)
    pointered = isinstance(topology, PointerTopology)
    digests: dict[int, bytes] = {}
    ivs: dict[int, bytes] = {}

    for block in range(topology.n_blocks):
        iv = rng.randbytes(IV_SIZE)
        sealed = provider.seal_block(block, zero_block, iv)
        store.write_block_raw(block, sealed.ciphertext)
        leaf = topology.leaf_of(block)
        digests[leaf] = leaf_digest(sealed)
        ivs[leaf] = iv

    for node in iter_bottom_up(topology):
        if topology.is_leaf(node):
            digest = digests.get(node, ZERO_DIGEST)
            digests[node] = digest
        else:
            kids = topology.children(node)
            digests[node] = provider.node_digest([digests[c] for c in kids])
        if pointered:
            parent = topology.parent(node)
            kids = topology.children(node)
            rec = NodeRecord(
                node,
                parent=NONE_ID if parent is None else parent,
                left=kids[0] if kids else NONE_ID,
                right=kids[1] if len(kids) > 1 else NONE_ID,
                digest=digests[node],
                iv=ivs.get(node, ZERO_IV),
                is_leaf=topology.is_leaf(node),
                block=topology.block_of(node),
            )
        else:
            rec = NodeRecord(
                node,
                digest=digests[node],
                iv=ivs.get(node, ZERO_IV),
                is_leaf=topology.is_leaf(node),
                block=topology.block_of(node),
            )
        store.write_node(node, rec)

    store.flush()
    return RootAnchor(digests[topology.root_id], 0)
