"""Trusted in-memory LRU cache of authenticated tree nodes.

Every entry was checked against the root-anchor chain before insertion, so a
cache hit is proof of authenticity and lets verification stop early. Dirty
entries carry digests not yet persisted to the metadata region; eviction
hands the victim back to the caller for write-back.

Hotness counters live here, not on disk: a node's counter starts at zero
when it is (re)authenticated into the cache and is not tracked while the
node is uncached. The on-disk hotness field is only a flush-time snapshot.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

from .core import UsageError


@dataclass
class CacheEntry:
    node: int
    digest: bytes
    hotness: int = 0
    dirty: bool = False
    iv: bytes | None = None  # leaves only


class SecureCache:
    """LRU over authenticated node digests with write-back dirty tracking."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise UsageError(f"cache capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: OrderedDict[int, CacheEntry] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, node: int) -> bool:
        return node in self._entries

    @property
    def miss_rate(self) -> float:
        total = self.hits + self.misses
        return self.misses / total if total else 0.0

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def get(self, node: int) -> CacheEntry | None:
        """Look up a node, refreshing recency and counting hit/miss."""
        entry = self._entries.get(node)
        if entry is None:
            self.misses += 1
            return None
        self._entries.move_to_end(node)
        self.hits += 1
        return entry

    def peek(self, node: int) -> CacheEntry | None:
        """Look up without touching recency or counters (bookkeeping paths)."""
        return self._entries.get(node)

    def insert_authenticated(
        self,
        node: int,
        digest: bytes,
        iv: bytes | None = None,
        dirty: bool = False,
    ) -> CacheEntry | None:
        """Insert or refresh an authenticated digest.

        A fresh entry starts with hotness 0. Re-inserting a present node
        updates payload and recency but keeps its hotness. Returns the
        evicted entry (which may be dirty and need write-back), if any.
        """
        entry = self._entries.get(node)
        if entry is not None:
            entry.digest = digest
            if iv is not None:
                entry.iv = iv
            entry.dirty = entry.dirty or dirty
            self._entries.move_to_end(node)
            return None
        victim = None
        if len(self._entries) >= self.capacity:
            _, victim = self._entries.popitem(last=False)
        self._entries[node] = CacheEntry(node, digest, hotness=0, dirty=dirty, iv=iv)
        return victim

    def mark_dirty(self, node: int) -> None:
        entry = self._entries.get(node)
        if entry is not None:
            entry.dirty = True

    def adjust_hotness(self, node: int, delta: int) -> int | None:
        """Apply a promotion/demotion delta; no-op for uncached nodes.

        Counters clamp at zero so hotness-derived distances stay defined.
        """
        entry = self._entries.get(node)
        if entry is None:
            return None
        entry.hotness = max(0, entry.hotness + delta)
        if delta:
            entry.dirty = True
        return entry.hotness

    def dirty_entries(self) -> list[CacheEntry]:
        return [e for e in self._entries.values() if e.dirty]

    def flush_dirty(self, sink) -> int:
        """Write every dirty entry through ``sink(entry)`` and clear flags."""
        count = 0
        for entry in self._entries.values():
            if entry.dirty:
                sink(entry)
                entry.dirty = False
                count += 1
        return count

    def drop(self, node: int) -> None:
        self._entries.pop(node, None)

    def clear(self) -> None:
        """Forget all entries (dirty ones included); counters keep running."""
        self._entries.clear()

    def nodes_lru_order(self) -> list[int]:
        return list(self._entries)
