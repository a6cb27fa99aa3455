"""Shared domain types and block/byte arithmetic used by every other module."""

from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_BLOCK_SIZE = 4096
DIGEST_SIZE = 32
IV_SIZE = 12
MAC_SIZE = 16

#: Supported fanouts for balanced trees. Self-adjusting trees are binary only.
SUPPORTED_ARITIES = (2, 4, 8, 64)

ZERO_DIGEST = b"\x00" * DIGEST_SIZE


class RangeError(ValueError):
    """Offset/length/id outside the configured device capacity."""


class UsageError(ValueError):
    """Caller violated an operation precondition."""


def validate_arity(k: int, dynamic: bool = False) -> int:
    if k not in SUPPORTED_ARITIES:
        raise UsageError(f"unsupported tree arity {k}; expected one of {SUPPORTED_ARITIES}")
    if dynamic and k != 2:
        raise UsageError("self-adjusting trees require arity 2")
    return k


def blocks_for_io(
    offset_bytes: int,
    length_bytes: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    capacity_bytes: int | None = None,
) -> list[int]:
    """Map a byte-addressed I/O to the ordered list of block indices it touches.

    Returns ``ceil((offset % block_size + length) / block_size)`` consecutive
    block ids starting at ``offset // block_size``. A zero-length I/O touches
    no blocks.
    """
    if offset_bytes < 0 or length_bytes < 0:
        raise RangeError(f"negative offset/length ({offset_bytes}, {length_bytes})")
    if block_size <= 0:
        raise UsageError(f"block_size must be positive, got {block_size}")
    if capacity_bytes is not None and offset_bytes + length_bytes > capacity_bytes:
        raise RangeError(
            f"I/O [{offset_bytes}, {offset_bytes + length_bytes}) exceeds capacity {capacity_bytes}"
        )
    if length_bytes == 0:
        return []
    first = offset_bytes // block_size
    last = (offset_bytes + length_bytes - 1) // block_size
    return list(range(first, last + 1))


@dataclass(frozen=True)
class RootAnchor:
    """Trusted copy of the current root digest plus a commit generation.

    The generation increases by exactly one per committed tree mutation
    (block update or structural commit); it never lives in untrusted storage.
    """

    digest: bytes
    generation: int = 0

    def advanced(self, digest: bytes) -> "RootAnchor":
        return RootAnchor(digest, self.generation + 1)

    def pack(self) -> bytes:
        return self.digest + self.generation.to_bytes(8, "little")

    @classmethod
    def unpack(cls, raw: bytes) -> "RootAnchor":
        if len(raw) != DIGEST_SIZE + 8:
            raise UsageError(f"anchor blob must be {DIGEST_SIZE + 8} bytes, got {len(raw)}")
        return cls(raw[:DIGEST_SIZE], int.from_bytes(raw[DIGEST_SIZE:], "little"))


@dataclass
class FrequencyProfile:
    """Per-block access weights (counts or probabilities) driving tree shaping."""

    freq: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.freq and min(self.freq.values()) < 0:
            raise UsageError("frequencies must be non-negative")

    def validate_nonempty(self) -> None:
        if not self.freq or all(v == 0 for v in self.freq.values()):
            raise UsageError("frequency profile needs at least one positive entry")

    @property
    def total(self) -> float:
        return sum(self.freq.values())

    def bump(self, block: int, amount: float = 1.0) -> None:
        self.freq[block] = self.freq.get(block, 0.0) + amount


@dataclass(frozen=True)
class WorkloadOp:
    """One I/O request on the virtual timeline."""

    t_ns: int
    kind: str  # "read" | "write"
    offset: int
    length: int

    def __post_init__(self) -> None:
        if self.kind not in ("read", "write"):
            raise UsageError(f"op kind must be read|write, got {self.kind!r}")
