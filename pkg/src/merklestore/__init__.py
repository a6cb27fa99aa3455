"""Authenticated block store with pluggable Merkle hash-tree strategies.

Three tree strategies share one verify/update engine: balanced k-ary trees
(implicit arithmetic), offline weight-optimal binary trees built from a
recorded trace, and self-adjusting trees that splay hot paths toward the
root at runtime. A benchmark harness drives seeded workloads against any of
them and reports hash counts, cache behavior, and latency percentiles.
"""

from .cache import CacheEntry, SecureCache
from .core import (
    DEFAULT_BLOCK_SIZE,
    FrequencyProfile,
    RangeError,
    RootAnchor,
    UsageError,
    WorkloadOp,
    blocks_for_io,
)
from .crypto import (
    AuthenticityError,
    CryptoProvider,
    FastCryptoProvider,
    KeyMaterial,
    SealedBlock,
    leaf_digest,
)
from .dmt import DynamicMerkleTree, SplayPolicy, new_dmt, splay_decision
from .engine import AuthenticatedEngine, IntegrityError, OpCounters, initialize_tree
from .static_trees import (
    BalancedTopology,
    HuffmanTopology,
    brute_force_optimal,
    build_huffman,
    expected_depth,
    trace_to_profile,
    weighted_path_cost,
)
from .store import BlockStore, NodeRecord, StoreLayout
from .workload import (
    OpGenerator,
    UniformSampler,
    WorkloadSpec,
    ZipfSampler,
    parse_trace,
    phase_schedule,
    scale_trace,
    serialize_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AuthenticatedEngine",
    "AuthenticityError",
    "BalancedTopology",
    "BlockStore",
    "CacheEntry",
    "CryptoProvider",
    "DEFAULT_BLOCK_SIZE",
    "DynamicMerkleTree",
    "FastCryptoProvider",
    "FrequencyProfile",
    "HuffmanTopology",
    "IntegrityError",
    "KeyMaterial",
    "NodeRecord",
    "OpCounters",
    "OpGenerator",
    "RangeError",
    "RootAnchor",
    "SealedBlock",
    "SecureCache",
    "SplayPolicy",
    "StoreLayout",
    "UniformSampler",
    "UsageError",
    "WorkloadOp",
    "WorkloadSpec",
    "ZipfSampler",
    "blocks_for_io",
    "brute_force_optimal",
    "build_huffman",
    "expected_depth",
    "initialize_tree",
    "leaf_digest",
    "new_dmt",
    "parse_trace",
    "phase_schedule",
    "scale_trace",
    "serialize_trace",
    "splay_decision",
    "trace_to_profile",
    "weighted_path_cost",
]
