"""Static tree strategies: balanced k-ary arithmetic and offline-optimal
weight-shaped binary trees built by Huffman's algorithm.

The Huffman builder is the offline oracle: given a recorded access profile
it produces the full binary tree minimizing the expected number of node
hashes per access. ``brute_force_optimal`` independently recomputes that
minimum by exhausting every full binary tree over the (small) leaf set, so
the two can be checked against each other exactly.
"""

from __future__ import annotations

import heapq
import math
from functools import lru_cache

from .core import FrequencyProfile, UsageError, WorkloadOp, blocks_for_io, validate_arity
from .topology import PointerTopology, Topology, leaf_depths


# -- balanced k-ary trees (implicit heap indexing, no stored pointers) -------

def balanced_parent(node: int, k: int) -> int | None:
    """Parent id under heap indexing, or None at the root."""
    if node < 0:
        raise UsageError(f"negative node id {node}")
    if node == 0:
        return None
    return (node - 1) // k


def balanced_children(node: int, k: int, total_nodes: int | None = None) -> tuple[int, ...]:
    first = k * node + 1
    if total_nodes is not None and first >= total_nodes:
        return ()
    return tuple(range(first, first + k))


def balanced_height(n_leaves: int, k: int) -> int:
    if n_leaves < 1:
        raise UsageError("tree needs at least one leaf")
    height = 0
    while k**height < n_leaves:
        height += 1
    return height


class BalancedTopology:
    """Complete k-ary tree with the leaf level padded to a power of k.

    Padding leaves sit beyond the real block range and keep zero digests;
    they exist so parent/children stay pure index arithmetic.
    """

    def __init__(self, n_blocks: int, k: int = 2):
        self.k = validate_arity(k)
        if n_blocks < 1:
            raise UsageError("device needs at least one block")
        self.n_blocks = n_blocks
        self.height = balanced_height(n_blocks, k)
        self.padded_leaves = k**self.height
        self.total_nodes = (k ** (self.height + 1) - 1) // (k - 1)
        self.leaf_offset = (k**self.height - 1) // (k - 1)

    @property
    def root_id(self) -> int:
        return 0

    def parent(self, node: int) -> int | None:
        self._check(node)
        return balanced_parent(node, self.k)

    def children(self, node: int) -> tuple[int, ...]:
        self._check(node)
        return balanced_children(node, self.k, self.total_nodes)

    def is_leaf(self, node: int) -> bool:
        self._check(node)
        return node >= self.leaf_offset

    def leaf_of(self, block: int) -> int:
        if not 0 <= block < self.n_blocks:
            raise UsageError(f"block {block} out of range")
        return self.leaf_offset + block

    def block_of(self, node: int) -> int | None:
        if self.leaf_offset <= node < self.leaf_offset + self.n_blocks:
            return node - self.leaf_offset
        return None

    def post_access_hook(self, leaf: int, rng, engine) -> None:
        return None

    def _check(self, node: int) -> None:
        if not 0 <= node < self.total_nodes:
            raise UsageError(f"node {node} out of range [0, {self.total_nodes})")


# -- offline-optimal binary trees ---------------------------------------------

class HuffmanTopology(PointerTopology):
    """Full binary tree shaped by access weights; leaf id == block id."""

    def __init__(self, n_blocks: int):
        super().__init__(n_blocks, 2 * n_blocks - 1)
        self.depth_of: dict[int, int] = {}

    def _compute_depths(self) -> None:
        self.depth_of = leaf_depths(self)


def _effective_weights(profile: FrequencyProfile, n_blocks: int | None) -> dict[int, float]:
    profile.validate_nonempty()
    universe = range(n_blocks) if n_blocks is not None else sorted(profile.freq)
    # Unaccessed blocks still need a leaf: floor their weight at 1 so the
    # whole device stays authenticated.
    out: dict[int, float] = {}
    for b in universe:
        w = profile.freq.get(b, 0.0)
        out[b] = w if w > 0 else 1.0
    return out


def build_huffman(profile: FrequencyProfile, n_blocks: int | None = None) -> HuffmanTopology:
    """Construct the weight-optimal full binary tree over the block set.

    The priority queue breaks weight ties by creation order (leaves in block
    order, merged nodes in merge order), which pins the shape for a given
    profile and keeps runs reproducible. Any tie-break yields the same cost.
    """
    weights = _effective_weights(profile, n_blocks)
    n = len(weights)
    topo = HuffmanTopology(n)
    blocks = sorted(weights)
    if n == 1:
        topo._bind_block(0, blocks[0])
        topo._root = 0
        topo._compute_depths()
        return topo

    heap: list[tuple[float, int, int]] = []  # (weight, creation order, node id)
    for order, block in enumerate(blocks):
        topo._bind_block(order, block)
        heap.append((weights[block], order, order))
    heapq.heapify(heap)

    next_id = n
    while len(heap) > 1:
        w1, _, left = heapq.heappop(heap)
        w2, _, right = heapq.heappop(heap)
        topo._link(next_id, left, right)
        heapq.heappush(heap, (w1 + w2, next_id, next_id))
        next_id += 1
    topo._root = next_id - 1
    topo._compute_depths()
    return topo


def _depths_for(shape: Topology | dict[int, int]) -> dict[int, int]:
    if isinstance(shape, dict):
        return shape
    depth_of = getattr(shape, "depth_of", None)
    if depth_of:
        return depth_of
    return leaf_depths(shape)


def weighted_path_cost(shape: Topology | dict[int, int], profile: FrequencyProfile) -> float:
    """Sum of weight * depth over the profile's blocks (unnormalized)."""
    depths = _depths_for(shape)
    missing = [b for b in profile.freq if b not in depths]
    if missing:
        raise UsageError(f"shape does not cover blocks {missing[:5]}")
    return sum(f * depths[b] for b, f in profile.freq.items())


def expected_depth(shape: Topology | dict[int, int], profile: FrequencyProfile) -> float:
    """Access-weighted mean leaf depth: sum(f_i * depth_i) / sum(f_i)."""
    profile.validate_nonempty()
    return weighted_path_cost(shape, profile) / profile.total


BRUTE_FORCE_MAX_LEAVES = 8


def brute_force_optimal(profile: FrequencyProfile) -> float:
    """Minimum of sum(f_i * depth_i) over all full binary trees on the leaves.

    Exhausts every recursive bipartition of the leaf set (equivalently every
    full binary tree shape up to child order, which cannot change the cost).
    Independent of the greedy builder; usable as its oracle for n <= 8.
    """
    profile.validate_nonempty()
    weights = list(profile.freq.values())
    n = len(weights)
    if n > BRUTE_FORCE_MAX_LEAVES:
        raise UsageError(f"brute force supports at most {BRUTE_FORCE_MAX_LEAVES} leaves, got {n}")
    if n == 1:
        return 0.0
    full = (1 << n) - 1
    subtotal = [0.0] * (full + 1)
    for mask in range(1, full + 1):
        low = mask & -mask
        subtotal[mask] = subtotal[mask ^ low] + weights[low.bit_length() - 1]

    @lru_cache(maxsize=None)
    def best(mask: int) -> float:
        if mask & (mask - 1) == 0:  # single leaf
            return 0.0
        lowest = mask & -mask  # pin one leaf to the left side to halve the search
        rest = mask ^ lowest
        minimum = math.inf
        sub = rest
        while True:
            left = lowest | sub
            right = mask ^ left
            if right:
                cost = best(left) + best(right)
                if cost < minimum:
                    minimum = cost
            if sub == 0:
                break
            sub = (sub - 1) & rest
        return minimum + subtotal[mask]

    result = best(full)
    best.cache_clear()
    return result


def trace_to_profile(
    trace: list[WorkloadOp],
    block_size: int,
    capacity_bytes: int | None = None,
) -> FrequencyProfile:
    """Count per-block touches (reads and writes both) over a trace."""
    profile = FrequencyProfile()
    for op in trace:
        for block in blocks_for_io(op.offset, op.length, block_size, capacity_bytes):
            profile.bump(block)
    return profile
