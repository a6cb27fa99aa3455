"""Self-adjusting binary hash tree driven by access patterns.

After each completed verification or update the accessed leaf may be
promoted toward the root: a coin with probability ``p`` (inside an active
splay window ``w``) decides whether to splay, and the leaf's cached hotness
counter decides how far. Splaying the leaf directly would turn a leaf into
an internal node, so the leaf's parent is the splay target; child swaps keep
the accessed leaf on the side each rotation promotes.

Rotations change digests, and a rotation committed from unauthenticated
sibling digests could wedge the tree, so every digest a step consumes is
fetched and chain-validated before the first pointer moves. Each zig /
zig-zig / zig-zag step then recomputes the nodes whose child sets changed,
refreshes the ancestors up to the root once, and replaces the root anchor.

Hotness counters move with depth: plus one per level gained, minus one per
level lost, applied to the nodes of the rotation neighborhood that are
currently cached. Interior nodes of shifted subtrees ride along untracked;
walking whole subtrees per rotation would swamp the operation being
amortized.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import UsageError
from .topology import PointerTopology


@dataclass(frozen=True)
class SplayPolicy:
    """Knobs gating when and how far accessed leaves climb."""

    window: bool = True
    probability: float = 0.01
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise UsageError(f"splay probability must be in [0, 1], got {self.probability}")


def splay_decision(leaf_hotness: int | None, policy: SplayPolicy, rng: random.Random) -> int | None:
    """Distance to splay (hotness + 1 levels), or None to skip.

    Skips when the window is closed, the leaf is uncached (hotness is only
    tracked for the cached working set), or the coin says no. The +1 keeps
    freshly cached leaves (hotness 0) moving instead of deadlocking at a
    zero distance.
    """
    if not policy.window:
        return None
    if leaf_hotness is None:
        return None
    if rng.random() >= policy.probability:
        return None
    return leaf_hotness + 1


class DynamicMerkleTree(PointerTopology):
    """Mutable binary pointer topology that splays hot paths toward the root."""

    def __init__(self, n_blocks: int, policy: SplayPolicy | None = None):
        if n_blocks < 1:
            raise UsageError("device needs at least one block")
        height = 0
        while (1 << height) < n_blocks:
            height += 1
        padded = 1 << height
        super().__init__(n_blocks, 2 * padded - 1)
        self.padded_leaves = padded
        self.initial_height = height
        self.policy = policy or SplayPolicy()
        self._splay_rng = random.Random(self.policy.rng_seed)
        self._build_balanced()

    def _build_balanced(self) -> None:
        # Heap-shaped start: internals [0, padded-1), leaves [padded-1, 2*padded-1).
        first_leaf = self.padded_leaves - 1
        for node in range(first_leaf):
            self._link(node, 2 * node + 1, 2 * node + 2)
        for block in range(self.n_blocks):
            self._bind_block(first_leaf + block, block)
        self._root = 0

    @classmethod
    def from_records(cls, n_blocks: int, read_node, policy: SplayPolicy | None = None):
        topo = cls(n_blocks, policy)
        topo.load_structure(read_node)
        return topo

    # -- structural queries ----------------------------------------------------

    def depth(self, node: int) -> int:
        d = 0
        parent = self._parent[node]
        while parent is not None:
            d += 1
            parent = self._parent[parent]
        return d

    def _sibling(self, node: int) -> int:
        p = self._parent[node]
        return self._right[p] if self._left[p] == node else self._left[p]

    # -- rotation primitives -----------------------------------------------------

    def _rotate_up(self, x: int) -> list[int]:
        """Rotate x above its parent; returns nodes whose pointers changed."""
        p = self._parent[x]
        g = self._parent[p]
        if self._left[p] == x:
            inner = self._right[x]
            self._right[x] = p
            self._left[p] = inner
        else:
            inner = self._left[x]
            self._left[x] = p
            self._right[p] = inner
        self._parent[inner] = p
        self._parent[p] = x
        self._parent[x] = g
        touched = [x, p, inner]
        if g is None:
            self._root = x
        else:
            if self._left[g] == p:
                self._left[g] = x
            else:
                self._right[g] = x
            touched.append(g)
        return touched

    def _swap_children(self, x: int) -> None:
        self._left[x], self._right[x] = self._right[x], self._left[x]

    def _keep_leaf_outer(self, x: int, leaf: int | None) -> bool:
        """Swap x's children so the accessed leaf rides the promoted side."""
        if leaf is None or self._parent[x] is None:
            return False
        x_is_left = self._left[self._parent[x]] == x
        inner = self._right[x] if x_is_left else self._left[x]
        if inner == leaf:
            self._swap_children(x)
            return True
        return False

    # -- splaying ------------------------------------------------------------------

    def post_access_hook(self, leaf: int, rng, engine) -> None:
        entry = engine.cache.peek(leaf)
        hotness = entry.hotness if entry is not None else None
        distance = splay_decision(hotness, self.policy, self._splay_rng)
        if distance is None:
            return
        engine.counters.splays_performed += 1
        target = self._parent[leaf]
        if target is None:
            return
        self.splay(target, distance, engine, accessed_leaf=leaf)

    def splay(self, target: int, distance: int, engine, accessed_leaf: int | None = None) -> int:
        """Promote an internal node up to ``distance`` levels; returns levels won.

        Steps of one (zig, parent is root) or two (zig-zig / zig-zag) levels
        apply until the budget is met or the target is the root; the final
        two-level step may overshoot the budget by one.
        """
        if self.is_leaf(target):
            raise UsageError(f"splay target {target} is a leaf")
        promoted = 0
        while promoted < distance and self._parent[target] is not None:
            promoted += self._splay_step(target, engine, accessed_leaf)
        return promoted

    def _splay_step(self, x: int, engine, leaf: int | None) -> int:
        p = self._parent[x]
        g = self._parent[p]

        # Authenticate every digest this step will fold into new hashes,
        # before any pointer moves. A failure aborts with the tree untouched.
        ctx: dict[int, bytes] = {}
        for node in (self._left[x], self._right[x], self._sibling(x)):
            ctx[node] = engine.authenticate_node(node)
        if g is not None:
            sib_p = self._sibling(p)
            ctx[sib_p] = engine.authenticate_node(sib_p)
        ancestors: list[tuple[int, int]] = []  # (ancestor, off-path child), bottom-up
        top = p if g is None else g
        below, above = top, self._parent[top]
        while above is not None:
            off = self._right[above] if self._left[above] == below else self._left[above]
            ctx[off] = engine.authenticate_node(off)
            ancestors.append((above, off))
            below, above = above, self._parent[above]

        watch = {x, p, self._left[x], self._right[x], self._sibling(x)}
        if g is not None:
            watch.update({g, self._sibling(p)})
        depth_before = {n: self.depth(n) for n in watch}

        touched: set[int] = set()
        if g is None:
            self._keep_leaf_outer(x, leaf)
            touched.update(self._rotate_up(x))
            changed = [p, x]
            levels = 1
            rotations = 1
        elif (self._left[g] == p) == (self._left[p] == x):
            touched.update(self._rotate_up(p))  # zig-zig rotates the parent first
            self._keep_leaf_outer(x, leaf)
            touched.update(self._rotate_up(x))
            changed = [g, p, x]
            levels = 2
            rotations = 2
        else:
            self._keep_leaf_outer(x, leaf)
            touched.update(self._rotate_up(x))
            self._keep_leaf_outer(x, leaf)
            touched.update(self._rotate_up(x))
            changed = [p, g, x]
            levels = 2
            rotations = 2
        engine.counters.rotations_performed += rotations

        # Recompute changed digests deepest-first from pre-authenticated
        # material, then refresh the path above once and commit the root.
        recomputed: dict[int, bytes] = {}

        def digest_of(node: int) -> bytes:
            if node in recomputed:
                return recomputed[node]
            return ctx[node]

        for node in sorted(changed, key=self.depth, reverse=True):
            digest = engine.hash_children([digest_of(c) for c in self.children(node)])
            recomputed[node] = digest
            engine.set_node_digest(node, digest)
        for node in touched:
            if node not in recomputed:
                engine.mark_structure_dirty(node)  # pointer-only change

        below_digest = recomputed[x]
        for ancestor, off_path in ancestors:
            left, right = self.children(ancestor)
            pair = [ctx[off_path], below_digest] if left == off_path else [below_digest, ctx[off_path]]
            below_digest = engine.hash_children(pair)
            engine.set_node_digest(ancestor, below_digest)
        engine.commit_root(below_digest)

        for node, before in depth_before.items():
            delta = before - self.depth(node)
            if delta:
                engine.cache.adjust_hotness(node, delta)
        return levels


def new_dmt(n_blocks: int, seed: int = 0, window: bool = True, probability: float = 0.01) -> DynamicMerkleTree:
    """Fresh self-adjusting tree with a balanced starting shape."""
    return DynamicMerkleTree(n_blocks, SplayPolicy(window, probability, seed))
