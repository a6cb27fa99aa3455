"""The structural contract shared by every tree strategy, plus shape helpers.

A topology answers parent/children/leaf-of-block queries over integer node
ids and never touches digests; digest maintenance belongs to the engine.
``post_access_hook`` runs after each completed verification or update and is
where self-adjusting trees restructure themselves.
"""

from __future__ import annotations

from typing import Iterator, Protocol, runtime_checkable


@runtime_checkable
class Topology(Protocol):
    n_blocks: int
    total_nodes: int

    @property
    def root_id(self) -> int: ...

    def parent(self, node: int) -> int | None: ...

    def children(self, node: int) -> tuple[int, ...]: ...

    def leaf_of(self, block: int) -> int: ...

    def block_of(self, node: int) -> int | None: ...

    def is_leaf(self, node: int) -> bool: ...

    def post_access_hook(self, leaf: int, rng, engine) -> None: ...


def node_depth(topo: Topology, node: int) -> int:
    """Edge count from the root down to ``node``."""
    depth = 0
    parent = topo.parent(node)
    while parent is not None:
        depth += 1
        node = parent
        parent = topo.parent(node)
    return depth


def iter_bottom_up(topo: Topology) -> Iterator[int]:
    """Yield every node id with children before parents (post-order)."""
    stack: list[tuple[int, bool]] = [(topo.root_id, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded or topo.is_leaf(node):
            yield node
            continue
        stack.append((node, True))
        for child in topo.children(node):
            stack.append((child, False))


def iter_top_down(topo: Topology) -> Iterator[tuple[int, int]]:
    """Yield (node, depth) pairs, parents before children."""
    stack: list[tuple[int, int]] = [(topo.root_id, 0)]
    while stack:
        node, depth = stack.pop()
        yield node, depth
        if not topo.is_leaf(node):
            for child in topo.children(node):
                stack.append((child, depth + 1))


def leaf_depths(topo: Topology) -> dict[int, int]:
    """Map block id -> current depth of its leaf."""
    depths: dict[int, int] = {}
    for node, depth in iter_top_down(topo):
        if topo.is_leaf(node):
            block = topo.block_of(node)
            if block is not None:
                depths[block] = depth
    return depths


def depth_histogram(topo: Topology, leaves_only: bool = True) -> dict[int, int]:
    hist: dict[int, int] = {}
    for node, depth in iter_top_down(topo):
        if leaves_only and not topo.is_leaf(node):
            continue
        hist[depth] = hist.get(depth, 0) + 1
    return dict(sorted(hist.items()))


def export_shape_lines(topo: Topology) -> Iterator[str]:
    """Line-oriented shape dump: ``node_id parent left right depth``.

    Missing links print as -1. Nodes appear in id order for stable diffs.
    Trees with fanout above two print their first and last child.
    """
    depths = {node: depth for node, depth in iter_top_down(topo)}
    for node in sorted(depths):
        parent = topo.parent(node)
        kids = topo.children(node) if not topo.is_leaf(node) else ()
        left = kids[0] if len(kids) > 0 else None
        right = kids[-1] if len(kids) > 1 else None
        fields = [node, -1 if parent is None else parent,
                  -1 if left is None else left, -1 if right is None else right,
                  depths[node]]
        yield " ".join(str(f) for f in fields)


class PointerTopology:
    """Binary tree with explicit parent/left/right ids in parallel arrays.

    Node ids are stable for the lifetime of the tree; restructuring moves
    nodes, not ids, so the block-to-leaf binding never changes.
    """

    def __init__(self, n_blocks: int, total_nodes: int):
        self.n_blocks = n_blocks
        self.total_nodes = total_nodes
        self._parent: list[int | None] = [None] * total_nodes
        self._left: list[int | None] = [None] * total_nodes
        self._right: list[int | None] = [None] * total_nodes
        self._block: list[int | None] = [None] * total_nodes
        self._leaf_of: dict[int, int] = {}
        self._root = 0

    @property
    def root_id(self) -> int:
        return self._root

    def parent(self, node: int) -> int | None:
        return self._parent[node]

    def children(self, node: int) -> tuple[int, ...]:
        left = self._left[node]
        if left is None:
            return ()
        return (left, self._right[node])

    def is_leaf(self, node: int) -> bool:
        return self._left[node] is None

    def leaf_of(self, block: int) -> int:
        return self._leaf_of[block]

    def block_of(self, node: int) -> int | None:
        return self._block[node]

    def post_access_hook(self, leaf: int, rng, engine) -> None:  # static by default
        return None

    def _bind_block(self, leaf: int, block: int | None) -> None:
        self._block[leaf] = block
        if block is not None:
            self._leaf_of[block] = leaf

    def _link(self, parent: int, left: int, right: int) -> None:
        self._left[parent] = left
        self._right[parent] = right
        self._parent[left] = parent
        self._parent[right] = parent

    def load_structure(self, read_node) -> None:
        """Rebuild pointers from persisted records via ``read_node(id)``."""
        root = None
        for node in range(self.total_nodes):
            rec = read_node(node)
            self._parent[node] = None if rec.parent == _none_id() else rec.parent
            self._left[node] = None if rec.left == _none_id() else rec.left
            self._right[node] = None if rec.right == _none_id() else rec.right
            if rec.is_leaf:
                self._bind_block(node, rec.block)
            if self._parent[node] is None:
                root = node
        if root is None:
            raise ValueError("persisted tree has no root record")
        self._root = root


def _none_id() -> int:
    from .store import NONE_ID

    return NONE_ID
