"""Merge tree construction and level-set expansion.

A full merge sequence induces a binary tree: every record maps a parent to
its two children. Level sets expand from the root, replacing each splittable
node by its children until only leaves remain; a node's created level is its
depth and an internal node splits at the next level.
"""

import math
from dataclasses import dataclass, field

from .errors import NotFullySimplifiedError
from .gaussians import Gaussian3D
from .simplify import MergeSequence


@dataclass
class HierarchyNode:
    payload: Gaussian3D
    parent: int | None = None
    children: tuple[int, int] | None = None
    created_level: int = -1
    split_level: float = math.inf

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass
class HierarchyTree:
    nodes: dict[int, HierarchyNode]
    root_id: int

    @classmethod
    def single(cls, payload: Gaussian3D, ident: int = 0) -> "HierarchyTree":
        """One-node tree; merge sequences of a single Gaussian carry no
        payloads, so this is the only way to build the degenerate case."""
        node = HierarchyNode(payload=payload, created_level=0)
        return cls(nodes={ident: node}, root_id=ident)

    def leaf_ids(self) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if n.is_leaf)

    def depth(self) -> int:
        return max(n.created_level for n in self.nodes.values())

    def ancestors(self, ident: int) -> list[int]:
        """Strict ancestors, nearest first."""
        chain = []
        parent = self.nodes[ident].parent
        while parent is not None:
            chain.append(parent)
            parent = self.nodes[parent].parent
        return chain


@dataclass(frozen=True)
class LevelSets:
    levels: tuple[frozenset[int], ...]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1


def build_tree(seq: MergeSequence) -> HierarchyTree:
    """Parent-to-child map plus per-node creation/split levels.

    Requires a full simplification (exactly one root)."""
    if seq.source_count - len(seq.records) != 1:
        raise NotFullySimplifiedError(
            f"sequence leaves {seq.source_count - len(seq.records)} roots; expected 1"
        )
    if not seq.records:
        raise NotFullySimplifiedError(
            "an empty sequence carries no payloads; build single-node trees with HierarchyTree.single"
        )
    nodes: dict[int, HierarchyNode] = {}
    for rec in seq.records:
        for cid, payload in (
            (rec.child1_id, rec.child1_payload),
            (rec.child2_id, rec.child2_payload),
        ):
            if cid not in nodes:
                nodes[cid] = HierarchyNode(payload=payload)
            nodes[cid].parent = rec.parent_id
        nodes[rec.parent_id] = HierarchyNode(
            payload=rec.parent_payload, children=(rec.child1_id, rec.child2_id)
        )
    roots = [i for i, n in nodes.items() if n.parent is None]
    if len(roots) != 1:
        raise NotFullySimplifiedError(f"found {len(roots)} roots in sequence")
    tree = HierarchyTree(nodes=nodes, root_id=roots[0])
    level_sets(tree)
    return tree


def level_sets(tree: HierarchyTree) -> LevelSets:
    """Expand N_0 = {root} level by level, replacing splittable nodes by
    their children; assigns created_level and split_level along the way."""
    levels = []
    frontier = [tree.root_id]
    tree.nodes[tree.root_id].created_level = 0
    level = 0
    while True:
        levels.append(frozenset(frontier))
        nxt = []
        any_split = False
        for ident in frontier:
            node = tree.nodes[ident]
            if node.children is not None:
                any_split = True
                node.split_level = level + 1
                for cid in node.children:
                    tree.nodes[cid].created_level = level + 1
                nxt.extend(node.children)
            else:
                node.split_level = math.inf
                nxt.append(ident)
        if not any_split:
            break
        frontier = nxt
        level += 1
    return LevelSets(levels=tuple(levels))


def stats(tree: HierarchyTree) -> dict:
    """Node counts, depth, per-level sizes, and leaf-depth summary."""
    sets = level_sets(tree)
    leaves = tree.leaf_ids()
    leaf_depths = [tree.nodes[i].created_level for i in leaves]
    return {
        "n_nodes": len(tree.nodes),
        "n_leaves": len(leaves),
        "n_internal": len(tree.nodes) - len(leaves),
        "depth": sets.depth,
        "level_sizes": [len(s) for s in sets.levels],
        "max_leaf_depth": max(leaf_depths),
        "mean_leaf_depth": sum(leaf_depths) / len(leaf_depths),
    }


def to_text(tree: HierarchyTree) -> str:
    """Line-oriented dump (one node per line) for diffing and fixtures."""
    lines = [f"tree\tnodes\t{len(tree.nodes)}\troot\t{tree.root_id}"]
    for ident in sorted(tree.nodes):
        node = tree.nodes[ident]
        parent = "-" if node.parent is None else str(node.parent)
        children = "-,-" if node.children is None else f"{node.children[0]},{node.children[1]}"
        split = "inf" if node.split_level == math.inf else str(int(node.split_level))
        lines.append(f"{ident}\t{parent}\t{children}\t{node.created_level}\t{split}")
    return "\n".join(lines) + "\n"
