"""Attention masks over tree-ordered token sequences.

Three variants: plain causal (lower triangular), level-wise (each query sees
itself plus the frontier that generated its level), and tree (level-wise plus
the query's strict ancestor chain). Rows are queries, columns are keys; the
diagonal is always allowed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import TokenTreeMismatchError
from .hierarchy import HierarchyTree, level_sets
from .tokens import TokenRecord, tree_token_order

VARIANT_CODES = {"causal": 0, "levelwise": 1, "tree": 2, "tree_all_internal": 3}
VARIANT_NAMES = {v: k for k, v in VARIANT_CODES.items()}


@dataclass(frozen=True)
class AttentionMask:
    n: int
    allowed: np.ndarray
    variant: str

    def __post_init__(self):
        allowed = np.asarray(self.allowed, dtype=bool)
        if allowed.shape != (self.n, self.n):
            raise ValueError(f"mask must be {self.n}x{self.n}")
        object.__setattr__(self, "allowed", allowed)
        allowed.setflags(write=False)


def causal_mask(n: int) -> AttentionMask:
    """Lower-triangular inclusive mask."""
    if n < 1:
        raise ValueError("mask needs at least one token")
    return AttentionMask(n=n, allowed=np.tril(np.ones((n, n), dtype=bool)), variant="causal")


def _check_tokens(tokens: list[TokenRecord], tree: HierarchyTree) -> dict[int, int]:
    order = tree_token_order(tree)
    if [t.node_id for t in tokens] != order:
        raise TokenTreeMismatchError("token order does not match the tree")
    for t in tokens:
        if tree.nodes[t.node_id].created_level != t.level:
            raise TokenTreeMismatchError(f"token {t.node_id} level {t.level} disagrees with tree")
    return {ident: pos for pos, ident in enumerate(order)}


def levelwise_mask(tokens: list[TokenRecord], tree: HierarchyTree) -> AttentionMask:
    """Query v created at level l > 0 attends to {v} plus the whole frontier
    N_{l-1} that generated it; the root attends to itself only."""
    pos = _check_tokens(tokens, tree)
    sets = level_sets(tree)
    n = len(tokens)
    allowed = np.zeros((n, n), dtype=bool)
    for i, tok in enumerate(tokens):
        allowed[i, i] = True
        if tok.level > 0:
            for key in sets.levels[tok.level - 1]:
                allowed[i, pos[key]] = True
    return AttentionMask(n=n, allowed=allowed, variant="levelwise")


def tree_mask(tokens: list[TokenRecord], tree: HierarchyTree, all_internal: bool = False) -> AttentionMask:
    """Level-wise visibility extended with the query's strict ancestors.

    all_internal=True is an ablation variant that instead admits every
    internal node created at an earlier level."""
    pos = _check_tokens(tokens, tree)
    base = levelwise_mask(tokens, tree)
    allowed = np.array(base.allowed)
    if all_internal:
        internal_by_level = [
            (pos[i], node.created_level)
            for i, node in tree.nodes.items()
            if node.children is not None
        ]
        for i, tok in enumerate(tokens):
            for key_pos, created in internal_by_level:
                if created < tok.level:
                    allowed[i, key_pos] = True
        return AttentionMask(n=len(tokens), allowed=allowed, variant="tree_all_internal")
    for i, tok in enumerate(tokens):
        for anc in tree.ancestors(tok.node_id):
            allowed[i, pos[anc]] = True
    return AttentionMask(n=len(tokens), allowed=allowed, variant="tree")


def build_mask(variant: str, tokens: list[TokenRecord], tree: HierarchyTree) -> AttentionMask:
    if variant == "causal":
        return causal_mask(len(tokens))
    if variant == "levelwise":
        return levelwise_mask(tokens, tree)
    if variant == "tree":
        return tree_mask(tokens, tree)
    if variant == "tree_all_internal":
        return tree_mask(tokens, tree, all_internal=True)
    raise ValueError(f"unknown mask variant {variant!r}")


def decode_cost(tree: HierarchyTree, variant: str) -> list[int]:
    """Distinct key tokens needed to decode each level of detail: for level
    l, the union of keys over all queries created at level l."""
    order = tree_token_order(tree)
    pos = {ident: p for p, ident in enumerate(order)}
    sets = level_sets(tree)
    depth = sets.depth
    by_level: list[list[int]] = [[] for _ in range(depth + 1)]
    for ident in order:
        by_level[tree.nodes[ident].created_level].append(ident)
    costs = []
    for level in range(depth + 1):
        queries = by_level[level]
        if variant == "causal":
            costs.append(max(pos[q] for q in queries) + 1)
            continue
        keys = {pos[q] for q in queries}
        if level > 0:
            keys.update(pos[k] for k in sets.levels[level - 1])
            if variant in ("tree", "tree_all_internal"):
                if variant == "tree":
                    for q in queries:
                        keys.update(pos[a] for a in tree.ancestors(q))
                else:
                    keys.update(
                        pos[i]
                        for i, node in tree.nodes.items()
                        if node.children is not None and node.created_level < level
                    )
        costs.append(len(keys))
    return costs


def to_text_grid(mask: AttentionMask) -> str:
    """0/1 grid, one query row per line."""
    return "\n".join("".join("1" if v else "0" for v in row) for row in mask.allowed) + "\n"
