"""Tree bookkeeping over token lists: frontiers, ancestors, and the three
attention-mask variants, derived purely from parent links. Used to build
masks for partially generated trees during inference."""

import numpy as np

from .formats import Token


def children_map(tokens: list[Token]) -> dict[int, list[int]]:
    children: dict[int, list[int]] = {}
    for tok in tokens:
        if tok.parent_id is not None:
            children.setdefault(tok.parent_id, []).append(tok.node_id)
    return children


def ancestors(tokens: list[Token], node_id: int) -> list[int]:
    by_id = {t.node_id: t for t in tokens}
    chain = []
    parent = by_id[node_id].parent_id
    while parent is not None:
        chain.append(parent)
        parent = by_id[parent].parent_id
    return chain


def frontier(tokens: list[Token], level: int) -> set[int]:
    """Nodes present at a level: split nodes only at their own level, nodes
    without children from their level onward."""
    has_children = {t.parent_id for t in tokens if t.parent_id is not None}
    members = set()
    for tok in tokens:
        if tok.node_id in has_children:
            if tok.level == level:
                members.add(tok.node_id)
        elif tok.level <= level:
            members.add(tok.node_id)
    return members


def build_mask(tokens: list[Token], variant: str) -> np.ndarray:
    """Boolean [n, n] mask (row = query) over tokens in sequence order."""
    n = len(tokens)
    pos = {t.node_id: i for i, t in enumerate(tokens)}
    if variant == "causal":
        return np.tril(np.ones((n, n), dtype=bool))
    if variant not in ("levelwise", "tree"):
        raise ValueError(f"unknown mask variant {variant!r}")
    allowed = np.zeros((n, n), dtype=bool)
    frontiers: dict[int, set[int]] = {}
    for i, tok in enumerate(tokens):
        allowed[i, i] = True
        if tok.level > 0:
            prev = tok.level - 1
            if prev not in frontiers:
                frontiers[prev] = frontier(tokens, prev)
            for key in frontiers[prev]:
                allowed[i, pos[key]] = True
            if variant == "tree":
                for anc in ancestors(tokens, tok.node_id):
                    allowed[i, pos[anc]] = True
    return allowed
