"""Frontier-expansion generation: one forward pass per hierarchy level.

Starting from a root token, every node predicted splittable is expanded into
two children (greedy argmax by default, temperature sampling behind a flag)
until no frontier node splits or the level cap is reached. The result is a
token tree writable as an "ARGT" file that the core toolkit can decode and
render.
"""

import numpy as np
import torch

from .formats import QuantRanges, Token
from .model import NextScaleModel
from .training import positions_from_bins
from .treeops import build_mask


def generate(
    model: NextScaleModel,
    root_bins: np.ndarray,
    ranges: QuantRanges,
    max_levels: int,
    greedy: bool = True,
    temperature: float = 1.0,
    seed: int = 0,
) -> tuple[list[Token], int]:
    """Returns (tokens, forward_passes).

    One forward pass expands one whole level (never one token), so a tree of
    depth L costs L passes when max_levels == L; an uncapped run spends one
    extra pass discovering that nothing more splits."""
    model.eval()
    generator = torch.Generator().manual_seed(seed)
    tokens = [
        Token(node_id=0, parent_id=None, level=0, splittable=False, bins=np.asarray(root_bins, np.uint8))
    ]
    next_id = 1
    level = 0
    forward_passes = 0
    while level < max_levels:
        bins = torch.from_numpy(np.stack([t.bins for t in tokens]).astype(np.int64))
        mask = torch.from_numpy(build_mask(tokens, model.config.mask_variant))
        with torch.no_grad():
            splittable_logits, child_logits = model(
                bins, positions_from_bins(bins, ranges), mask
            )
        forward_passes += 1
        frontier = [i for i, t in enumerate(tokens) if t.level == level]
        new_tokens = []
        for i in frontier:
            if float(torch.sigmoid(splittable_logits[i])) <= 0.5:
                continue
            tokens[i].splittable = True
            for child in range(2):
                logits = child_logits[i, child]  # [14, 256]
                if greedy:
                    picked = logits.argmax(dim=-1)
                else:
                    probs = torch.softmax(logits / temperature, dim=-1)
                    picked = torch.multinomial(probs, 1, generator=generator).squeeze(-1)
                new_tokens.append(
                    Token(
                        node_id=next_id,
                        parent_id=tokens[i].node_id,
                        level=level + 1,
                        splittable=False,
                        bins=picked.numpy().astype(np.uint8),
                    )
                )
                next_id += 1
        if not new_tokens:
            break
        tokens.extend(new_tokens)
        level += 1
    return tokens, forward_passes
