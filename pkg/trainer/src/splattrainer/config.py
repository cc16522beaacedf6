"""Model hyperparameters.

Desk-scale defaults stand in for the full-scale 24-layer / 1536-dim / 24-head
configuration, which is out of reach on a desktop. The per-head dimension
must be divisible by 6: three coordinate groups, each rotated in pairs.
Note 128/4 would give head dim 32, which violates that constraint, so the
desk default embedding is 120.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 4
    embed_dim: int = 120
    heads: int = 4
    vocab: int = 256
    attributes: int = 14
    attr_embed_dim: int = 16
    mlp_ratio: int = 4
    noise_ratio: float = 0.1
    mask_variant: str = "tree"
    position_scale: float = 64.0

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")
        if (self.embed_dim // self.heads) % 6 != 0:
            raise ValueError("head dim must be divisible by 6 (3 coordinate groups x rotary pairs)")
        if not (0.0 <= self.noise_ratio < 1.0):
            raise ValueError("noise_ratio must lie in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads
