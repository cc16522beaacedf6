"""Decoder-only next-scale predictor.

Each token embeds its 14 quantized attributes through per-attribute lookup
tables, concatenated and projected into the model width. Attention uses a 3D
rotary encoding: head dimensions split into three equal groups, rotated by
the x, y, z center coordinates respectively, which makes attention logits a
function of coordinate differences only. Every token's head emits one
splittable logit plus 2 x 14 x 256 classification logits for its children.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig


def rope_angles(positions: torch.Tensor, head_dim: int, position_scale: float) -> torch.Tensor:
    """Per-token rotary angles, shape [n, head_dim // 2].

    The head_dim/2 rotation pairs are split into three consecutive groups;
    group k is driven by coordinate k with a geometric frequency ladder.
    """
    if head_dim % 6 != 0:
        raise ValueError("head dim must be divisible by 6")
    pairs_per_coord = head_dim // 6
    freqs = 10000.0 ** (-torch.arange(pairs_per_coord, dtype=torch.float32) / pairs_per_coord)
    angles = []
    for coord in range(3):
        angles.append(positions[:, coord : coord + 1].float() * position_scale * freqs[None, :])
    return torch.cat(angles, dim=1)


def apply_rotary(x: torch.Tensor, angles: torch.Tensor) -> torch.Tensor:
    """Rotate consecutive pairs of x ([heads, n, head_dim]) by angles [n, pairs]."""
    cos = torch.cos(angles)[None, :, :]
    sin = torch.sin(angles)[None, :, :]
    x1 = x[..., 0::2]
    x2 = x[..., 1::2]
    out = torch.empty_like(x)
    out[..., 0::2] = x1 * cos - x2 * sin
    out[..., 1::2] = x1 * sin + x2 * cos
    return out


class TokenEmbedding(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.tables = nn.ModuleList(
            nn.Embedding(config.vocab, config.attr_embed_dim) for _ in range(config.attributes)
        )
        self.project = nn.Linear(config.attributes * config.attr_embed_dim, config.embed_dim, bias=False)

    def forward(self, bins: torch.Tensor) -> torch.Tensor:
        parts = [table(bins[:, a]) for a, table in enumerate(self.tables)]
        return self.project(torch.cat(parts, dim=-1))


class Attention(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.heads = config.heads
        self.head_dim = config.head_dim
        self.position_scale = config.position_scale
        self.qkv = nn.Linear(config.embed_dim, 3 * config.embed_dim, bias=False)
        self.out = nn.Linear(config.embed_dim, config.embed_dim, bias=False)

    def forward(self, x: torch.Tensor, positions: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        n = x.shape[0]
        qkv = self.qkv(x).reshape(n, 3, self.heads, self.head_dim)
        q = qkv[:, 0].permute(1, 0, 2)
        k = qkv[:, 1].permute(1, 0, 2)
        v = qkv[:, 2].permute(1, 0, 2)
        angles = rope_angles(positions, self.head_dim, self.position_scale)
        q = apply_rotary(q, angles)
        k = apply_rotary(k, angles)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~mask[None, :, :], float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        mixed = (weights @ v).permute(1, 0, 2).reshape(n, -1)
        return self.out(mixed)


class Block(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(config.embed_dim)
        self.attn = Attention(config)
        self.norm2 = nn.LayerNorm(config.embed_dim)
        hidden = config.mlp_ratio * config.embed_dim
        self.mlp = nn.Sequential(
            nn.Linear(config.embed_dim, hidden), nn.GELU(), nn.Linear(hidden, config.embed_dim)
        )

    def forward(self, x, positions, mask):
        x = x + self.attn(self.norm1(x), positions, mask)
        return x + self.mlp(self.norm2(x))


class NextScaleModel(nn.Module):
    """Outputs per token: 1 splittable logit + 2 children x 14 attributes x
    256 classes."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embedding = TokenEmbedding(config)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.layers))
        self.norm = nn.LayerNorm(config.embed_dim)
        self.head = nn.Linear(config.embed_dim, 1 + 2 * config.attributes * config.vocab)

    def forward(
        self, bins: torch.Tensor, positions: torch.Tensor, mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """bins: [n, 14] long; positions: [n, 3]; mask: [n, n] bool.

        Returns (splittable_logits [n], child_logits [n, 2, 14, 256])."""
        x = self.embedding(bins)
        for block in self.blocks:
            x = block(x, positions, mask)
        out = self.head(self.norm(x))
        splittable = out[:, 0]
        cfg = self.config
        child_logits = out[:, 1:].reshape(-1, 2, cfg.attributes, cfg.vocab)
        return splittable, child_logits
