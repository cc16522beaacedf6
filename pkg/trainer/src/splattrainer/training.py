"""Teacher-forced next-scale training with noise augmentation.

Inputs may be perturbed (a ratio of tokens gets uniformly resampled bins) but
supervision always stays on the clean ground-truth children and splittable
flags, so the model learns to correct corrupted context.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .config import ModelConfig
from .formats import QuantRanges, Token
from .model import NextScaleModel


@dataclass
class TreeBatch:
    """One token tree prepared for training."""

    bins: torch.Tensor         # [n, 14] long, clean inputs
    splittable: torch.Tensor   # [n] float targets
    child_bins: torch.Tensor   # [n, 2, 14] long (zeros where childless)
    has_children: torch.Tensor # [n] bool
    mask: torch.Tensor         # [n, n] bool
    ranges: QuantRanges

    @property
    def count(self) -> int:
        return int(self.bins.shape[0])


def positions_from_bins(bins: torch.Tensor, ranges: QuantRanges) -> torch.Tensor:
    """Dequantized bin-center xyz coordinates for the rotary encoding."""
    centers = ranges.centers(bins[:, :3].numpy(), attrs=slice(0, 3))
    return torch.from_numpy(centers).float()


def prepare_batch(tokens: list[Token], mask: np.ndarray, ranges: QuantRanges) -> TreeBatch:
    if not tokens:
        raise ValueError("empty batch")
    n = len(tokens)
    pos = {t.node_id: i for i, t in enumerate(tokens)}
    bins = torch.from_numpy(np.stack([t.bins for t in tokens]).astype(np.int64))
    splittable = torch.zeros(n)
    child_bins = torch.zeros(n, 2, bins.shape[1], dtype=torch.int64)
    has_children = torch.zeros(n, dtype=torch.bool)
    children: dict[int, list[int]] = {}
    for i, tok in enumerate(tokens):
        if tok.parent_id is not None:
            children.setdefault(pos[tok.parent_id], []).append(i)
    for parent, kids in children.items():
        if len(kids) != 2:
            raise ValueError(f"node at position {parent} has {len(kids)} children; need 2")
        splittable[parent] = 1.0
        has_children[parent] = True
        # children are adjacent in token order: stored child order is kept
        child_bins[parent, 0] = bins[kids[0]]
        child_bins[parent, 1] = bins[kids[1]]
    return TreeBatch(
        bins=bins,
        splittable=splittable,
        child_bins=child_bins,
        has_children=has_children,
        mask=torch.from_numpy(np.asarray(mask, dtype=bool)),
        ranges=ranges,
    )


def perturb_inputs(
    batch: TreeBatch, noise_ratio: float, generator: torch.Generator
) -> torch.Tensor:
    """Clean bins with ceil(noise_ratio * n) tokens uniformly resampled."""
    bins = batch.bins.clone()
    if noise_ratio <= 0.0:
        return bins
    n = batch.count
    count = min(n, math.ceil(noise_ratio * n))
    chosen = torch.randperm(n, generator=generator)[:count]
    noise = torch.randint(0, 256, (count, bins.shape[1]), generator=generator)
    bins[chosen] = noise
    return bins


def compute_loss(
    model: NextScaleModel, batch: TreeBatch, inputs: torch.Tensor
) -> tuple[torch.Tensor, dict]:
    positions = positions_from_bins(inputs, batch.ranges)
    splittable_logits, child_logits = model(inputs, positions, batch.mask)
    loss = F.binary_cross_entropy_with_logits(splittable_logits, batch.splittable)
    metrics = {}
    predicted_split = splittable_logits > 0.0
    metrics["splittable_accuracy"] = float(
        (predicted_split == batch.splittable.bool()).float().mean()
    )
    if bool(batch.has_children.any()):
        logits = child_logits[batch.has_children]          # [k, 2, 14, 256]
        targets = batch.child_bins[batch.has_children]     # [k, 2, 14]
        attr_loss = F.cross_entropy(logits.reshape(-1, 256), targets.reshape(-1))
        loss = loss + attr_loss
        correct = logits.argmax(dim=-1) == targets
        metrics["attribute_accuracy"] = float(correct.float().mean())
        metrics["node_accuracy"] = float(correct.flatten(1).all(dim=1).float().mean())
    else:
        metrics["attribute_accuracy"] = float("nan")
        metrics["node_accuracy"] = float("nan")
    return loss, metrics


def train_step(
    model: NextScaleModel,
    batch: TreeBatch,
    noise_ratio: float,
    optimizer: torch.optim.Optimizer,
    generator: torch.Generator,
) -> tuple[float, dict]:
    if batch.count == 0:
        raise ValueError("empty batch")
    model.train()
    inputs = perturb_inputs(batch, noise_ratio, generator)
    optimizer.zero_grad()
    loss, metrics = compute_loss(model, batch, inputs)
    if not torch.isfinite(loss):
        raise FloatingPointError("training loss is not finite")
    loss.backward()
    optimizer.step()
    return float(loss.detach()), metrics


def fit(
    model: NextScaleModel,
    batch: TreeBatch,
    steps: int,
    lr: float = 1e-3,
    noise_ratio: float | None = None,
    seed: int = 0,
    log_path=None,
    stop_at: tuple[float, float] | None = None,
) -> list[dict]:
    """Adam loop on one tree; returns (and optionally writes) the step log.

    stop_at = (splittable_acc, attribute_acc) stops early once both clean
    teacher-forced accuracies reach their thresholds."""
    if noise_ratio is None:
        noise_ratio = model.config.noise_ratio
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    generator = torch.Generator().manual_seed(seed)
    log = []
    for step in range(steps):
        loss, metrics = train_step(model, batch, noise_ratio, optimizer, generator)
        entry = {"step": step, "loss": loss}
        entry.update(metrics)
        log.append(entry)
        if stop_at is not None and step % 10 == 0:
            model.eval()
            with torch.no_grad():
                _, clean = compute_loss(model, batch, batch.bins)
            if (
                clean["splittable_accuracy"] >= stop_at[0]
                and clean["attribute_accuracy"] >= stop_at[1]
            ):
                break
    if log_path is not None:
        with open(log_path, "w") as fh:
            json.dump(log, fh, indent=2)
    return log


def evaluate(model: NextScaleModel, batch: TreeBatch) -> dict:
    """Clean teacher-forced accuracies."""
    model.eval()
    with torch.no_grad():
        _, metrics = compute_loss(model, batch, batch.bins)
    return metrics
