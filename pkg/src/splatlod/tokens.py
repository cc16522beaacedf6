"""Quantization of Gaussians into 14-attribute discrete tokens.

Attribute order: center x,y,z; scale x,y,z; quaternion w,x,y,z; opacity;
DC feature r,g,b. Scales are binned in log space; quaternions are
canonicalized to w >= 0 before binning so q and -q share a token. Tokens of a
tree are emitted in next-scale order: level by level, children grouped under
their parent's sequence position.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .gaussians import ClampCounter, Gaussian3D, canonicalize_quaternion
from .hierarchy import HierarchyTree

NUM_ATTRIBUTES = 14
NUM_BINS = 256

ATTRIBUTE_NAMES = (
    "center_x", "center_y", "center_z",
    "scale_x", "scale_y", "scale_z",
    "quat_w", "quat_x", "quat_y", "quat_z",
    "opacity",
    "dc_r", "dc_g", "dc_b",
)

_SCALE_ATTRS = (3, 4, 5)
_QUAT_ATTRS = (6, 7, 8, 9)
_OPACITY_ATTR = 10

#: Out-of-range attribute values clamped during quantization.
range_clamp_counter = ClampCounter()


@dataclass(frozen=True)
class QuantSpec:
    """Per-attribute codebook ranges; 256 bins each."""

    mins: np.ndarray
    maxs: np.ndarray
    log_scale: tuple[bool, ...]
    widened: tuple[bool, ...]
    bins: int = NUM_BINS

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64).reshape(NUM_ATTRIBUTES)
        maxs = np.asarray(self.maxs, dtype=np.float64).reshape(NUM_ATTRIBUTES)
        if np.any(maxs <= mins):
            raise InvalidParameterError("each attribute range must have max > min")
        if self.bins != NUM_BINS:
            raise InvalidParameterError(f"bins must be {NUM_BINS}")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "log_scale", tuple(bool(b) for b in self.log_scale))
        object.__setattr__(self, "widened", tuple(bool(b) for b in self.widened))
        mins.setflags(write=False)
        maxs.setflags(write=False)


@dataclass(frozen=True)
class TokenRecord:
    """One quantized node: 14 bin indices plus tree bookkeeping."""

    bins: np.ndarray
    splittable: bool
    node_id: int
    level: int
    parent_id: int | None = None

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.uint8).reshape(NUM_ATTRIBUTES)
        object.__setattr__(self, "bins", bins)
        bins.setflags(write=False)


def gaussian_attributes(g: Gaussian3D) -> np.ndarray:
    """Raw 14-attribute vector (scale linear, quaternion canonicalized)."""
    quat = canonicalize_quaternion(g.rotation)
    return np.concatenate([g.center, g.scale, quat, [g.opacity], g.features_dc])


def fit_quant_spec(sets) -> QuantSpec:
    """Ranges over every payload of one or more GaussianSets.

    Scale ranges are measured in log space. Quaternion components get the
    fixed range [-1, 1] and opacity (0, 1]. A degenerate range (max == min)
    is widened by 1e-6 and flagged.
    """
    if hasattr(sets, "active_ids"):
        sets = [sets]
    rows = []
    for gset in sets:
        for g in gset.all_payloads():
            rows.append(gaussian_attributes(g))
    if not rows:
        raise InvalidParameterError("cannot fit a quantization spec on an empty corpus")
    values = np.asarray(rows)
    for a in _SCALE_ATTRS:
        values[:, a] = np.log(values[:, a])
    mins = values.min(axis=0)
    maxs = values.max(axis=0)
    for a in _QUAT_ATTRS:
        mins[a], maxs[a] = -1.0, 1.0
    mins[_OPACITY_ATTR], maxs[_OPACITY_ATTR] = 0.0, 1.0
    widened = [False] * NUM_ATTRIBUTES
    for a in range(NUM_ATTRIBUTES):
        if maxs[a] == mins[a]:
            mins[a] -= 5e-7
            maxs[a] += 5e-7
            widened[a] = True
    log_scale = tuple(a in _SCALE_ATTRS for a in range(NUM_ATTRIBUTES))
    return QuantSpec(mins=mins, maxs=maxs, log_scale=log_scale, widened=tuple(widened))


def to_codebook_domain(values: np.ndarray) -> np.ndarray:
    """Raw attribute vector -> codebook domain (scales to log space)."""
    v = np.asarray(values, dtype=np.float64).copy()
    for a in _SCALE_ATTRS:
        v[a] = np.log(v[a])
    return v


def codebook_bins(v: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """Floor-bin a codebook-domain vector, clamping (and counting) values
    outside the spec range."""
    clamped = int(np.count_nonzero((v < spec.mins) | (v > spec.maxs)))
    if clamped:
        range_clamp_counter.add(clamped)
        v = np.clip(v, spec.mins, spec.maxs)
    x = (v - spec.mins) / (spec.maxs - spec.mins) * spec.bins
    return np.clip(np.floor(x), 0, spec.bins - 1).astype(np.uint8)


def bin_centers(bins, spec: QuantSpec) -> np.ndarray:
    """Codebook-domain vector at bin centers: min + (bin + 0.5) * width.
    codebook_bins(bin_centers(b)) == b exactly (the quantizer fixed point)."""
    b = np.asarray(bins)
    if b.shape != (NUM_ATTRIBUTES,) or np.any(b < 0) or np.any(b >= spec.bins):
        raise InvalidParameterError("need 14 bin indices < 256")
    return spec.mins + (b.astype(np.float64) + 0.5) * (spec.maxs - spec.mins) / spec.bins


def quantize_values(values: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """Bin a raw attribute vector (linear scales)."""
    return codebook_bins(to_codebook_domain(values), spec)


def quantize(g: Gaussian3D, spec: QuantSpec) -> np.ndarray:
    return quantize_values(gaussian_attributes(g), spec)


def dequantize(bins, spec: QuantSpec) -> Gaussian3D:
    """Gaussian at the bin centers; scales are exponentiated back and the
    quaternion renormalized to satisfy the unit-norm invariant.

    Renormalization moves quaternion components off their bin centers, so the
    exact quantizer fixed point is stated on bin_centers/codebook_bins; the
    Gaussian path reproduces the ten non-quaternion bins exactly."""
    v = bin_centers(bins, spec)
    scale = np.exp(v[list(_SCALE_ATTRS)])
    quat = v[list(_QUAT_ATTRS)]
    norm = float(np.linalg.norm(quat))
    if norm == 0.0:
        raise InvalidParameterError("dequantized quaternion has zero norm")
    return Gaussian3D(
        center=v[:3],
        opacity=float(v[_OPACITY_ATTR]),
        scale=scale,
        rotation=quat / norm,
        features=v[11:14],
    )


def tree_token_order(tree: HierarchyTree) -> list[int]:
    """Node ids ordered by (created level, parent sequence position, child
    index); the root comes first."""
    order = [tree.root_id]
    block_start = 0
    while True:
        nxt = []
        for ident in order[block_start:]:
            children = tree.nodes[ident].children
            if children is not None:
                nxt.extend(children)
        if not nxt:
            return order
        block_start = len(order)
        order.extend(nxt)


def tokenize_tree(tree: HierarchyTree, spec: QuantSpec) -> list[TokenRecord]:
    """One token per node in next-scale order."""
    tokens = []
    for ident in tree_token_order(tree):
        node = tree.nodes[ident]
        tokens.append(
            TokenRecord(
                bins=quantize(node.payload, spec),
                splittable=node.children is not None,
                node_id=ident,
                level=node.created_level,
                parent_id=node.parent,
            )
        )
    return tokens
