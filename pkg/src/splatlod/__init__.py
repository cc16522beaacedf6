"""splatlod: reversible Gaussian-splat simplification into a merge-tree
hierarchy, next-scale token streams, attention masks, and a CPU fidelity
renderer."""

from .errors import (
    DegenerateMergeError,
    FormatError,
    InconsistentSequenceError,
    InsufficientPopulationError,
    InvalidParameterError,
    InvalidTargetError,
    MagicError,
    MissingPropertyError,
    NotFullySimplifiedError,
    NumericalDegeneracyError,
    SplatLodError,
    TokenTreeMismatchError,
    TruncationError,
    UnsupportedVariantError,
    VersionError,
)
from .gaussians import (
    CrossGaussian,
    Gaussian3D,
    MomentSummary,
    covariance,
    covariance_to_scale_rotation,
    cross_gaussian,
    det_cov,
    merge,
    moments,
)
from .hierarchy import HierarchyTree, LevelSets, build_tree, level_sets, stats
from .masks import AttentionMask, causal_mask, decode_cost, levelwise_mask, tree_mask
from .metrics import psnr, ssim
from .render import Camera, orbit_cameras, project, render
from .simplify import (
    GaussianSet,
    MergeRecord,
    MergeSequence,
    SimplifyConfig,
    expand,
    nearest_partner,
    simplify,
)
from .tokens import QuantSpec, TokenRecord, dequantize, fit_quant_spec, quantize, tokenize_tree

__version__ = "0.1.0"
