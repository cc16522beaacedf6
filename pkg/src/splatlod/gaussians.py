"""Gaussian primitive algebra: covariance assembly, moments, cross Gaussian,
and the pairwise merge operator.

All functions are pure and operate on immutable inputs; they are safe for
unrestricted concurrent use. Quaternions use (w, x, y, z) ordering throughout.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateMergeError,
    InvalidParameterError,
    NumericalDegeneracyError,
)

# Scene-unit floor applied to scale components at ingestion; keeps every
# covariance invertible for the cross-Gaussian computation.
MIN_SCALE = 1e-8

# Covariances whose condition number exceeds this are rejected as degenerate.
COND_LIMIT = 1e12

# (2*pi)**1.5, the Gaussian normalization volume factor.
GAUSS_NORM_3D = (2.0 * np.pi) ** 1.5

QUAT_NORM_TOL = 1e-6


class ClampCounter:
    """Counts clamp events for diagnostics. Increment is GIL-atomic enough
    for a counter that is never used for control flow."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, k: int = 1) -> None:
        self.count += k

    def reset(self) -> None:
        self.count = 0


#: Number of merges whose opacity had to be clamped back into (0, 1].
opacity_clamp_counter = ClampCounter()


def _as_vec(x, n: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape[0] != n:
        raise InvalidParameterError(f"{name} must have {n} components, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class Gaussian3D:
    """One anisotropic Gaussian primitive.

    center:   3-vector, scene units
    opacity:  scalar in (0, 1]
    scale:    3 positive semi-axis lengths (diagonal of the scaling matrix)
    rotation: unit quaternion (w, x, y, z)
    features: SH coefficients; the first 3 values are the DC (degree-0) slice
    """

    center: np.ndarray
    opacity: float
    scale: np.ndarray
    rotation: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec(self.center, 3, "center"))
        object.__setattr__(self, "opacity", float(self.opacity))
        object.__setattr__(self, "scale", _as_vec(self.scale, 3, "scale"))
        object.__setattr__(self, "rotation", _as_vec(self.rotation, 4, "rotation"))
        feats = np.asarray(self.features, dtype=np.float64).reshape(-1)
        if feats.shape[0] < 3 or not np.all(np.isfinite(feats)):
            raise InvalidParameterError("features must hold at least the 3 DC values")
        object.__setattr__(self, "features", feats)
        if not (0.0 < self.opacity <= 1.0):
            raise InvalidParameterError(f"opacity {self.opacity} outside (0, 1]")
        if np.any(self.scale <= 0.0):
            raise InvalidParameterError(f"scale components must be positive, got {self.scale}")
        norm = float(np.linalg.norm(self.rotation))
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise InvalidParameterError(f"quaternion norm {norm} deviates from 1 by more than {QUAT_NORM_TOL}")
        for arr in (self.center, self.scale, self.rotation, self.features):
            arr.setflags(write=False)

    @property
    def features_dc(self) -> np.ndarray:
        return self.features[:3]


@dataclass(frozen=True)
class MomentSummary:
    """Zeroth moment (total mass) and first moment (mass-weighted center)."""

    m0: float
    m1: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "m0", float(self.m0))
        object.__setattr__(self, "m1", _as_vec(self.m1, 3, "m1"))
        self.m1.setflags(write=False)


@dataclass(frozen=True)
class CrossGaussian:
    """Product-of-Gaussians overlap term for a pair of primitives."""

    center_c: np.ndarray
    opacity_c: float
    cov_c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center_c", _as_vec(self.center_c, 3, "center_c"))
        object.__setattr__(self, "opacity_c", float(self.opacity_c))
        cov = np.asarray(self.cov_c, dtype=np.float64)
        if cov.shape != (3, 3):
            raise InvalidParameterError("cov_c must be 3x3")
        object.__setattr__(self, "cov_c", cov)
        self.center_c.setflags(write=False)
        self.cov_c.setflags(write=False)


def canonicalize_quaternion(q: np.ndarray) -> np.ndarray:
    """Return q or -q such that w >= 0; sign ties resolved on the first
    nonzero component so the choice is deterministic."""
    q = np.asarray(q, dtype=np.float64)
    for c in q:
        if c > 0.0:
            return q.copy()
        if c < 0.0:
            return -q
    return q.copy()


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a quaternion (w, x, y, z); normalizes first."""
    q = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise InvalidParameterError("zero quaternion has no rotation")
    w, x, y, z = q / norm
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    )


def rotation_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Quaternion (w, x, y, z) of a rotation matrix, canonicalized to w >= 0.

    Branches on the largest diagonal term (Shepperd's method) for stability.
    """
    r = np.asarray(r, dtype=np.float64)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] > r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    q = q / np.linalg.norm(q)
    return canonicalize_quaternion(q)


def covariance(scale: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Covariance R * diag(scale^2) * R^T of a scaled, rotated Gaussian."""
    scale = _as_vec(scale, 3, "scale")
    if np.any(scale <= 0.0):
        raise InvalidParameterError(f"scale components must be positive, got {scale}")
    r = quaternion_to_rotation(rotation)
    cov = (r * (scale * scale)) @ r.T
    return 0.5 * (cov + cov.T)


def covariance_to_scale_rotation(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Recover (scale, quaternion) from a symmetric PD covariance.

    Canonical decomposition: eigenvalues sorted descending; each of the first
    two eigenvectors sign-fixed so its largest-magnitude component is
    positive; the third axis is the cross product of the first two, forcing a
    right-handed frame; the quaternion is taken with w >= 0. This makes the
    recovery deterministic, so merging is order-independent.
    """
    cov = np.asarray(cov, dtype=np.float64)
    try:
        eigvals, eigvecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(f"eigendecomposition failed: {exc}") from exc
    if not np.all(np.isfinite(eigvals)):
        raise NumericalDegeneracyError("eigendecomposition produced non-finite values")
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    basis = np.empty((3, 3))
    for k in range(2):
        v = eigvecs[:, k]
        if v[np.argmax(np.abs(v))] < 0.0:
            v = -v
        basis[:, k] = v
    basis[:, 2] = np.cross(basis[:, 0], basis[:, 1])
    scale = np.sqrt(np.maximum(eigvals, MIN_SCALE * MIN_SCALE))
    return scale, rotation_to_quaternion(basis)


def det_cov(g: Gaussian3D) -> float:
    """det of the covariance; rotation-invariant, so (sx*sy*sz)^2."""
    s = g.scale
    return float((s[0] * s[1] * s[2]) ** 2)


def moments_of(opacity: float, center: np.ndarray, cov: np.ndarray) -> MomentSummary:
    """Moments of an explicit (opacity, center, covariance) triple."""
    det = float(np.linalg.det(cov))
    if det <= 0.0:
        raise NumericalDegeneracyError(f"covariance determinant {det} is not positive")
    m0 = opacity * GAUSS_NORM_3D * np.sqrt(det)
    return MomentSummary(m0=m0, m1=m0 * np.asarray(center, dtype=np.float64))


def moments(g: Gaussian3D) -> MomentSummary:
    """Total mass m0 = o * (2*pi)^(3/2) * det(cov)^(1/2) and m1 = m0 * center.

    det^(1/2) reduces to sx*sy*sz, which avoids forming the covariance.
    """
    s = g.scale
    m0 = g.opacity * GAUSS_NORM_3D * float(s[0] * s[1] * s[2])
    return MomentSummary(m0=m0, m1=m0 * g.center)


def _check_conditioning(g: Gaussian3D) -> None:
    s = g.scale
    cond = (float(np.max(s)) / float(np.min(s))) ** 2
    if cond > COND_LIMIT:
        raise NumericalDegeneracyError(
            f"covariance condition number {cond:.3e} exceeds limit {COND_LIMIT:.1e}"
        )


def cross_gaussian(g1: Gaussian3D, g2: Gaussian3D) -> CrossGaussian:
    """Overlap (product) Gaussian of a pair.

    opacity_c = o1*o2, cov_c = (cov1^-1 + cov2^-1)^-1, and center_c is the
    precision-weighted mean. Inverses are computed per input so the result is
    bitwise symmetric in the argument order.
    """
    _check_conditioning(g1)
    _check_conditioning(g2)
    cov1 = covariance(g1.scale, g1.rotation)
    cov2 = covariance(g2.scale, g2.rotation)
    try:
        p1 = np.linalg.inv(cov1)
        p2 = np.linalg.inv(cov2)
        cov_c = np.linalg.inv(p1 + p2)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(f"covariance inversion failed: {exc}") from exc
    cov_c = 0.5 * (cov_c + cov_c.T)
    center_c = cov_c @ (p1 @ g1.center + p2 @ g2.center)
    return CrossGaussian(center_c=center_c, opacity_c=g1.opacity * g2.opacity, cov_c=cov_c)


def merge(g1: Gaussian3D, g2: Gaussian3D) -> tuple[Gaussian3D, MomentSummary]:
    """Fuse two Gaussians into one, conserving zeroth and first moments.

    The overlap is discounted through the cross Gaussian; the merged
    covariance is the mass-weighted average of the input covariances over the
    merged mass, and features are mass-weighted over the input masses. The
    merged (scale, rotation) comes from the canonical eigendecomposition, so
    merge(a, b) and merge(b, a) agree bitwise.
    """
    if g1.features.shape != g2.features.shape:
        raise InvalidParameterError("cannot merge Gaussians with different feature lengths")
    cross = cross_gaussian(g1, g2)
    mom1 = moments(g1)
    mom2 = moments(g2)
    mom_c = moments_of(cross.opacity_c, cross.center_c, cross.cov_c)

    opacity = g1.opacity + g2.opacity - cross.opacity_c
    if opacity > 1.0 or opacity <= 0.0:
        opacity_clamp_counter.add()
        opacity = min(max(opacity, np.nextafter(0.0, 1.0)), 1.0)

    m0 = mom1.m0 + mom2.m0 - mom_c.m0
    if m0 <= 0.0:
        raise DegenerateMergeError(f"merged zeroth moment {m0} is not positive")
    m1 = mom1.m1 + mom2.m1 - mom_c.m1
    center = m1 / m0

    cov1 = covariance(g1.scale, g1.rotation)
    cov2 = covariance(g2.scale, g2.rotation)
    cov = (mom1.m0 * cov1 + mom2.m0 * cov2) / m0
    scale, rotation = covariance_to_scale_rotation(cov)

    features = (mom1.m0 * g1.features + mom2.m0 * g2.features) / (mom1.m0 + mom2.m0)

    merged = Gaussian3D(
        center=center, opacity=opacity, scale=scale, rotation=rotation, features=features
    )
    return merged, MomentSummary(m0=m0, m1=m1)
