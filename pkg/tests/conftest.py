"""Shared fixtures and independent oracle implementations.

Oracles here deliberately avoid the library's own code paths: extended
precision goes through mpmath, integrals through midpoint sums, and searches
through exhaustive scans.
"""

import math

import mpmath as mp
import numpy as np
import pytest

from splatlod.gaussians import Gaussian3D


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_gaussian(
    rng,
    center_span: float = 1.0,
    scale_range: tuple[float, float] = (0.5, 1.5),
    extra_sh: int = 0,
) -> Gaussian3D:
    q = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    lo, hi = scale_range
    return Gaussian3D(
        center=rng.uniform(-center_span, center_span, size=3),
        opacity=float(rng.uniform(0.05, 1.0)),
        scale=np.exp(rng.uniform(math.log(lo), math.log(hi), size=3)),
        rotation=q if q[0] >= 0 else -q,
        features=rng.uniform(-1.5, 1.5, size=3 + extra_sh),
    )


def gaussians_equal(a: Gaussian3D, b: Gaussian3D) -> bool:
    return (
        np.array_equal(a.center, b.center)
        and a.opacity == b.opacity
        and np.array_equal(a.scale, b.scale)
        and np.array_equal(a.rotation, b.rotation)
        and np.array_equal(a.features, b.features)
    )


def sets_equal(a, b) -> bool:
    if a.active_ids() != b.active_ids():
        return False
    return all(gaussians_equal(a.payload(i), b.payload(i)) for i in a.active_ids())


def sequences_equal(a, b) -> bool:
    if a.source_count != b.source_count or len(a.records) != len(b.records):
        return False
    for ra, rb in zip(a.records, b.records):
        if (ra.step, ra.parent_id, ra.child1_id, ra.child2_id) != (
            rb.step,
            rb.parent_id,
            rb.child1_id,
            rb.child2_id,
        ):
            return False
        if not (
            gaussians_equal(ra.child1_payload, rb.child1_payload)
            and gaussians_equal(ra.child2_payload, rb.child2_payload)
            and gaussians_equal(ra.parent_payload, rb.parent_payload)
        ):
            return False
    return True


# ---------------------------------------------------------------------------
# extended-precision oracles (mpmath, 50 significant digits)

mp.mp.dps = 50


def mp_quat_to_rotation(q) -> mp.matrix:
    w, x, y, z = (mp.mpf(float(v)) for v in q)
    norm = mp.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / norm, x / norm, y / norm, z / norm
    return mp.matrix(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def mp_covariance(scale, rotation) -> mp.matrix:
    r = mp_quat_to_rotation(rotation)
    s = mp.matrix(3, 3)
    for k in range(3):
        s[k, k] = mp.mpf(float(scale[k])) ** 2
    return r * s * r.T


def mp_to_numpy(m: mp.matrix) -> np.ndarray:
    return np.array([[float(m[i, j]) for j in range(m.cols)] for i in range(m.rows)])


def mp_det3(m: mp.matrix):
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def mp_vec(v) -> mp.matrix:
    return mp.matrix([mp.mpf(float(x)) for x in v])


def mp_cross_and_merge(g1: Gaussian3D, g2: Gaussian3D) -> dict:
    """Straight-line extended-precision evaluation of the cross Gaussian,
    moment bookkeeping, merged covariance, and feature fusion."""
    cov1 = mp_covariance(g1.scale, g1.rotation)
    cov2 = mp_covariance(g2.scale, g2.rotation)
    p1 = cov1**-1
    p2 = cov2**-1
    cov_c = (p1 + p2) ** -1
    u_c = cov_c * (p1 * mp_vec(g1.center) + p2 * mp_vec(g2.center))
    o1 = mp.mpf(g1.opacity)
    o2 = mp.mpf(g2.opacity)
    o_c = o1 * o2
    norm = (2 * mp.pi) ** mp.mpf("1.5")
    m01 = o1 * norm * mp.sqrt(mp_det3(cov1))
    m02 = o2 * norm * mp.sqrt(mp_det3(cov2))
    m0c = o_c * norm * mp.sqrt(mp_det3(cov_c))
    m0 = m01 + m02 - m0c
    m1 = m01 * mp_vec(g1.center) + m02 * mp_vec(g2.center) - m0c * u_c
    u3 = mp.matrix([m1[k] / m0 for k in range(3)])
    cov3 = (cov1 * m01 + cov2 * m02) / m0
    f3 = [
        (m01 * mp.mpf(float(a)) + m02 * mp.mpf(float(b))) / (m01 + m02)
        for a, b in zip(g1.features, g2.features)
    ]
    return {
        "o_c": float(o_c),
        "u_c": np.array([float(u_c[k]) for k in range(3)]),
        "cov_c": mp_to_numpy(cov_c),
        "m0_parts": (float(m01), float(m02), float(m0c)),
        "o3": float(o1 + o2 - o_c),
        "m0": float(m0),
        "m1": np.array([float(m1[k]) for k in range(3)]),
        "u3": np.array([float(u3[k]) for k in range(3)]),
        "cov3": mp_to_numpy(cov3),
        "f3": np.array([float(v) for v in f3]),
    }


def grid_integral_mass(opacity: float, center, cov, points_per_sigma: float = 4.0) -> float:
    """Midpoint-rule mass over a +-6 sigma axis-aligned box; independent of
    the closed-form moment expression."""
    cov = np.asarray(cov, dtype=np.float64)
    prec = np.linalg.inv(cov)
    sigma_axis = np.sqrt(np.diag(cov))
    sigma_min = math.sqrt(float(np.min(np.linalg.eigvalsh(cov))))
    axes = []
    steps = []
    for k in range(3):
        half = 6.0 * sigma_axis[k]
        count = max(24, int(math.ceil(2.0 * half * points_per_sigma / sigma_min)))
        edges = np.linspace(-half, half, count + 1)
        axes.append(center[k] + 0.5 * (edges[:-1] + edges[1:]))
        steps.append(edges[1] - edges[0])
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    diff = np.stack([gx - center[0], gy - center[1], gz - center[2]], axis=-1)
    quad = np.einsum("...i,ij,...j->...", diff, prec, diff)
    return float(opacity * np.exp(-0.5 * quad).sum() * steps[0] * steps[1] * steps[2])


def naive_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Direct sliding-window SSIM with explicit python loops."""
    window = 11
    sigma = 1.5
    offsets = np.arange(window) - (window - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    w2d = np.outer(g, g)
    w2d = w2d / w2d.sum()
    c1 = 0.01**2
    c2 = 0.03**2
    h, w = a.shape[:2]
    channels = a.shape[2] if a.ndim == 3 else 1
    a = a.reshape(h, w, channels)
    b = b.reshape(h, w, channels)
    channel_means = []
    for c in range(channels):
        values = []
        for i in range(h - window + 1):
            for j in range(w - window + 1):
                pa = a[i : i + window, j : j + window, c]
                pb = b[i : i + window, j : j + window, c]
                mu_a = float((w2d * pa).sum())
                mu_b = float((w2d * pb).sum())
                var_a = float((w2d * pa * pa).sum()) - mu_a * mu_a
                var_b = float((w2d * pb * pb).sum()) - mu_b * mu_b
                cov = float((w2d * pa * pb).sum()) - mu_a * mu_b
                values.append(
                    ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                    / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
                )
        channel_means.append(float(np.mean(values)))
    return float(np.mean(channel_means))
