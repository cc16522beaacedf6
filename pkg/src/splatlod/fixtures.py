"""Seeded synthetic Gaussian sets for verification suites and demos."""

import numpy as np

from .gaussians import Gaussian3D
from .simplify import GaussianSet


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def random_gaussian(
    rng: np.random.Generator,
    center_span: float = 1.0,
    scale_range: tuple[float, float] = (0.5, 1.5),
    extra_sh: int = 0,
) -> Gaussian3D:
    lo, hi = scale_range
    features = rng.uniform(-1.5, 1.5, size=3 + extra_sh)
    return Gaussian3D(
        center=rng.uniform(-center_span, center_span, size=3),
        opacity=float(rng.uniform(0.05, 1.0)),
        scale=np.exp(rng.uniform(np.log(lo), np.log(hi), size=3)),
        rotation=random_quaternion(rng),
        features=features,
    )


def random_set(rng: np.random.Generator, n: int, **kwargs) -> GaussianSet:
    return GaussianSet.from_gaussians(random_gaussian(rng, **kwargs) for _ in range(n))


def make_cluster_object(
    rng: np.random.Generator,
    n: int,
    clusters: int = 8,
    spread: float = 1.0,
    point_sigma: float = 0.15,
    scale_range: tuple[float, float] = (0.02, 0.08),
) -> GaussianSet:
    """Uniform random clusters of small colored splats; the synthetic stand-in
    for a desk-scale object."""
    centers = rng.uniform(-spread, spread, size=(clusters, 3))
    colors = rng.uniform(-1.5, 1.5, size=(clusters, 3))
    lo, hi = scale_range
    gaussians = []
    for _ in range(n):
        k = int(rng.integers(clusters))
        gaussians.append(
            Gaussian3D(
                center=centers[k] + rng.normal(scale=point_sigma, size=3),
                opacity=float(rng.uniform(0.4, 1.0)),
                scale=np.exp(rng.uniform(np.log(lo), np.log(hi), size=3)),
                rotation=random_quaternion(rng),
                features=colors[k] + rng.normal(scale=0.1, size=3),
            )
        )
    return GaussianSet.from_gaussians(gaussians)
