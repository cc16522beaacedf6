"""Minimal CPU perspective splat renderer.

Gaussians are projected to 2D with the standard perspective Jacobian,
composited front to back per pixel, and shaded from the SH DC term only.
Rendering is deterministic: the splat order is fixed by (depth, id) and each
pixel's accumulation is independent, so partitioning rows across workers
cannot change the output.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .gaussians import covariance
from .simplify import GaussianSet

NEAR_PLANE = 0.01
COV2D_FLOOR = 0.3
ALPHA_CAP = 0.99
TRANSMITTANCE_FLOOR = 1e-4
FOOTPRINT_SIGMA = 3.5

# Degree-0 SH basis constant 1/(2*sqrt(pi)); DC -> RGB is 0.5 + C0 * f_dc.
SH_DC_COEFF = 0.28209479177387814


@dataclass(frozen=True)
class Camera:
    rotation: np.ndarray
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-6:
            raise InvalidParameterError("camera rotation is not orthonormal")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidParameterError("focal lengths must be positive")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        rot.setflags(write=False)
        trans.setflags(write=False)


def project(g, cam: Camera):
    """(mean2d, cov2d, depth) of a Gaussian, or None when culled behind the
    near plane."""
    p = cam.rotation @ g.center + cam.translation
    depth = float(p[2])
    if depth <= NEAR_PLANE:
        return None
    x, y, z = float(p[0]), float(p[1]), depth
    mean2d = np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])
    jac = np.array(
        [
            [cam.fx / z, 0.0, -cam.fx * x / (z * z)],
            [0.0, cam.fy / z, -cam.fy * y / (z * z)],
        ]
    )
    jw = jac @ cam.rotation
    cov2d = jw @ covariance(g.scale, g.rotation) @ jw.T
    cov2d = 0.5 * (cov2d + cov2d.T) + COV2D_FLOOR * np.eye(2)
    return mean2d, cov2d, depth


def _prepare_splats(gset: GaussianSet, cam: Camera) -> list[dict]:
    splats = []
    for ident, g in gset.active_gaussians():
        projected = project(g, cam)
        if projected is None:
            continue
        mean2d, cov2d, depth = projected
        a, b, c = cov2d[0, 0], cov2d[0, 1], cov2d[1, 1]
        det = a * c - b * b
        if det <= 0.0:
            continue
        conic = np.array([c / det, -b / det, a / det])
        lam_max = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
        radius = FOOTPRINT_SIGMA * np.sqrt(lam_max)
        color = np.clip(0.5 + SH_DC_COEFF * g.features_dc, 0.0, 1.0)
        splats.append(
            {
                "depth": depth,
                "id": ident,
                "mean": mean2d,
                "conic": conic,
                "radius": float(radius),
                "opacity": g.opacity,
                "color": color,
            }
        )
    splats.sort(key=lambda s: (s["depth"], s["id"]))
    return splats


def _render_rows(splats: list[dict], cam: Camera, row0: int, row1: int) -> np.ndarray:
    height = row1 - row0
    width = cam.width
    image = np.zeros((height, width, 3))
    transmittance = np.ones((height, width))
    xs = np.arange(width) + 0.5
    ys = np.arange(row0, row1) + 0.5
    for s in splats:
        mx, my = s["mean"]
        x0 = max(int(np.floor(mx - s["radius"] - 0.5)), 0)
        x1 = min(int(np.ceil(mx + s["radius"] + 0.5)), width)
        y0 = max(int(np.floor(my - s["radius"] - 0.5)), row0)
        y1 = min(int(np.ceil(my + s["radius"] + 0.5)), row1)
        if x0 >= x1 or y0 >= y1:
            continue
        dx = xs[x0:x1] - mx
        dy = ys[y0 - row0 : y1 - row0] - my
        ca, cb, cc = s["conic"]
        quad = (
            ca * (dx * dx)[None, :]
            + 2.0 * cb * dy[:, None] * dx[None, :]
            + cc * (dy * dy)[:, None]
        )
        alpha = np.minimum(ALPHA_CAP, s["opacity"] * np.exp(-0.5 * np.maximum(quad, 0.0)))
        view_t = transmittance[y0 - row0 : y1 - row0, x0:x1]
        alive = view_t >= TRANSMITTANCE_FLOOR
        weight = np.where(alive, alpha * view_t, 0.0)
        image[y0 - row0 : y1 - row0, x0:x1] += weight[:, :, None] * s["color"][None, None, :]
        view_t *= np.where(alive, 1.0 - alpha, 1.0)
    return np.clip(image, 0.0, 1.0)


def render(gset: GaussianSet, cam: Camera, workers: int = 1) -> np.ndarray:
    """Front-to-back composite of the active set; HxWx3 floats in [0, 1].

    Output is bitwise identical for any worker count because rows are
    partitioned and every pixel is accumulated in the same splat order.
    """
    workers = max(1, min(int(workers), cam.height))
    splats = _prepare_splats(gset, cam)
    bounds = np.linspace(0, cam.height, workers + 1).astype(int)
    spans = [(int(bounds[k]), int(bounds[k + 1])) for k in range(workers)]
    if workers == 1:
        chunks = [_render_rows(splats, cam, 0, cam.height)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda span: _render_rows(splats, cam, *span), spans))
    return np.vstack(chunks)


def look_at_camera(eye, target, width: int, height: int, focal: float | None = None) -> Camera:
    """Camera at eye looking toward target; +z forward, +y image-down."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    up_hint = np.array([0.0, 0.0, 1.0])
    if abs(float(forward @ up_hint)) > 0.999:
        up_hint = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up_hint)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    focal = 0.75 * width if focal is None else focal
    return Camera(
        rotation=rot,
        translation=-rot @ eye,
        fx=focal,
        fy=focal,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
    )


def bounding_sphere(gset: GaussianSet) -> tuple[np.ndarray, float]:
    """Centroid-anchored sphere covering every splat center plus 3 sigma."""
    centers = np.array([g.center for _, g in gset.active_gaussians()])
    scales = np.array([g.scale.max() for _, g in gset.active_gaussians()])
    centroid = centers.mean(axis=0)
    radius = float(np.max(np.linalg.norm(centers - centroid, axis=1) + 3.0 * scales))
    return centroid, max(radius, 1e-6)


def orbit_cameras(
    gset: GaussianSet,
    count: int = 8,
    width: int = 96,
    height: int = 96,
    elevation_deg: float = 20.0,
) -> list[Camera]:
    """Evaluation viewpoints on a circle of radius twice the bounding-sphere
    radius at the given elevation."""
    center, radius = bounding_sphere(gset)
    distance = 2.0 * radius
    elev = np.deg2rad(elevation_deg)
    cams = []
    for k in range(count):
        theta = 2.0 * np.pi * k / count
        eye = center + distance * np.array(
            [np.cos(theta) * np.cos(elev), np.sin(theta) * np.cos(elev), np.sin(elev)]
        )
        cams.append(look_at_camera(eye, center, width, height))
    return cams
