"""Trainer test helpers: synthetic token trees, a raw splat-PLY writer, and
a PPM/PSNR oracle — all independent of the core toolkit's code (the
acceptance flow talks to it only through its CLI and file formats)."""

import shutil
import subprocess
import sys

import numpy as np
import pytest

from splattrainer.formats import NUM_ATTRIBUTES, QuantRanges, Token
from splattrainer.treeops import build_mask


@pytest.fixture
def rng():
    return np.random.default_rng(77)


def unit_ranges() -> QuantRanges:
    mins = np.full(NUM_ATTRIBUTES, -1.0)
    maxs = np.full(NUM_ATTRIBUTES, 1.0)
    mins[3:6], maxs[3:6] = -6.0, -1.0  # log-scale range
    mins[10], maxs[10] = 0.0, 1.0
    return QuantRanges(mins=mins, maxs=maxs, flags=bytes([1 if a in (3, 4, 5) else 0 for a in range(14)]))


def random_tree_tokens(rng, leaves: int) -> list[Token]:
    """Balanced-ish random binary token tree in next-scale order."""
    tokens = [Token(0, None, 0, False, rng.integers(0, 256, NUM_ATTRIBUTES).astype(np.uint8))]
    next_id = 1
    frontier = [0]
    remaining = leaves - 1
    level = 0
    by_id = {0: tokens[0]}
    while remaining > 0:
        level += 1
        new_frontier = []
        for ident in frontier:
            if remaining <= 0:
                new_frontier.append(ident)
                continue
            by_id[ident].splittable = True
            for _ in range(2):
                tok = Token(
                    next_id, ident, level, False, rng.integers(0, 256, NUM_ATTRIBUTES).astype(np.uint8)
                )
                tokens.append(tok)
                by_id[next_id] = tok
                new_frontier.append(next_id)
                next_id += 1
            remaining -= 1
        frontier = new_frontier
    return tokens


def make_batch(rng, leaves: int, variant: str = "tree"):
    from splattrainer.training import prepare_batch

    tokens = random_tree_tokens(rng, leaves)
    ranges = unit_ranges()
    return tokens, prepare_batch(tokens, build_mask(tokens, variant), ranges), ranges


# ---------------------------------------------------------------------------
# splat PLY writer (raw bytes; mirrors the de-facto checkpoint convention)

_PLY_PROPS = [
    "x", "y", "z", "nx", "ny", "nz",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
]


def write_splat_ply(path, centers, colors_dc, opacity_logits, log_scales, quats):
    n = len(centers)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in _PLY_PROPS]
    header.append("end_header")
    table = np.zeros((n, len(_PLY_PROPS)), dtype=np.float64)
    table[:, 0:3] = centers
    table[:, 6:9] = colors_dc
    table[:, 9] = opacity_logits
    table[:, 10:13] = log_scales
    table[:, 13:17] = quats
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(table.astype("<f4").tobytes())


def make_cluster_ply(path, rng, n=32, clusters=4):
    centers_k = rng.uniform(-1, 1, size=(clusters, 3))
    colors_k = rng.uniform(-1.2, 1.2, size=(clusters, 3))
    assign = rng.integers(0, clusters, size=n)
    centers = centers_k[assign] + rng.normal(scale=0.12, size=(n, 3))
    colors = colors_k[assign] + rng.normal(scale=0.05, size=(n, 3))
    opacity_logits = rng.uniform(0.5, 2.5, size=n)
    log_scales = rng.uniform(np.log(0.04), np.log(0.1), size=(n, 3))
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    write_splat_ply(path, centers, colors, opacity_logits, log_scales, quats)


# ---------------------------------------------------------------------------
# primary-CLI access and image oracles


def run_splatlod(args: list[str]) -> None:
    exe = shutil.which("splatlod")
    cmd = [exe] + args if exe else [sys.executable, "-m", "splatlod.cli"] + args
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"splatlod {args} failed ({proc.returncode}): {proc.stderr}")


def read_ppm(path) -> np.ndarray:
    data = open(path, "rb").read()
    assert data.startswith(b"P6")
    parts = data.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3][: w * h * 3], dtype=np.uint8)
    return pixels.reshape(h, w, 3).astype(np.float64) / 255.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return 100.0
    return float(10.0 * np.log10(1.0 / mse))
