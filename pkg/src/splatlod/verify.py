"""Self-contained oracle equivalence suites behind the `verify` subcommand.

Each suite exercises one contract with an independent brute-force check and
reports pass/fail; the CLI aggregates them into a summary JSON.
"""

import math
import time

import numpy as np

from . import fixtures
from .gaussians import GAUSS_NORM_3D, Gaussian3D, covariance, moments
from .hierarchy import build_tree, level_sets
from .masks import causal_mask, levelwise_mask, tree_mask
from .metrics import psnr, ssim
from .simplify import GaussianSet, SimplifyConfig, expand, simplify
from .tokens import dequantize, fit_quant_spec, quantize_values, tree_token_order, tokenize_tree


def _sets_equal(a: GaussianSet, b: GaussianSet) -> bool:
    if a.active_ids() != b.active_ids():
        return False
    for ident in a.active_ids():
        ga, gb = a.payload(ident), b.payload(ident)
        same = (
            np.array_equal(ga.center, gb.center)
            and ga.opacity == gb.opacity
            and np.array_equal(ga.scale, gb.scale)
            and np.array_equal(ga.rotation, gb.rotation)
            and np.array_equal(ga.features, gb.features)
        )
        if not same:
            return False
    return True


def records_equal(a, b) -> bool:
    if len(a.records) != len(b.records) or a.source_count != b.source_count:
        return False
    for ra, rb in zip(a.records, b.records):
        if (ra.step, ra.parent_id, ra.child1_id, ra.child2_id) != (
            rb.step,
            rb.parent_id,
            rb.child1_id,
            rb.child2_id,
        ):
            return False
        for pa, pb in (
            (ra.child1_payload, rb.child1_payload),
            (ra.child2_payload, rb.child2_payload),
            (ra.parent_payload, rb.parent_payload),
        ):
            if not (
                np.array_equal(pa.center, pb.center)
                and pa.opacity == pb.opacity
                and np.array_equal(pa.scale, pb.scale)
                and np.array_equal(pa.rotation, pb.rotation)
                and np.array_equal(pa.features, pb.features)
            ):
                return False
    return True


def check_simplifier_equivalence(rng: np.random.Generator) -> str:
    for trial in range(3):
        base = fixtures.random_set(rng, 200)
        accel = simplify(base.clone(), 1, SimplifyConfig(reference_scan=False))
        ref = simplify(base.clone(), 1, SimplifyConfig(reference_scan=True))
        if not records_equal(accel, ref):
            raise AssertionError(f"trial {trial}: accelerated and reference sequences differ")
    return "3 sets of n=200: accelerated == reference bitwise"


def check_roundtrip(rng: np.random.Generator) -> str:
    base = fixtures.random_set(rng, 200)
    work = base.clone()
    seq = simplify(work, 1)
    restored = expand(work, seq, len(seq.records))
    if not _sets_equal(base, restored):
        raise AssertionError("expand(simplify(P)) != P")
    return "n=200 simplify/expand roundtrip is bitwise exact"


def check_mask_oracles(rng: np.random.Generator) -> str:
    for trial in range(25):
        n = int(rng.integers(2, 33))
        gset = fixtures.random_set(rng, n)
        tree = build_tree(simplify(gset, 1))
        tokens = tokenize_tree(tree, fit_quant_spec(gset))
        pos = {t.node_id: i for i, t in enumerate(tokens)}
        sets = level_sets(tree)
        lw = levelwise_mask(tokens, tree)
        tm = tree_mask(tokens, tree)
        for i, tok in enumerate(tokens):
            expected = {i}
            if tok.level > 0:
                expected |= {pos[k] for k in sets.levels[tok.level - 1]}
            if set(np.flatnonzero(lw.allowed[i])) != expected:
                raise AssertionError(f"levelwise row {i} mismatch on trial {trial}")
            expected |= {pos[a] for a in tree.ancestors(tok.node_id)}
            if set(np.flatnonzero(tm.allowed[i])) != expected:
                raise AssertionError(f"tree row {i} mismatch on trial {trial}")
        cm = causal_mask(len(tokens))
        if not (
            np.all(lw.allowed <= tm.allowed) and np.all(tm.allowed <= cm.allowed)
        ):
            raise AssertionError(f"mask subset chain broken on trial {trial}")
    return "25 random trees: levelwise/tree rows match frontier+ancestor oracles"


def check_quantization(rng: np.random.Generator) -> str:
    gset = fixtures.random_set(rng, 64)
    spec = fit_quant_spec(gset)
    spans = spec.maxs - spec.mins
    for _ in range(2000):
        raw = spec.mins + rng.uniform(0.0, 1.0, size=14) * spans
        values = raw.copy()
        for a in (3, 4, 5):
            values[a] = math.exp(values[a])
        bins = quantize_values(values, spec)
        g = dequantize(bins, spec)
        back = np.concatenate([g.center, np.log(g.scale), g.rotation, [g.opacity], g.features_dc])
        err = np.abs(back[[0, 1, 2, 3, 4, 5, 10, 11, 12, 13]] - raw[[0, 1, 2, 3, 4, 5, 10, 11, 12, 13]])
        if np.any(err > spans[[0, 1, 2, 3, 4, 5, 10, 11, 12, 13]] / 512.0 + 1e-12):
            raise AssertionError("quantization roundtrip error above half bin width")
    return "2000 samples: quantization roundtrip within half a bin"


def check_metric_identities(rng: np.random.Generator) -> str:
    a = rng.random((16, 16, 3))
    if psnr(a, a) != 100.0:
        raise AssertionError("psnr(a, a) != 100 dB cap")
    if abs(ssim(a, a) - 1.0) > 1e-12:
        raise AssertionError("ssim(a, a) != 1")
    b = rng.random((16, 16, 3))
    if abs(psnr(a, b) - psnr(b, a)) > 1e-12 or abs(ssim(a, b) - ssim(b, a)) > 1e-9:
        raise AssertionError("metrics are not symmetric")
    return "psnr/ssim identities and symmetry hold"


def check_moments(rng: np.random.Generator) -> str:
    for _ in range(10):
        g = fixtures.random_gaussian(rng)
        cov = covariance(g.scale, g.rotation)
        m0 = moments(g).m0
        m0_grid = grid_mass(g.opacity, g.center, cov)
        if abs(m0_grid - m0) / m0 > 1e-3:
            raise AssertionError("grid integration disagrees with moment formula")
    return "10 random Gaussians: m0 matches +-6 sigma grid integration"


def grid_mass(opacity: float, center, cov, points_per_sigma: float = 4.0) -> float:
    """Midpoint-rule integral of the splat density over a +-6 sigma box."""
    cov = np.asarray(cov)
    prec = np.linalg.inv(cov)
    sigmas = np.sqrt(np.diag(cov))
    sigma_min = math.sqrt(min(np.linalg.eigvalsh(cov)))
    axes = []
    steps = []
    for k in range(3):
        half = 6.0 * sigmas[k]
        count = max(24, int(math.ceil(2.0 * half * points_per_sigma / sigma_min)))
        edges = np.linspace(-half, half, count + 1)
        axes.append(center[k] + 0.5 * (edges[:-1] + edges[1:]))
        steps.append(edges[1] - edges[0])
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    d = np.stack([gx - center[0], gy - center[1], gz - center[2]], axis=-1)
    quad = np.einsum("...i,ij,...j->...", d, prec, d)
    cell = steps[0] * steps[1] * steps[2]
    return float(opacity * np.exp(-0.5 * quad).sum() * cell)


SUITES = (
    ("simplifier-equivalence", check_simplifier_equivalence),
    ("expand-roundtrip", check_roundtrip),
    ("mask-oracles", check_mask_oracles),
    ("quantization-roundtrip", check_quantization),
    ("metric-identities", check_metric_identities),
    ("moment-integration", check_moments),
)


def run_all(seed: int = 0) -> dict:
    results = []
    failures = 0
    for idx, (name, fn) in enumerate(SUITES):
        rng = np.random.default_rng(seed * 1009 + idx)
        start = time.perf_counter()
        try:
            detail = fn(rng)
            passed = True
        except AssertionError as exc:
            detail = str(exc)
            passed = False
            failures += 1
        results.append(
            {
                "name": name,
                "passed": passed,
                "detail": detail,
                "seconds": round(time.perf_counter() - start, 3),
            }
        )
    return {"seed": seed, "failures": failures, "checks": results}
