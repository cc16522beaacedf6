import numpy as np
import pytest

from splatlod.gaussians import Gaussian3D
from splatlod.hierarchy import HierarchyTree, build_tree
from splatlod.simplify import GaussianSet, simplify
from splatlod.tokens import (
    NUM_ATTRIBUTES,
    QuantSpec,
    fit_quant_spec,
    dequantize,
    gaussian_attributes,
    quantize,
    quantize_values,
    range_clamp_counter,
    tokenize_tree,
    tree_token_order,
)

from conftest import make_gaussian

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def leaf(x):
    return Gaussian3D((x, 0, 0), 0.7, (1, 1, 1), IDENTITY_Q, (0.2, 0.4, 0.6))


def corpus(rng, n):
    return GaussianSet.from_gaussians(make_gaussian(rng) for _ in range(n))


def wide_spec():
    mins = np.array([0.0] + [-8.0] * (NUM_ATTRIBUTES - 1))
    maxs = np.array([256.0] + [8.0] * (NUM_ATTRIBUTES - 1))
    mins[6:10] = -1.0
    maxs[6:10] = 1.0
    mins[10] = 0.0
    maxs[10] = 1.0
    log_scale = tuple(a in (3, 4, 5) for a in range(NUM_ATTRIBUTES))
    return QuantSpec(mins=mins, maxs=maxs, log_scale=log_scale, widened=(False,) * NUM_ATTRIBUTES)


class TestFitQuantSpec:
    def test_single_gaussian_widens_degenerate_ranges(self, rng):
        g = make_gaussian(rng)
        spec = fit_quant_spec(GaussianSet.from_gaussians([g]))
        # centers, scales, and DC collapse to a point and get widened
        for a in (0, 1, 2, 3, 4, 5, 11, 12, 13):
            assert spec.widened[a]
            assert spec.maxs[a] - spec.mins[a] == pytest.approx(1e-6, rel=1e-6)
        # fixed ranges are never widened
        for a in (6, 7, 8, 9, 10):
            assert not spec.widened[a]

    def test_two_point_center_range(self):
        gset = GaussianSet.from_gaussians([leaf(0.0), leaf(1.0)])
        spec = fit_quant_spec(gset)
        assert spec.mins[0] == 0.0 and spec.maxs[0] == 1.0

    def test_fixed_quaternion_and_opacity_ranges(self, rng):
        spec = fit_quant_spec(corpus(rng, 20))
        for a in (6, 7, 8, 9):
            assert (spec.mins[a], spec.maxs[a]) == (-1.0, 1.0)
        assert (spec.mins[10], spec.maxs[10]) == (0.0, 1.0)

    def test_matches_exhaustive_scan(self, rng):
        gset = corpus(rng, 64)
        spec = fit_quant_spec(gset)
        rows = np.array([gaussian_attributes(g) for g in gset.all_payloads()])
        rows[:, 3:6] = np.log(rows[:, 3:6])
        for a in (0, 1, 2, 3, 4, 5, 11, 12, 13):
            assert spec.mins[a] == rows[:, a].min()
            assert spec.maxs[a] == rows[:, a].max()


class TestQuantize:
    def test_min_maps_to_zero_and_max_to_last_bin(self, rng):
        spec = fit_quant_spec(corpus(rng, 16))
        values = spec.mins.copy()
        values[3:6] = np.exp(values[3:6])
        assert np.all(quantize_values(values, spec) == 0)
        values = spec.maxs.copy()
        values[3:6] = np.exp(values[3:6])
        assert np.all(quantize_values(values, spec) == 255)

    def test_roundtrip_within_half_bin(self, rng):
        spec = wide_spec()
        spans = spec.maxs - spec.mins
        log_raw = spec.mins + rng.uniform(0, 1, size=(10_000, NUM_ATTRIBUTES)) * spans
        for row in log_raw:
            values = row.copy()
            values[3:6] = np.exp(values[3:6])
            bins = quantize_values(values, spec)
            centers = spec.mins + (bins + 0.5) * spans / 256.0
            assert np.all(np.abs(centers - row) <= spans / 512.0 + 1e-12)

    def test_out_of_range_clamps_are_counted(self, rng):
        spec = wide_spec()
        range_clamp_counter.reset()
        values = np.zeros(NUM_ATTRIBUTES)
        values[0] = 300.0  # above max
        values[3:6] = 1.0
        values[6] = 1.0
        values[10] = 0.5
        bins = quantize_values(values, spec)
        assert bins[0] == 255
        assert range_clamp_counter.count == 1

    def test_quaternion_negation_invariance(self, rng):
        spec = wide_spec()
        for _ in range(50):
            g = make_gaussian(rng)
            flipped = Gaussian3D(g.center, g.opacity, g.scale, -g.rotation, g.features)
            assert np.array_equal(quantize(g, spec), quantize(flipped, spec))


class TestDequantize:
    def test_bin_zero_center(self):
        spec = wide_spec()
        bins = np.zeros(NUM_ATTRIBUTES, dtype=np.uint8)
        bins[6] = 255  # keep quaternion valid (w near 1)
        g = dequantize(bins, spec)
        assert g.center[0] == pytest.approx(0.5)

    def test_fixed_point_on_bins(self, rng):
        from splatlod.tokens import bin_centers, codebook_bins

        spec = wide_spec()
        for _ in range(200):
            bins = rng.integers(0, 256, size=NUM_ATTRIBUTES).astype(np.uint8)
            assert np.array_equal(codebook_bins(bin_centers(bins, spec), spec), bins)
            # the Gaussian path reproduces every non-quaternion bin; the
            # quaternion is renormalized so its components shift off-center
            g = dequantize(bins, spec)
            requant = quantize(g, spec)
            for a in (0, 1, 2, 3, 4, 5, 10, 11, 12, 13):
                assert requant[a] == bins[a]

    def test_quaternion_renormalized(self, rng):
        spec = wide_spec()
        for _ in range(200):
            bins = rng.integers(0, 256, size=NUM_ATTRIBUTES).astype(np.uint8)
            g = dequantize(bins, spec)
            assert abs(np.linalg.norm(g.rotation) - 1.0) <= 1e-9


class TestTokenizeTree:
    def test_single_node(self, rng):
        g = make_gaussian(rng)
        tree = HierarchyTree.single(g)
        tokens = tokenize_tree(tree, fit_quant_spec(GaussianSet.from_gaussians([g])))
        assert len(tokens) == 1
        assert not tokens[0].splittable
        assert tokens[0].level == 0 and tokens[0].parent_id is None

    def test_three_node_order(self):
        gset = GaussianSet.from_gaussians([leaf(0.0), leaf(1.0)])
        seq = simplify(gset, 1)
        tree = build_tree(seq)
        tokens = tokenize_tree(tree, fit_quant_spec(gset))
        assert [t.node_id for t in tokens] == [2, 0, 1]
        assert tokens[0].splittable and not tokens[1].splittable

    def test_order_matches_bfs_oracle(self, rng):
        for n in (3, 10, 40):
            gset = corpus(rng, n)
            tree = build_tree(simplify(gset, 1))
            got = tree_token_order(tree)
            # oracle: explicit sort by (parent sequence position, child index)
            order = [tree.root_id]
            current = [tree.root_id]
            while True:
                pos = {v: i for i, v in enumerate(order)}
                keyed = []
                for v in current:
                    children = tree.nodes[v].children
                    if children:
                        for idx, c in enumerate(children):
                            keyed.append((pos[v], idx, c))
                if not keyed:
                    break
                keyed.sort()
                current = [c for _, _, c in keyed]
                order += current
            assert got == order

    def test_one_token_per_node(self, rng):
        gset = corpus(rng, 25)
        tree = build_tree(simplify(gset, 1))
        tokens = tokenize_tree(tree, fit_quant_spec(gset))
        assert len(tokens) == len(tree.nodes)
        assert {t.node_id for t in tokens} == set(tree.nodes)
        for t in tokens:
            assert t.splittable == (tree.nodes[t.node_id].children is not None)

    def test_dequantized_leaves_within_half_bin(self, rng):
        gset = corpus(rng, 16)
        base = gset.clone()
        tree = build_tree(simplify(gset, 1))
        spec = fit_quant_spec(_all_nodes_set(tree))
        tokens = {t.node_id: t for t in tokenize_tree(tree, spec)}
        spans = spec.maxs - spec.mins
        for ident in base.active_ids():
            exact = gaussian_attributes(base.payload(ident))
            exact[3:6] = np.log(exact[3:6])
            approx = gaussian_attributes(dequantize(tokens[ident].bins, spec))
            approx[3:6] = np.log(approx[3:6])
            # quaternion components shift under renormalization; skip them
            for a in (0, 1, 2, 3, 4, 5, 10, 11, 12, 13):
                assert abs(approx[a] - exact[a]) <= spans[a] / 512.0 + 1e-9


def _all_nodes_set(tree):
    return GaussianSet.from_gaussians(tree.nodes[i].payload for i in sorted(tree.nodes))
