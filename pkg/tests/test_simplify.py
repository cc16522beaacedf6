import numpy as np
import pytest

from splatlod.errors import (
    InconsistentSequenceError,
    InsufficientPopulationError,
    InvalidTargetError,
)
from splatlod.gaussians import Gaussian3D, det_cov, moments
from splatlod.simplify import (
    GaussianSet,
    SimplifyConfig,
    expand,
    nearest_partner,
    simplify,
)

from conftest import make_gaussian, sequences_equal, sets_equal

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def point_gaussian(x, y=0.0, z=0.0, sigma=1.0):
    return Gaussian3D((x, y, z), 0.8, np.full(3, sigma), IDENTITY_Q, (0.1, 0.2, 0.3))


def random_setup(rng, n):
    return GaussianSet.from_gaussians(make_gaussian(rng) for _ in range(n))


class TestNearestPartner:
    def test_collinear_picks_closest(self):
        gset = GaussianSet.from_gaussians([point_gaussian(0.0), point_gaussian(1.0), point_gaussian(3.0)])
        assert nearest_partner(0, gset) == 1

    def test_tie_breaks_to_smaller_id(self):
        gset = GaussianSet()
        gset.add(point_gaussian(0.0), 0)
        gset.add(point_gaussian(1.0), 5)
        gset.add(point_gaussian(-1.0), 9)
        assert nearest_partner(0, gset) == 5

    def test_insufficient_population(self):
        gset = GaussianSet.from_gaussians([point_gaussian(0.0)])
        with pytest.raises(InsufficientPopulationError):
            nearest_partner(0, gset)

    def test_weighted_metric_matches_exhaustive_scan(self, rng):
        config = SimplifyConfig(beta=0.5)
        gset = random_setup(rng, 50)
        for subject in gset.active_ids():
            best = None
            su = gset.payload(subject).center
            for j, g in gset.active_gaussians():
                if j == subject:
                    continue
                d = float(np.linalg.norm(su - g.center)) / moments(g).m0**0.5
                if best is None or (d, j) < best:
                    best = (d, j)
            assert nearest_partner(subject, gset, config) == best[1]


class TestSimplify:
    def test_single_gaussian_empty_sequence(self):
        gset = GaussianSet.from_gaussians([point_gaussian(0.0)])
        seq = simplify(gset, 1)
        assert len(seq.records) == 0 and seq.source_count == 1

    def test_pair_single_record(self):
        gset = GaussianSet.from_gaussians([point_gaussian(0.0), point_gaussian(1.0)])
        seq = simplify(gset, 1)
        assert len(seq.records) == 1
        rec = seq.records[0]
        assert {rec.child1_id, rec.child2_id} == {0, 1}
        assert rec.parent_id == 2
        assert gset.active_ids() == [2]

    def test_invalid_targets(self, rng):
        gset = random_setup(rng, 4)
        with pytest.raises(InvalidTargetError):
            simplify(gset.clone(), 0)
        with pytest.raises(InvalidTargetError):
            simplify(gset.clone(), 5)

    def test_count_conservation(self, rng):
        gset = random_setup(rng, 40)
        seq = simplify(gset, 10)
        assert len(seq.records) == 30
        assert gset.active_count == 10

    def test_accelerated_matches_reference(self, rng):
        for n in (2, 17, 300):
            base = random_setup(rng, n)
            accel = simplify(base.clone(), 1, SimplifyConfig())
            ref = simplify(base.clone(), 1, SimplifyConfig(reference_scan=True))
            assert sequences_equal(accel, ref)

    def test_accelerated_matches_reference_weighted(self, rng):
        base = random_setup(rng, 120)
        accel = simplify(base.clone(), 1, SimplifyConfig(beta=0.7))
        ref = simplify(base.clone(), 1, SimplifyConfig(beta=0.7, reference_scan=True))
        assert sequences_equal(accel, ref)

    def test_partial_target_matches_reference(self, rng):
        base = random_setup(rng, 64)
        accel = simplify(base.clone(), 16, SimplifyConfig())
        ref = simplify(base.clone(), 16, SimplifyConfig(reference_scan=True))
        assert sequences_equal(accel, ref)

    def test_subject_is_always_min_det(self, rng):
        base = random_setup(rng, 60)
        work = base.clone()
        seq = simplify(work, 1)
        dets = {i: det_cov(base.payload(i)) for i in base.active_ids()}
        active = set(base.active_ids())
        for rec in seq.records:
            best = min((dets[i], i) for i in active)
            assert best == (dets[rec.child1_id], rec.child1_id)
            active.discard(rec.child1_id)
            active.discard(rec.child2_id)
            dets[rec.parent_id] = det_cov(rec.parent_payload)
            active.add(rec.parent_id)

    def test_determinism_across_runs(self, rng):
        base = random_setup(rng, 50)
        first = simplify(base.clone(), 1)
        second = simplify(base.clone(), 1)
        assert sequences_equal(first, second)


class TestExpand:
    def test_zero_steps_unchanged(self, rng):
        base = random_setup(rng, 10)
        work = base.clone()
        seq = simplify(work, 1)
        out = expand(work, seq, 0)
        assert sets_equal(out, work)

    def test_pair_roundtrip(self):
        base = GaussianSet.from_gaussians([point_gaussian(0.0), point_gaussian(1.0)])
        work = base.clone()
        seq = simplify(work, 1)
        assert sets_equal(expand(work, seq, 1), base)

    def test_full_roundtrip_bitwise(self, rng):
        base = random_setup(rng, 500)
        work = base.clone()
        seq = simplify(work, 1)
        assert sets_equal(expand(work, seq, len(seq.records)), base)

    def test_partial_expand_counts(self, rng):
        base = random_setup(rng, 30)
        work = base.clone()
        seq = simplify(work, 1)
        for steps in (0, 5, 29):
            assert expand(work, seq, steps).active_count == 1 + steps

    def test_inconsistent_sequence_detected(self, rng):
        base = random_setup(rng, 10)
        work = base.clone()
        seq = simplify(work, 1)
        restored = expand(work, seq, len(seq.records))
        # Fully expanded set no longer holds any parent id.
        with pytest.raises(InconsistentSequenceError):
            expand(restored, seq, 1)
