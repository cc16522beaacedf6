"""Progressive, reversible one-at-a-time Gaussian elimination.

Each step consumes the active Gaussian with the smallest covariance
determinant (ties by smaller id), merges it with its nearest partner under a
mass-weighted distance, and logs a MergeRecord holding full payload copies so
the whole process can be reversed exactly. Two interchangeable engines drive
the loop: an exhaustive-scan reference and a heap + kd-tree accelerated path
that must produce an identical record list.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InconsistentSequenceError,
    InsufficientPopulationError,
    InvalidTargetError,
    SplatLodError,
)
from .gaussians import Gaussian3D, det_cov, merge, moments
from .spatial import KDTree


class GaussianSet:
    """Ordered collection of Gaussians with stable integer ids and active
    flags. Payloads are immutable; ids are never reused."""

    def __init__(self) -> None:
        self._payloads: dict[int, Gaussian3D] = {}
        self._active: set[int] = set()
        self._next_id = 0

    @classmethod
    def from_gaussians(cls, gaussians) -> "GaussianSet":
        gset = cls()
        for g in gaussians:
            gset.add(g)
        return gset

    def add(self, g: Gaussian3D, ident: int | None = None) -> int:
        if ident is None:
            ident = self._next_id
        elif ident in self._active:
            raise SplatLodError(f"id {ident} is already active")
        self._payloads[ident] = g
        self._active.add(ident)
        self._next_id = max(self._next_id, ident + 1)
        return ident

    def deactivate(self, ident: int) -> None:
        if ident not in self._active:
            raise SplatLodError(f"id {ident} is not active")
        if len(self._active) == 1:
            raise SplatLodError("cannot deactivate the last active Gaussian")
        self._active.remove(ident)

    def payload(self, ident: int) -> Gaussian3D:
        return self._payloads[ident]

    def is_active(self, ident: int) -> bool:
        return ident in self._active

    def active_ids(self) -> list[int]:
        return sorted(self._active)

    def active_gaussians(self) -> list[tuple[int, Gaussian3D]]:
        return [(i, self._payloads[i]) for i in self.active_ids()]

    def all_payloads(self) -> list[Gaussian3D]:
        """Every payload ever added, active or not, in id order."""
        return [self._payloads[i] for i in sorted(self._payloads)]

    @property
    def active_count(self) -> int:
        return len(self._active)

    def clone(self) -> "GaussianSet":
        gset = GaussianSet()
        gset._payloads = dict(self._payloads)
        gset._active = set(self._active)
        gset._next_id = self._next_id
        return gset


@dataclass(frozen=True)
class MergeRecord:
    """One reversible merge step; payload copies make replay and undo exact."""

    step: int
    parent_id: int
    child1_id: int
    child2_id: int
    child1_payload: Gaussian3D
    child2_payload: Gaussian3D
    parent_payload: Gaussian3D


@dataclass(frozen=True)
class MergeSequence:
    records: tuple[MergeRecord, ...]
    source_count: int

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class SimplifyConfig:
    """beta weights partner distance by mass^beta (0 = plain euclidean);
    reference_scan selects the exhaustive O(n^2) engine."""

    beta: float = 0.0
    reference_scan: bool = False


def _partner_weight(g: Gaussian3D, beta: float) -> float:
    return float(moments(g).m0 ** beta)


def nearest_partner(subject_id: int, gset: GaussianSet, config: SimplifyConfig | None = None) -> int:
    """Active id != subject minimizing ||u_s - u_j|| / m0_j^beta, ties by id.

    Exhaustive reference scan; the accelerated engine must match it exactly.
    """
    config = config or SimplifyConfig()
    if not gset.is_active(subject_id):
        raise SplatLodError(f"subject {subject_id} is not active")
    if gset.active_count < 2:
        raise InsufficientPopulationError("need at least 2 active Gaussians")
    ids = []
    centers = []
    weights = []
    for i, g in gset.active_gaussians():
        if i == subject_id:
            continue
        ids.append(i)
        centers.append(g.center)
        weights.append(_partner_weight(g, config.beta))
    return _scan_nearest(
        gset.payload(subject_id).center,
        np.asarray(ids, dtype=np.int64),
        np.asarray(centers),
        np.asarray(weights),
    )


def _scan_nearest(subject_center, ids, centers, weights) -> int:
    sx, sy, sz = subject_center
    dx = sx - centers[:, 0]
    dy = sy - centers[:, 1]
    dz = sz - centers[:, 2]
    d = np.sqrt(dx * dx + dy * dy + dz * dz) / weights
    dmin = d.min()
    return int(ids[d == dmin].min())


class _ReferenceEngine:
    """Exhaustive scans for both subject selection and partner search."""

    def __init__(self, gset: GaussianSet, config: SimplifyConfig):
        n = gset.active_count
        cap = 2 * n
        self._ids = np.empty(cap, dtype=np.int64)
        self._centers = np.empty((cap, 3))
        self._weights = np.empty(cap)
        self._dets = np.empty(cap)
        self._alive = np.zeros(cap, dtype=bool)
        self._row_of: dict[int, int] = {}
        self._size = 0
        self._beta = config.beta
        for ident, g in gset.active_gaussians():
            self.insert(ident, g)

    def _grow(self) -> None:
        cap = 2 * len(self._ids)
        for name in ("_ids", "_centers", "_weights", "_dets", "_alive"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: old.shape[0]] = old
            setattr(self, name, new)

    def insert(self, ident: int, g: Gaussian3D) -> None:
        if self._size == len(self._ids):
            self._grow()
        row = self._size
        self._ids[row] = ident
        self._centers[row] = g.center
        self._weights[row] = _partner_weight(g, self._beta)
        self._dets[row] = det_cov(g)
        self._alive[row] = True
        self._row_of[ident] = row
        self._size += 1

    def remove(self, ident: int) -> None:
        self._alive[self._row_of.pop(ident)] = False

    def pop_subject(self) -> int:
        rows = np.flatnonzero(self._alive[: self._size])
        dets = self._dets[rows]
        candidates = rows[dets == dets.min()]
        return int(self._ids[candidates].min())

    def nearest(self, subject: int) -> int:
        rows = np.flatnonzero(self._alive[: self._size])
        rows = rows[rows != self._row_of[subject]]
        return _scan_nearest(
            self._centers[self._row_of[subject]],
            self._ids[rows],
            self._centers[rows],
            self._weights[rows],
        )


class _AcceleratedEngine:
    """Lazy-deletion determinant heap + kd-tree partner queries.

    Heap entries carry (det, id, version); ids are never re-keyed so the
    version only guards against hypothetical payload replacement, and popped
    entries whose id is no longer alive are discarded.
    """

    def __init__(self, gset: GaussianSet, config: SimplifyConfig):
        self._beta = config.beta
        self._heap: list[tuple[float, int, int]] = []
        self._version: dict[int, int] = {}
        self._alive: set[int] = set()
        points: dict[int, np.ndarray] = {}
        weights: dict[int, float] = {}
        for ident, g in gset.active_gaussians():
            points[ident] = g.center
            weights[ident] = _partner_weight(g, self._beta)
            self._push(ident, g)
        self._tree = KDTree(points, weights)

    def _push(self, ident: int, g: Gaussian3D) -> None:
        self._version[ident] = self._version.get(ident, -1) + 1
        self._alive.add(ident)
        heapq.heappush(self._heap, (det_cov(g), ident, self._version[ident]))

    def insert(self, ident: int, g: Gaussian3D) -> None:
        self._push(ident, g)
        self._tree.insert(ident, g.center, _partner_weight(g, self._beta))

    def remove(self, ident: int) -> None:
        self._alive.discard(ident)
        self._tree.remove(ident)
        if self._tree.needs_rebuild:
            self._tree.rebuild()

    def pop_subject(self) -> int:
        while self._heap:
            det, ident, version = self._heap[0]
            if ident in self._alive and self._version[ident] == version:
                return ident
            heapq.heappop(self._heap)
        raise InsufficientPopulationError("heap exhausted")

    def nearest(self, subject: int) -> int:
        return self._tree.nearest(subject)


def simplify(gset: GaussianSet, target_count: int, config: SimplifyConfig | None = None) -> MergeSequence:
    """Reduce the active set to target_count Gaussians, one merge at a time.

    Mutates gset: merged children are deactivated and each merged parent is
    added under a fresh id, so afterwards the set's actives are the roots of
    the returned sequence.
    """
    config = config or SimplifyConfig()
    n = gset.active_count
    if target_count < 1 or target_count > n:
        raise InvalidTargetError(f"target {target_count} outside [1, {n}]")
    engine_cls = _ReferenceEngine if config.reference_scan else _AcceleratedEngine
    engine = engine_cls(gset, config)
    records = []
    for step in range(n - target_count):
        subject = engine.pop_subject()
        partner = engine.nearest(subject)
        g1 = gset.payload(subject)
        g2 = gset.payload(partner)
        merged, _ = merge(g1, g2)
        parent = gset.add(merged)
        gset.deactivate(subject)
        gset.deactivate(partner)
        engine.remove(subject)
        engine.remove(partner)
        engine.insert(parent, merged)
        records.append(
            MergeRecord(
                step=step,
                parent_id=parent,
                child1_id=subject,
                child2_id=partner,
                child1_payload=g1,
                child2_payload=g2,
                parent_payload=merged,
            )
        )
    return MergeSequence(records=tuple(records), source_count=n)


def expand(roots: GaussianSet, seq: MergeSequence, steps: int) -> GaussianSet:
    """Undo the last `steps` merges: each parent is replaced by its two
    stored child payloads. With steps == len(seq) the original input set is
    reproduced bitwise (id-matched). Returns a new set."""
    if steps < 0 or steps > len(seq.records):
        raise InvalidTargetError(f"steps {steps} outside [0, {len(seq.records)}]")
    out = roots.clone()
    for rec in reversed(seq.records[len(seq.records) - steps :]):
        if not out.is_active(rec.parent_id):
            raise InconsistentSequenceError(f"parent id {rec.parent_id} is not active")
        out.add(rec.child1_payload, rec.child1_id)
        out.add(rec.child2_payload, rec.child2_id)
        out.deactivate(rec.parent_id)
    return out


def apply_sequence(gset: GaussianSet, seq: MergeSequence) -> GaussianSet:
    """Replay recorded merges forward on a freshly loaded source set, using
    the stored parent payloads (no re-merging). Returns a new set whose
    actives are the sequence's end state."""
    out = gset.clone()
    for rec in seq.records:
        if not (out.is_active(rec.child1_id) and out.is_active(rec.child2_id)):
            raise InconsistentSequenceError(
                f"record {rec.step} children {rec.child1_id},{rec.child2_id} not active"
            )
        out.add(rec.parent_payload, rec.parent_id)
        out.deactivate(rec.child1_id)
        out.deactivate(rec.child2_id)
    return out
