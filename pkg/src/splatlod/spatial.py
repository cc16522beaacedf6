"""kd-style spatial index over active Gaussian centers.

Supports weighted nearest-neighbor queries with the exact same selection rule
as an exhaustive scan: minimize (distance / weight, id) lexicographically.
Deletions are marked, inserts append to leaf buckets, and the simplifier
rebuilds the tree periodically. Pruning bounds carry a small relative slack so
floating-point rounding can never discard a candidate that the exhaustive
scan would have selected.
"""

import numpy as np

_LEAF_SIZE = 16
# Relative slack on subtree lower bounds; guards against a pruned tie.
_PRUNE_SLACK = 1e-9


class _Node:
    __slots__ = ("lo", "hi", "max_w", "axis", "split", "left", "right", "ids")

    def __init__(self):
        self.lo = None
        self.hi = None
        self.max_w = 0.0
        self.axis = -1
        self.split = 0.0
        self.left = None
        self.right = None
        self.ids = None  # leaf bucket (list of ids) or None for internal


class KDTree:
    """Exact nearest-partner index over points with per-point weights.

    points: dict id -> 3-vector; weights: dict id -> positive weight. The
    query metric is euclidean_distance / weight_of_candidate.
    """

    def __init__(self, points: dict[int, np.ndarray], weights: dict[int, float]):
        self._points = points
        self._weights = weights
        self._alive: set[int] = set(points.keys())
        self._removed_since_build = 0
        self._built_size = max(1, len(points))
        self.root = self._build(sorted(points.keys()))

    def _build(self, ids: list[int]) -> _Node:
        node = _Node()
        if not ids:
            node.ids = []
            node.lo = np.zeros(3)
            node.hi = np.zeros(3)
            return node
        pts = np.array([self._points[i] for i in ids])
        node.lo = pts.min(axis=0)
        node.hi = pts.max(axis=0)
        node.max_w = max(self._weights[i] for i in ids)
        if len(ids) <= _LEAF_SIZE:
            node.ids = list(ids)
            return node
        axis = int(np.argmax(node.hi - node.lo))
        order = sorted(ids, key=lambda i: (self._points[i][axis], i))
        mid = len(order) // 2
        node.axis = axis
        node.split = self._points[order[mid]][axis]
        node.left = self._build(order[:mid])
        node.right = self._build(order[mid:])
        return node

    @property
    def needs_rebuild(self) -> bool:
        return self._removed_since_build > max(8, self._built_size // 4)

    def rebuild(self) -> None:
        self._removed_since_build = 0
        self._built_size = max(1, len(self._alive))
        self.root = self._build(sorted(self._alive))

    def insert(self, ident: int, point: np.ndarray, weight: float) -> None:
        self._points[ident] = point
        self._weights[ident] = weight
        self._alive.add(ident)
        node = self.root
        while True:
            node.lo = np.minimum(node.lo, point)
            node.hi = np.maximum(node.hi, point)
            node.max_w = max(node.max_w, weight)
            if node.ids is not None:
                node.ids.append(ident)
                return
            node = node.left if point[node.axis] < node.split else node.right

    def remove(self, ident: int) -> None:
        # Marked only; bounding boxes stay valid (loose) until a rebuild.
        self._alive.discard(ident)
        self._removed_since_build += 1

    def nearest(self, subject: int) -> int:
        """Active id != subject minimizing (||u_s - u_j|| / w_j, j)."""
        sp = self._points[subject]
        sx, sy, sz = float(sp[0]), float(sp[1]), float(sp[2])
        best_d = np.inf
        best_id = -1
        alive = self._alive
        points = self._points
        weights = self._weights

        def visit(node: _Node) -> None:
            nonlocal best_d, best_id
            if node.ids is not None:
                for j in node.ids:
                    if j == subject or j not in alive:
                        continue
                    p = points[j]
                    dx = sx - p[0]
                    dy = sy - p[1]
                    dz = sz - p[2]
                    d = np.sqrt(dx * dx + dy * dy + dz * dz) / weights[j]
                    if d < best_d or (d == best_d and j < best_id):
                        best_d = d
                        best_id = j
                return
            children = (node.left, node.right)
            bounds = [_box_lower_bound(c, sx, sy, sz) for c in children]
            order = (0, 1) if bounds[0] <= bounds[1] else (1, 0)
            for k in order:
                if bounds[k] <= best_d * (1.0 + _PRUNE_SLACK):
                    visit(children[k])

        if _box_lower_bound(self.root, sx, sy, sz) <= best_d:
            visit(self.root)
        return best_id


def _box_lower_bound(node: _Node, sx: float, sy: float, sz: float) -> float:
    """Lower bound of the weighted distance to any point under node."""
    if node.max_w <= 0.0:
        return np.inf
    dx = max(node.lo[0] - sx, 0.0, sx - node.hi[0])
    dy = max(node.lo[1] - sy, 0.0, sy - node.hi[1])
    dz = max(node.lo[2] - sz, 0.0, sz - node.hi[2])
    return np.sqrt(dx * dx + dy * dy + dz * dz) / node.max_w
