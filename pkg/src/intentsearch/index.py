"""Exact k-nearest-neighbor retrieval over unit vectors.

Cosine ranking on the unit sphere equals Euclidean ranking, so the ball tree
prunes with Euclidean ball bounds while reporting cosine distances.

Reported distances come from one scalar float64 rescoring helper in both the
tree and the brute-force scan; batched float32 matrix products only preselect
candidates (with a rounding margin), never decide them. BLAS kernels round
differently for different matrix shapes, so sharing the scalar path is what
makes the two implementations agree bit-for-bit, ties included.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateId, ZeroVector
from .model import UnitVector

DEFAULT_LEAF_SIZE = 32

UNIT_NORM_TOL = 1e-6

_EPS32 = float(np.finfo(np.float32).eps)


def _float32_margin(dim: int) -> float:
    """Upper bound on float32 dot error for unit vectors, plus bound rounding.

    Pruning and candidate preselection subtract this slack so they only ever
    err on the inclusive side; the scalar float64 rescore decides the rest.
    """
    return 1.2 * dim * _EPS32 + 1e-6


@dataclass(frozen=True)
class Neighbor:
    """One retrieval hit: cosine distance in [0, 2], ties broken by id."""

    id: str
    distance: float


def normalize(v: Sequence[float] | np.ndarray) -> UnitVector:
    """Scale ``v`` to unit length; already-unit float32 input passes through."""
    arr = np.asarray(v, dtype=np.float32)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {arr.shape}")
    norm = float(np.linalg.norm(arr.astype(np.float64)))
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    if abs(norm - 1.0) <= UNIT_NORM_TOL:
        return arr.copy()
    return (arr.astype(np.float64) / norm).astype(np.float32)


def cosine_distance(u: UnitVector, v: UnitVector) -> float:
    """1 - u.v for unit vectors, clamped to [0, 2] against rounding."""
    if u.shape != v.shape:
        raise DimensionMismatch(f"dim {u.shape} vs {v.shape}")
    d = 1.0 - float(np.dot(u.astype(np.float64), v.astype(np.float64)))
    return min(2.0, max(0.0, d))


def _approx_distances(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Batched float32 cosine distances, good to ~_FLOAT32_MARGIN; filter only."""
    sims = points @ q
    sims *= -1.0
    sims += 1.0
    return sims


def _exact_distance(vec64: np.ndarray, q64: np.ndarray) -> float:
    """The one scalar distance used for final results everywhere."""
    d = 1.0 - float(np.dot(vec64, q64))
    return min(2.0, max(0.0, d))


class BallTreeIndex:
    """Immutable exact-kNN index built by max-spread median splits."""

    def __init__(self, points: np.ndarray, ids: list[str], leaf_size: int):
        self._points = points
        self._ids = ids
        self.leaf_size = leaf_size
        n = len(ids)
        self._centers: list[np.ndarray] = []
        self._radii: list[float] = []
        self._ranges: list[tuple[int, int]] = []
        self._children: list[tuple[int, int]] = []  # (-1, -1) marks a leaf
        if n:
            order = np.arange(n)
            self._build_node(order, 0, n)
            self._points = points[order]
            self._points64 = self._points.astype(np.float64)
            self._ids = [ids[i] for i in order]
            self._margin = _float32_margin(points.shape[1])
            # dense per-leaf ball arrays: a query bounds every leaf ball in one
            # matrix op (float32 suffices; bounds only gate, with the margin)
            leaf_nodes = [i for i, ch in enumerate(self._children) if ch[0] < 0]
            centers = np.vstack([self._centers[i] for i in leaf_nodes])
            self._leaf_centers32 = centers.astype(np.float32)
            self._leaf_sqnorm_plus_one32 = (
                1.0 + np.einsum("ij,ij->i", centers, centers)
            ).astype(np.float32)
            self._leaf_radii32 = np.asarray(
                [self._radii[i] for i in leaf_nodes], dtype=np.float32
            )
            self._leaf_lo = [self._ranges[i][0] for i in leaf_nodes]
            self._leaf_hi = [self._ranges[i][1] for i in leaf_nodes]

    # -- construction -----------------------------------------------------

    @classmethod
    def build(
        cls,
        records: Iterable[tuple[str, UnitVector]],
        leaf_size: int = DEFAULT_LEAF_SIZE,
    ) -> "BallTreeIndex":
        records = list(records)
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        ids = [rid for rid, _ in records]
        if len(set(ids)) != len(ids):
            seen: set[str] = set()
            for rid in ids:
                if rid in seen:
                    raise DuplicateId(f"duplicate record id {rid!r}")
                seen.add(rid)
        if not records:
            return cls(np.zeros((0, 0), dtype=np.float32), [], leaf_size)
        dim = len(records[0][1])
        for rid, vec in records:
            if len(vec) != dim:
                raise DimensionMismatch(f"record {rid!r} has dim {len(vec)}, expected {dim}")
        points = np.stack([np.asarray(v, dtype=np.float32) for _, v in records])
        return cls(points, ids, leaf_size)

    def _build_node(self, order: np.ndarray, lo: int, hi: int) -> int:
        pts = self._points[order[lo:hi]].astype(np.float64)
        center = pts.mean(axis=0)
        radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1).max()))
        node = len(self._centers)
        self._centers.append(center)
        self._radii.append(radius)
        self._ranges.append((lo, hi))
        self._children.append((-1, -1))
        if hi - lo > self.leaf_size:
            spread = pts.max(axis=0) - pts.min(axis=0)
            dim = int(np.argmax(spread))
            local = np.argsort(pts[:, dim], kind="stable")
            order[lo:hi] = order[lo:hi][local]
            mid = lo + (hi - lo) // 2
            left = self._build_node(order, lo, mid)
            right = self._build_node(order, mid, hi)
            self._children[node] = (left, right)
        return node

    # -- queries -----------------------------------------------------------

    @property
    def count(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int:
        return self._points.shape[1] if self.count else 0

    def iter_nodes(self) -> Iterator[tuple[np.ndarray, float, list[str]]]:
        """(centroid, radius, member ids) for every node, for diagnostics."""
        for node, (lo, hi) in enumerate(self._ranges):
            yield self._centers[node], self._radii[node], self._ids[lo:hi]

    def _leaf_lower_bounds(self, q32: np.ndarray) -> np.ndarray:
        """Cosine-distance lower bound per leaf ball: max(0, |q-c| - r)^2 / 2."""
        gap = self._leaf_centers32 @ q32
        gap *= -2.0
        gap += self._leaf_sqnorm_plus_one32
        np.maximum(gap, 0.0, out=gap)
        np.sqrt(gap, out=gap)
        gap -= self._leaf_radii32
        np.maximum(gap, 0.0, out=gap)
        gap *= gap
        gap *= 0.5
        return gap

    def knn(self, q: UnitVector, k: int) -> list[Neighbor]:
        """The true k nearest by cosine distance, ties ascending by id.

        Leaf balls are scanned best-first by their lower bound; the scan stops
        once the next bound exceeds the running k-th distance plus the float32
        margin. Survivors get one exact float64 rescore at the end.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if self.count == 0:
            return []
        q = np.asarray(q, dtype=np.float32)
        if q.shape != (self.dim,):
            raise DimensionMismatch(f"query dim {q.shape} vs index dim {self.dim}")
        q64 = q.astype(np.float64)
        bounds = self._leaf_lower_bounds(q)
        points = self._points
        leaf_lo, leaf_hi = self._leaf_lo, self._leaf_hi
        two_margin = 2.0 * self._margin
        n_leaves = len(leaf_lo)

        # pool of (approx distance, row) kept sorted; exact rescore at the end
        pool: list[tuple[float, int]] = []
        state = {"cutoff": np.inf, "floor": -np.inf}  # d <= cutoff as sim >= floor

        def scan(positions: list[int], position_bounds: list[float]) -> bool:
            """Visit leaves in ascending-bound order; True once the bound rule stops."""
            cutoff, sim_floor = state["cutoff"], state["floor"]
            for pos, bound in zip(positions, position_bounds):
                if bound > cutoff:
                    state["cutoff"], state["floor"] = cutoff, sim_floor
                    return True
                lo = leaf_lo[pos]
                sims = points[lo : leaf_hi[pos]] @ q
                keep = (sims >= sim_floor).nonzero()[0]
                if keep.size:
                    for item in zip((1.0 - sims[keep]).tolist(), (keep + lo).tolist()):
                        insort(pool, item)
                    if len(pool) >= k:
                        cutoff = pool[k - 1][0] + two_margin
                        sim_floor = 1.0 - cutoff
                        while pool[-1][0] > cutoff:
                            pool.pop()
            state["cutoff"], state["floor"] = cutoff, sim_floor
            return False

        # best-first in two stages: a small partitioned batch almost always
        # settles the scan; otherwise only leaves still under the cutoff rerun
        batch = min(n_leaves, max(4, (2 * k) // max(1, self.leaf_size) + 2))
        if batch < n_leaves:
            part = np.argpartition(bounds, batch - 1)[:batch]
            first = part[np.argsort(bounds[part], kind="stable")]
        else:
            first = np.argsort(bounds, kind="stable")
        stopped = scan(first.tolist(), bounds[first].tolist())

        if not stopped and batch < n_leaves:
            visited = set(first.tolist())
            if state["cutoff"] < np.inf:
                rest = np.flatnonzero(bounds <= state["cutoff"])
            else:
                rest = np.arange(n_leaves)
            rest = rest[np.argsort(bounds[rest], kind="stable")]
            seq = [p for p in rest.tolist() if p not in visited]
            scan(seq, [float(bounds[p]) for p in seq])

        points64 = self._points64
        ids = self._ids
        scored = sorted((_exact_distance(points64[row], q64), ids[row]) for _, row in pool)
        return [Neighbor(id=rid, distance=d) for d, rid in scored[:k]]


def brute_force_knn(
    records: Sequence[tuple[str, UnitVector]],
    q: UnitVector,
    k: int,
    points: Optional[np.ndarray] = None,
) -> list[Neighbor]:
    """Full-scan oracle with the same distance math and tie rules as knn.

    ``points`` may carry the records' vectors pre-stacked (row i = record i)
    to keep repeated scans from re-building the matrix; results are identical.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not records:
        return []
    q = np.asarray(q, dtype=np.float32)
    dim = len(records[0][1])
    if q.shape != (dim,):
        raise DimensionMismatch(f"query dim {q.shape} vs records dim {dim}")
    if points is None:
        points = np.stack([np.asarray(v, dtype=np.float32) for _, v in records])
    if points.shape != (len(records), dim):
        raise DimensionMismatch("points matrix does not match the records")
    approx = _approx_distances(points, q)
    n = len(records)
    if n > k:
        kth = float(np.partition(approx, k - 1)[k - 1])
        cand = np.flatnonzero(approx <= kth + _float32_margin(dim))
    else:
        cand = np.arange(n)
    q64 = q.astype(np.float64)
    scored = sorted(
        (_exact_distance(points[i].astype(np.float64), q64), records[i][0]) for i in cand
    )
    return [Neighbor(id=rid, distance=d) for d, rid in scored[:k]]
