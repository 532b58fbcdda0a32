"""Directed k-nearest-neighbor graphs on point clouds.

Two builders are provided. ``build_knn_graph_brute`` enumerates all
pairwise distances and is the reference. ``build_knn_graph_indexed`` uses a
kd-tree to find candidates and then re-ranks them with exactly the same
arithmetic as the brute builder, so both return identical adjacency.

Ties in distance are broken by the smaller vertex index. The out-degree is
``min(k, L - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache, cached_property

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import betainc

from .errors import DegenerateInputError, ValidationError

__all__ = [
    "PointCloud",
    "DirectedKnnGraph",
    "as_cloud",
    "build_knn_graph",
    "build_knn_graph_brute",
    "build_knn_graph_indexed",
    "max_in_degree",
    "cone_covering_constant",
]

# brute-force rows processed per block; bounds memory at BLOCK * L * d floats
_BLOCK = 256


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of points in R^d, stored as an ``(L, d)`` float array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValidationError(f"points must have shape (L, d); got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


def as_cloud(points) -> PointCloud:
    if isinstance(points, PointCloud):
        return points
    return PointCloud(np.asarray(points, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class DirectedKnnGraph:
    """k-NN digraph with a rectangular out-neighbor table.

    ``out_neighbors[v]`` lists the ``min(k, L-1)`` nearest other vertices of
    ``v`` in increasing distance. The in-neighbor index is derived lazily in
    CSR form (``in_indptr``, ``in_indices``).
    """

    k: int
    out_neighbors: np.ndarray

    def __post_init__(self):
        nbrs = np.ascontiguousarray(self.out_neighbors, dtype=np.intp)
        nbrs.setflags(write=False)
        object.__setattr__(self, "out_neighbors", nbrs)

    @property
    def n_vertices(self) -> int:
        return self.out_neighbors.shape[0]

    @property
    def out_degree(self) -> int:
        return self.out_neighbors.shape[1]

    @property
    def n_edges(self) -> int:
        return self.out_neighbors.size

    @cached_property
    def tails(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_vertices), self.out_degree)

    @cached_property
    def heads(self) -> np.ndarray:
        return self.out_neighbors.ravel()

    def edges(self) -> np.ndarray:
        """All edges as an ``(E, 2)`` array of (tail, head)."""
        return np.column_stack([self.tails, self.heads])

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.bincount(self.heads, minlength=self.n_vertices)

    @cached_property
    def _in_csr(self):
        order = np.argsort(self.heads, kind="stable")
        indptr = np.zeros(self.n_vertices + 1, dtype=np.intp)
        np.cumsum(self.in_degree, out=indptr[1:])
        return indptr, self.tails[order]

    @property
    def in_indptr(self) -> np.ndarray:
        return self._in_csr[0]

    @property
    def in_indices(self) -> np.ndarray:
        return self._in_csr[1]

    def in_neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self._in_csr
        return indices[indptr[v]:indptr[v + 1]]

    def permuted(self, perm) -> "DirectedKnnGraph":
        """Graph after moving vertex ``i`` to position ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.intp)
        new = np.empty_like(self.out_neighbors)
        new[perm] = perm[self.out_neighbors]
        return DirectedKnnGraph(self.k, new)


def _check(cloud: PointCloud, k: int) -> int:
    if int(k) != k or k < 1:
        raise ValidationError(f"k must be a positive integer; got {k!r}")
    if len(cloud) < 2:
        raise DegenerateInputError("k-NN graph needs at least 2 points")
    return min(int(k), len(cloud) - 1)


def _sq_dist(points: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    # rows: (m,), cols: (m, c) -> (m, c); every builder goes through here
    diff = points[cols] - points[rows][:, None, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _rank(rows: np.ndarray, cand: np.ndarray, d2: np.ndarray, kk: int) -> np.ndarray:
    d2 = np.where(cand == rows[:, None], np.inf, d2)
    # primary key distance, ties broken by smaller index
    order = np.lexsort((cand, d2), axis=1)[:, :kk]
    return np.take_along_axis(cand, order, axis=1)


def build_knn_graph_brute(cloud, k: int) -> DirectedKnnGraph:
    """Exact k-NN digraph by exhaustive pairwise distances, O(L^2 d)."""
    cloud = as_cloud(cloud)
    kk = _check(cloud, k)
    pts = cloud.points
    L = len(cloud)
    everyone = np.arange(L)
    out = np.empty((L, kk), dtype=np.intp)
    for start in range(0, L, _BLOCK):
        rows = everyone[start:start + _BLOCK]
        cand = np.broadcast_to(everyone, (rows.size, L))
        d2 = _sq_dist(pts, rows, cand)
        out[rows] = _rank(rows, cand, d2, kk)
    return DirectedKnnGraph(int(k), out)


def build_knn_graph_indexed(cloud, k: int) -> DirectedKnnGraph:
    """k-NN digraph via a kd-tree; adjacency identical to the brute builder.

    The tree supplies a few more candidates than needed. Candidates are then
    re-ranked by exact squared distance and index. Rows whose last candidate
    is not strictly farther than the k-th neighbor could be hiding a tie and
    are re-queried with a wider candidate set.
    """
    cloud = as_cloud(cloud)
    kk = _check(cloud, k)
    pts = cloud.points
    L = len(cloud)
    tree = cKDTree(pts)
    out = np.empty((L, kk), dtype=np.intp)
    pending = np.arange(L)
    extra = 2
    while pending.size:
        m = min(kk + extra, L)
        block = max(1, (1 << 22) // (m * cloud.dim))
        retry = []
        for start in range(0, pending.size, block):
            rows = pending[start:start + block]
            dist, cand = tree.query(pts[rows], k=m)
            cand = np.asarray(cand, dtype=np.intp).reshape(rows.size, m)
            dist = np.asarray(dist).reshape(rows.size, m)
            ranked = _rank(rows, cand, _sq_dist(pts, rows, cand), kk)
            out[rows] = ranked
            if m < L:
                kth = np.sqrt(_sq_dist(pts, rows, ranked[:, -1:])[:, 0])
                retry.append(rows[dist[:, -1] <= kth * (1 + 1e-9)])
        pending = np.concatenate(retry) if retry else pending[:0]
        extra *= 4
    return DirectedKnnGraph(int(k), out)


def build_knn_graph(cloud, k: int) -> DirectedKnnGraph:
    """Default builder (kd-tree backed)."""
    return build_knn_graph_indexed(cloud, k)


def max_in_degree(graph: DirectedKnnGraph) -> int:
    return int(graph.in_degree.max(initial=0))


@lru_cache(maxsize=None)
def cone_covering_constant(d: int) -> int:
    """Upper bound on the number of cones of half-angle pi/6 covering R^d.

    Any point of a finite set is among the k nearest neighbors of at most
    ``cone_covering_constant(d) * k`` other points. For d = 1 and d = 2 the
    exact counts (2 and 6) are used. For d >= 3 the bound comes from a
    maximal pi/6-separated set on the sphere: caps of angular radius pi/12
    around its points are disjoint, so its size is at most the inverse of
    the normalized area of one such cap.
    """
    if d < 1:
        raise ValidationError("dimension must be positive")
    if d == 1:
        return 2
    if d == 2:
        return 6
    phi = math.pi / 12
    cap_fraction = 0.5 * betainc((d - 1) / 2, 0.5, math.sin(phi) ** 2)
    return int(math.floor(1.0 / cap_fraction))
