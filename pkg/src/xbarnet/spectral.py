"""Spectral clustering of a similarity graph.

Pipeline: degree matrix, symmetric normalized Laplacian
L = I - D^{-1/2} S D^{-1/2}, eigendecomposition, the K eigenvectors of the
smallest eigenvalues, row normalization, then seeded k-means on the embedded
rows. Connectivity matrices enter as bipartite graphs: the m input neurons and
n output neurons are the nodes, each synapse an edge, so one cluster yields a
row group and a column group jointly.

Determinism: all randomness flows from the seed argument; a fixed seed gives
bit-stable assignments, and k-means is invariant to the ordering of its input
points (up to label renaming) via an internal canonical sort.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connectivity import ConnectivityMatrix

SYMMETRY_TOL = 1e-8
KMEANS_TOL = 1e-8
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric non-negative affinity matrix with a zero diagonal."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.size == 0:
            raise ValueError(f"similarity matrix must be square and non-empty, got {v.shape}")
        if np.abs(v - v.T).max() > 1e-12:
            raise ValueError("similarity matrix must be symmetric within 1e-12")
        if v.min() < 0:
            raise ValueError("similarity entries must be non-negative")
        if np.abs(np.diag(v)).max() != 0:
            raise ValueError("similarity diagonal must be exactly zero")
        v = (v + v.T) / 2.0
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SpectralEmbedding:
    """K smallest eigenpairs of a symmetric matrix, eigenvalues ascending."""

    vectors: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=np.float64)
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if np.any(np.diff(vals) < -1e-12):
            raise ValueError("eigenvalues must be ascending")
        if vecs.shape[1] != vals.shape[0]:
            raise ValueError("one eigenvector column per eigenvalue required")
        vals.flags.writeable = False
        vecs.flags.writeable = False
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "vectors", vecs)


@dataclass(frozen=True)
class LaplacianResult:
    """Normalized Laplacian plus the isolated (degree-zero) node indices."""

    matrix: np.ndarray
    isolated: np.ndarray


@dataclass(frozen=True)
class NodeGroups:
    """spectral_cluster output: k node groups plus the isolated-node group."""

    groups: tuple[np.ndarray, ...]
    isolated: np.ndarray


def build_similarity(c: ConnectivityMatrix) -> SimilarityMatrix:
    """Bipartite adjacency of size (m+n): S(i, m+j) = S(m+j, i) = C(i, j)."""
    m, n = c.rows, c.cols
    s = np.zeros((m + n, m + n), dtype=np.float64)
    s[:m, m:] = c.bits
    s[m:, :m] = c.bits.T
    return SimilarityMatrix(s)


def degree_matrix(s: SimilarityMatrix) -> np.ndarray:
    """Diagonal matrix of row sums."""
    return np.diag(s.values.sum(axis=1))


def normalized_laplacian(s: SimilarityMatrix) -> LaplacianResult:
    """L = I - D^{-1/2} S D^{-1/2}; isolated nodes take D^{-1/2}(i,i) = 0.

    With the zero convention an isolated node contributes an identity row, so
    an empty graph maps to L = I. Isolated node ids are reported alongside.
    """
    degrees = s.values.sum(axis=1)
    isolated = np.flatnonzero(degrees == 0)
    inv_sqrt = np.zeros_like(degrees)
    live = degrees > 0
    inv_sqrt[live] = 1.0 / np.sqrt(degrees[live])
    lap = np.eye(s.size) - (inv_sqrt[:, None] * s.values) * inv_sqrt[None, :]
    lap = (lap + lap.T) / 2.0
    return LaplacianResult(matrix=lap, isolated=isolated)


def eig_smallest(l: np.ndarray, k: int) -> SpectralEmbedding:
    """The k algebraically smallest eigenvalues and orthonormal eigenvectors.

    The input must be symmetric within tolerance. Backed by the dense
    symmetric solver (LAPACK); residuals ||Lv - lambda v|| land near machine
    precision, well inside the 1e-8 * ||L|| contract.
    """
    l = np.asarray(l, dtype=np.float64)
    if l.ndim != 2 or l.shape[0] != l.shape[1]:
        raise ValueError(f"expected a square matrix, got {l.shape}")
    if not 1 <= k <= l.shape[0]:
        raise ValueError(f"k={k} out of range for size {l.shape[0]}")
    asym = np.abs(l - l.T).max()
    scale = max(1.0, np.abs(l).max())
    if asym > SYMMETRY_TOL * scale:
        raise ValueError(f"matrix asymmetry {asym:.3e} beyond tolerance")
    vals, vecs = np.linalg.eigh((l + l.T) / 2.0)
    return SpectralEmbedding(vectors=vecs[:, :k], eigenvalues=vals[:k])


def row_normalize(vectors: np.ndarray) -> np.ndarray:
    """Unit-normalize each row; all-zero rows are left as zero."""
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms == 0, 1.0, norms)
    return vectors / safe


def kmeans(points: np.ndarray, k: int, seed: int, objective_trace: list | None = None) -> np.ndarray:
    """Seeded k-means++ with Lloyd iterations; returns a label per point.

    Deterministic for a fixed seed and invariant (up to label renaming) to the
    ordering of the points: initialization runs over a canonical lexicographic
    ordering and assignment ties break toward the lowest centroid index.
    Empty clusters are reseeded to the point farthest from its centroid.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be 2-d")
    n = pts.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} available points")
    if k < 1:
        raise ValueError("k must be positive")

    order = np.lexsort(pts.T[::-1])
    sorted_pts = pts[order]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))

    centers = np.empty((k, pts.shape[1]))
    centers[0] = sorted_pts[int(rng.integers(n))]
    d2 = ((sorted_pts - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a chosen center
            centers[c] = sorted_pts[int(rng.integers(n))]
        else:
            centers[c] = sorted_pts[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, ((sorted_pts - centers[c]) ** 2).sum(axis=1))

    labels_sorted = np.zeros(n, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        dists = ((sorted_pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels_sorted = dists.argmin(axis=1)
        if objective_trace is not None:
            objective_trace.append(float(dists[np.arange(n), labels_sorted].sum()))
        for c in range(k):
            if not (labels_sorted == c).any():
                farthest = int(dists[np.arange(n), labels_sorted].argmax())
                centers[c] = sorted_pts[farthest]
                labels_sorted[farthest] = c
        new_centers = np.stack(
            [sorted_pts[labels_sorted == c].mean(axis=0) for c in range(k)]
        )
        shift = ((new_centers - centers) ** 2).sum(axis=1).max()
        centers = new_centers
        if shift <= KMEANS_TOL:
            break

    labels = np.empty(n, dtype=np.int64)
    labels[order] = labels_sorted
    return labels


def spectral_cluster(s: SimilarityMatrix, k: int, seed: int) -> NodeGroups:
    """Full pipeline: Laplacian, k smallest eigenvectors, row-normalized k-means.

    Isolated (degree-zero) nodes are excluded before the embedding and come
    back in the separate ``isolated`` group; k counts only the embedded nodes.
    """
    degrees = s.values.sum(axis=1)
    active = np.flatnonzero(degrees > 0)
    isolated = np.flatnonzero(degrees == 0)
    if k > len(active):
        raise ValueError(f"k={k} exceeds the {len(active)} non-isolated nodes")
    sub = SimilarityMatrix(s.values[np.ix_(active, active)])
    lap = normalized_laplacian(sub)
    emb = eig_smallest(lap.matrix, k)
    points = row_normalize(emb.vectors)
    labels = kmeans(points, k, seed)
    groups = tuple(active[labels == c] for c in range(k))
    return NodeGroups(groups=groups, isolated=isolated)


def split_bipartite(group: np.ndarray, n_rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Split bipartite node ids into (row ids, col ids); cols were offset by n_rows."""
    group = np.asarray(group)
    rows = group[group < n_rows]
    cols = group[group >= n_rows] - n_rows
    return rows, cols
