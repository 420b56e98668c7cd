"""Connectivity matrices, masks, clusters, and their file formats.

A connectivity matrix is a dense (0,1) matrix recording which synapses exist
between two neuron layers: entry (i, j) = 1 iff input neuron i feeds output
neuron j. Masks share the shape of the weight matrix they gate and carry a
role tag so pruning decisions and cluster membership stay distinguishable.
Clusters are row/column index groups whose induced submatrix maps onto one
crossbar.

All types are immutable after construction; operations return new values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MASK_ROLES = ("prune_map", "cluster_map", "combined")


class ShapeError(ValueError):
    """Raised when matrix shapes are degenerate or do not line up."""


class SparseFormatError(ValueError):
    """Raised on malformed sparse coordinate files; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _as_bits(values, rows=None, cols=None) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"degenerate shape {arr.shape}; need a non-empty 2-d matrix")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("entries must be exactly 0 or 1")
    bits = arr.astype(np.uint8)
    bits.flags.writeable = False
    return bits


@dataclass(frozen=True)
class ConnectivityMatrix:
    """(0,1) matrix of existing synapses between an input and an output layer."""

    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", _as_bits(self.bits))

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def nnz(self) -> int:
        return int(self.bits.sum())

    def density(self) -> float:
        return self.nnz / self.bits.size


@dataclass(frozen=True)
class Mask:
    """(0,1) gate with the same shape as the weight matrix it masks."""

    bits: np.ndarray
    role: str = "combined"

    def __post_init__(self):
        object.__setattr__(self, "bits", _as_bits(self.bits))
        if self.role not in MASK_ROLES:
            raise ValueError(f"unknown mask role {self.role!r}; expected one of {MASK_ROLES}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape


@dataclass(frozen=True)
class Cluster:
    """Row/column index groups whose induced submatrix maps onto one crossbar.

    Indices are kept sorted ascending; identity is (layer_id, position in its
    ClusterSet).
    """

    row_ids: tuple[int, ...]
    col_ids: tuple[int, ...]
    layer_id: int = 0

    def __post_init__(self):
        rows = tuple(int(i) for i in self.row_ids)
        cols = tuple(int(j) for j in self.col_ids)
        if not rows or not cols:
            raise ValueError("cluster needs at least one row and one column")
        if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
            raise ValueError("cluster indices must be duplicate-free")
        if min(rows) < 0 or min(cols) < 0:
            raise ValueError("cluster indices must be non-negative")
        object.__setattr__(self, "row_ids", tuple(sorted(rows)))
        object.__setattr__(self, "col_ids", tuple(sorted(cols)))

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    @property
    def n_cols(self) -> int:
        return len(self.col_ids)

    def footprint_area(self) -> int:
        return self.n_rows * self.n_cols

    def fits(self, crossbar_rows: int, crossbar_cols: int) -> bool:
        return self.n_rows <= crossbar_rows and self.n_cols <= crossbar_cols


@dataclass(frozen=True)
class ClusterSet:
    """Accepted clusters plus the connectivity left unclustered.

    ``covered`` holds, per cluster, the (row, col) coordinates of the synapses
    that cluster captured from the source matrix. The full induced submatrix
    footprint of an accepted cluster is spent (its 0-entries are unusable
    cross-points), so coverage is recorded explicitly rather than re-derived.
    """

    clusters: tuple[Cluster, ...]
    residual: ConnectivityMatrix
    covered: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if not self.covered:
            object.__setattr__(
                self, "covered", tuple(np.empty((0, 2), dtype=np.int64) for _ in self.clusters)
            )
        else:
            frozen = []
            for idx in self.covered:
                arr = np.asarray(idx, dtype=np.int64).reshape(-1, 2)
                arr.flags.writeable = False
                frozen.append(arr)
            object.__setattr__(self, "covered", tuple(frozen))
        if len(self.covered) != len(self.clusters):
            raise ValueError("one coverage array per cluster required")

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def covered_nnz(self) -> int:
        return sum(len(idx) for idx in self.covered)


def from_weights(weights, epsilon: float = 0.0) -> ConnectivityMatrix:
    """Binarize a weight matrix: entry (i,j)=1 iff |w(i,j)| > epsilon."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.size == 0:
        raise ShapeError(f"degenerate shape {w.shape}; need a non-empty 2-d matrix")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return ConnectivityMatrix((np.abs(w) > epsilon).astype(np.uint8))


def union_masks(a: Mask, b: Mask) -> Mask:
    """Entry-wise OR of two masks; the result carries the 'combined' role."""
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return Mask(a.bits | b.bits, role="combined")


def apply_mask(weights, mask: Mask) -> np.ndarray:
    """Zero the weight entries where the mask is 0; the input is not modified."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != mask.shape:
        raise ShapeError(f"weights {w.shape} do not match mask {mask.shape}")
    return w * mask.bits


def save_sparse(path, matrix: ConnectivityMatrix) -> None:
    """Write the coordinate text format: 'rows cols nnz' then one 'row col' per 1-entry."""
    rows, cols = np.nonzero(matrix.bits)
    lines = [f"{matrix.rows} {matrix.cols} {len(rows)}"]
    lines.extend(f"{i} {j}" for i, j in zip(rows.tolist(), cols.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_sparse(path) -> ConnectivityMatrix:
    """Read the coordinate text format written by :func:`save_sparse`."""
    raw = Path(path).read_text().splitlines()
    lines = [(n + 1, s.strip()) for n, s in enumerate(raw) if s.strip()]
    if not lines:
        raise SparseFormatError("empty file", line=1)
    header_no, header = lines[0]
    parts = header.split()
    if len(parts) != 3:
        raise SparseFormatError(f"header must be 'rows cols nnz', got {header!r}", line=header_no)
    try:
        n_rows, n_cols, nnz = (int(p) for p in parts)
    except ValueError:
        raise SparseFormatError(f"non-integer header field in {header!r}", line=header_no) from None
    if n_rows < 1 or n_cols < 1 or nnz < 0:
        raise SparseFormatError(f"invalid dimensions {header!r}", line=header_no)
    entries = lines[1:]
    if len(entries) != nnz:
        raise SparseFormatError(
            f"header promises {nnz} entries but file has {len(entries)}", line=header_no
        )
    bits = np.zeros((n_rows, n_cols), dtype=np.uint8)
    for line_no, text in entries:
        parts = text.split()
        if len(parts) != 2:
            raise SparseFormatError(f"entry must be 'row col', got {text!r}", line=line_no)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise SparseFormatError(f"non-integer coordinate in {text!r}", line=line_no) from None
        if not (0 <= i < n_rows and 0 <= j < n_cols):
            raise SparseFormatError(
                f"coordinate out of bounds: ({i}, {j}) vs shape ({n_rows}, {n_cols})", line=line_no
            )
        bits[i, j] = 1
    return ConnectivityMatrix(bits)


def cluster_sets_to_json(cluster_sets: list[ClusterSet]) -> str:
    """Serialize per-layer cluster sets as a JSON list of {layer, rows, cols}.

    Coverage coordinates ride along under the optional "covered" key so
    mapping reports can be rebuilt without the source matrix.
    """
    records = []
    for layer_id, cs in enumerate(cluster_sets):
        for cluster, idx in zip(cs.clusters, cs.covered):
            records.append(
                {
                    "layer": layer_id,
                    "rows": list(cluster.row_ids),
                    "cols": list(cluster.col_ids),
                    "covered": [[int(i), int(j)] for i, j in idx],
                }
            )
    return json.dumps(records, indent=1)


def cluster_sets_from_json(text: str, residuals: list[ConnectivityMatrix]) -> list[ClusterSet]:
    """Rebuild per-layer ClusterSets from JSON plus externally stored residuals."""
    records = json.loads(text)
    per_layer: dict[int, list] = {i: [] for i in range(len(residuals))}
    for rec in records:
        layer = int(rec["layer"])
        if layer not in per_layer:
            raise ValueError(f"cluster record for unknown layer {layer}")
        cluster = Cluster(tuple(rec["rows"]), tuple(rec["cols"]), layer_id=layer)
        covered = np.asarray(rec.get("covered", []), dtype=np.int64).reshape(-1, 2)
        per_layer[layer].append((cluster, covered))
    out = []
    for layer, residual in enumerate(residuals):
        pairs = per_layer[layer]
        out.append(
            ClusterSet(
                clusters=tuple(c for c, _ in pairs),
                residual=residual,
                covered=tuple(idx for _, idx in pairs),
            )
        )
    return out


def audit_cluster_set(cs: ClusterSet, original: ConnectivityMatrix) -> None:
    """Check disjointness and coverage of a ClusterSet against its source matrix.

    Every 1-entry of ``original`` must sit in exactly one cluster's coverage or
    in the residual, never both; cluster coverage must lie inside the cluster's
    row/col footprint. Raises AssertionError with a diagnostic on violation.
    """
    claimed = np.zeros(original.bits.shape, dtype=np.int32)
    for cluster, idx in zip(cs.clusters, cs.covered):
        rows = set(cluster.row_ids)
        cols = set(cluster.col_ids)
        for i, j in idx:
            assert i in rows and j in cols, (
                f"covered synapse ({i},{j}) outside cluster footprint"
            )
            assert original.bits[i, j] == 1, f"covered synapse ({i},{j}) absent from source"
            claimed[i, j] += 1
    assert (claimed <= 1).all(), "a synapse is covered by more than one cluster"
    if cs.residual.bits.shape != original.bits.shape:
        raise AssertionError("residual shape differs from source matrix")
    both = (claimed > 0) & (cs.residual.bits == 1)
    assert not both.any(), "a synapse appears both in a cluster and in the residual"
    total = claimed.astype(np.uint8) | cs.residual.bits
    assert np.array_equal(total, original.bits), (
        "cluster coverage plus residual does not reproduce the source 1-entries"
    )
