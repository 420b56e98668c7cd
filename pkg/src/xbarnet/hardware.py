"""Crossbar mapping and cost models.

Accepted clusters occupy one crossbar array each; whatever stays unclustered
is tiled onto the fixed ceil(m/rows) x ceil(n/cols) grid of the layer matrix
and only non-empty tiles count. That tiler is deliberately pessimistic:
irregular sparsity should map poorly, which is the effect the cost models are
meant to expose. Energy per inference splits into an array component that
scales with active cross-points and a peripheral component that scales with
the number of arrays (buffers, communication, control); the CMOS model
charges compute and memory access per live synapse, leakage per stored bit,
and a synchronization surcharge per cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .connectivity import ClusterSet, Mask
from .mlp import Layer, MlpModel


@dataclass(frozen=True)
class TechConfig:
    """Memristive technology and architecture constants (units in field names)."""

    crossbar_rows: int = 16
    crossbar_cols: int = 16
    weight_levels: int = 16
    r_min_ohm: float = 20e3
    r_max_ohm: float = 200e3
    mca_energy_per_active_crosspoint_j: float = 1e-12
    peripheral_energy_per_mca_eval_j: float = 5e-10
    cores_k: int = 4

    def __post_init__(self):
        if self.r_min_ohm >= self.r_max_ohm:
            raise ValueError("r_min_ohm must be below r_max_ohm")
        if self.weight_levels < 2:
            raise ValueError("weight_levels must be at least 2")
        if self.mca_energy_per_active_crosspoint_j < 0 or self.peripheral_energy_per_mca_eval_j < 0:
            raise ValueError("energies must be non-negative")
        if self.cores_k < 1:
            raise ValueError("cores_k must be positive")
        if self.crossbar_rows < 1 or self.crossbar_cols < 1:
            raise ValueError("crossbar dimensions must be positive")

    @property
    def crossbar_area(self) -> int:
        return self.crossbar_rows * self.crossbar_cols


@dataclass(frozen=True)
class CmosConfig:
    """Per-operation energy constants for the general-purpose baseline."""

    e_compute_j: float = 4.6e-12
    e_mem_access_j: float = 2.6e-11
    p_leak_per_bit_j: float = 1.0e-15
    bits_per_weight: int = 4
    sync_overhead_per_cluster_j: float = 1.0e-11

    def __post_init__(self):
        for name in ("e_compute_j", "e_mem_access_j", "p_leak_per_bit_j", "sync_overhead_per_cluster_j"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.bits_per_weight < 1:
            raise ValueError("bits_per_weight must be positive")


@dataclass
class LayerMapping:
    clustered_mca_count: int
    residual_mca_count: int
    histogram: list[int]
    unclustered_fraction: float
    cluster_utils: list[float]
    residual_utils: list[float]
    cluster_active: list[int]
    residual_active: list[int]
    cluster_areas: list[int]
    matrix_shape: tuple[int, int]

    @property
    def mca_count(self) -> int:
        return self.clustered_mca_count + self.residual_mca_count


@dataclass
class MappingReport:
    layers: list[LayerMapping]
    num_mca: int
    num_core: int
    crossbar_rows: int
    crossbar_cols: int

    def n_live(self) -> int:
        return sum(sum(l.cluster_active) + sum(l.residual_active) for l in self.layers)

    def n_clusters(self) -> int:
        return sum(l.clustered_mca_count for l in self.layers)

    def clustered_storage(self) -> int:
        """Cluster footprint areas plus individually stored residual synapses."""
        return sum(sum(l.cluster_areas) + sum(l.residual_active) for l in self.layers)

    def dense_storage(self) -> int:
        return sum(l.matrix_shape[0] * l.matrix_shape[1] for l in self.layers)

    def to_dict(self) -> dict:
        return {
            "num_mca": self.num_mca,
            "num_core": self.num_core,
            "crossbar_rows": self.crossbar_rows,
            "crossbar_cols": self.crossbar_cols,
            "n_live": self.n_live(),
            "n_clusters": self.n_clusters(),
            "clustered_storage": self.clustered_storage(),
            "dense_storage": self.dense_storage(),
            "layers": [
                {
                    "clustered_mca_count": l.clustered_mca_count,
                    "residual_mca_count": l.residual_mca_count,
                    "histogram": l.histogram,
                    "unclustered_fraction": l.unclustered_fraction,
                    "cluster_utils": l.cluster_utils,
                    "residual_utils": l.residual_utils,
                    "cluster_active": l.cluster_active,
                    "residual_active": l.residual_active,
                    "cluster_areas": l.cluster_areas,
                    "matrix_shape": list(l.matrix_shape),
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MappingReport":
        layers = [
            LayerMapping(
                clustered_mca_count=d["clustered_mca_count"],
                residual_mca_count=d["residual_mca_count"],
                histogram=d["histogram"],
                unclustered_fraction=d["unclustered_fraction"],
                cluster_utils=d["cluster_utils"],
                residual_utils=d["residual_utils"],
                cluster_active=d["cluster_active"],
                residual_active=d["residual_active"],
                cluster_areas=d["cluster_areas"],
                matrix_shape=tuple(d["matrix_shape"]),
            )
            for d in data["layers"]
        ]
        return cls(
            layers=layers,
            num_mca=data["num_mca"],
            num_core=data["num_core"],
            crossbar_rows=data["crossbar_rows"],
            crossbar_cols=data["crossbar_cols"],
        )


@dataclass(frozen=True)
class McaEnergyReport:
    mca_component: float
    peripheral_component: float

    @property
    def total(self) -> float:
        return self.mca_component + self.peripheral_component


@dataclass(frozen=True)
class CmosEnergyReport:
    compute: float
    memory_access: float
    leakage: float
    sync: float

    @property
    def total(self) -> float:
        return self.compute + self.memory_access + self.leakage + self.sync


def _histogram(utils: list[float]) -> list[int]:
    bins = [0] * 10
    for u in utils:
        bins[min(9, int(u * 10))] += 1
    return bins


def grid_tiles(bits: np.ndarray, rows: int, cols: int) -> list[int]:
    """Active-synapse counts of non-empty tiles in the fixed grid tiling."""
    m, n = bits.shape
    counts = []
    for bi in range(math.ceil(m / rows)):
        for bj in range(math.ceil(n / cols)):
            tile = bits[bi * rows : (bi + 1) * rows, bj * cols : (bj + 1) * cols]
            active = int(tile.sum())
            if active:
                counts.append(active)
    return counts


def core_count(num_mca: int, k: int) -> int:
    """ceil(num_mca / k); a fractional core is still a physical core."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if num_mca < 0:
        raise ValueError("num_mca must be non-negative")
    return math.ceil(num_mca / k)


def map_to_mcas(cluster_sets: list[ClusterSet], tech: TechConfig) -> MappingReport:
    """Assign each cluster one crossbar and grid-tile the residual synapses.

    Raises if a cluster exceeds the crossbar (a violated clustering
    contract). Every live synapse lands in exactly one crossbar: its
    cluster's, or the grid tile holding it.
    """
    layers = []
    area = tech.crossbar_area
    for cs in cluster_sets:
        cluster_active = []
        cluster_areas = []
        for cluster, idx in zip(cs.clusters, cs.covered):
            if not cluster.fits(tech.crossbar_rows, tech.crossbar_cols):
                raise ValueError(
                    f"cluster {cluster.n_rows}x{cluster.n_cols} exceeds crossbar "
                    f"{tech.crossbar_rows}x{tech.crossbar_cols}"
                )
            cluster_active.append(len(idx))
            cluster_areas.append(cluster.footprint_area())
        residual_active = grid_tiles(cs.residual.bits, tech.crossbar_rows, tech.crossbar_cols)
        cluster_utils = [a / area for a in cluster_active]
        residual_utils = [a / area for a in residual_active]
        live = sum(cluster_active) + sum(residual_active)
        layers.append(
            LayerMapping(
                clustered_mca_count=len(cluster_active),
                residual_mca_count=len(residual_active),
                histogram=_histogram(cluster_utils),
                unclustered_fraction=(sum(residual_active) / live) if live else 0.0,
                cluster_utils=cluster_utils,
                residual_utils=residual_utils,
                cluster_active=cluster_active,
                residual_active=residual_active,
                cluster_areas=cluster_areas,
                matrix_shape=cs.residual.bits.shape,
            )
        )
    num_mca = sum(l.mca_count for l in layers)
    return MappingReport(
        layers=layers,
        num_mca=num_mca,
        num_core=core_count(num_mca, tech.cores_k),
        crossbar_rows=tech.crossbar_rows,
        crossbar_cols=tech.crossbar_cols,
    )


def mca_energy(
    report: MappingReport, tech: TechConfig, evals_per_inference: list[int] | None = None
) -> McaEnergyReport:
    """Per-inference energy: active cross-points plus a peripheral charge per array."""
    if evals_per_inference is None:
        evals_per_inference = [1] * len(report.layers)
    if len(evals_per_inference) != len(report.layers):
        raise ValueError("one evals_per_inference entry per layer required")
    array_e = 0.0
    periph_e = 0.0
    for layer, evals in zip(report.layers, evals_per_inference):
        actives = layer.cluster_active + layer.residual_active
        array_e += evals * sum(actives) * tech.mca_energy_per_active_crosspoint_j
        periph_e += evals * len(actives) * tech.peripheral_energy_per_mca_eval_j
    return McaEnergyReport(mca_component=array_e, peripheral_component=periph_e)


def cmos_energy(
    n_live_synapses: int, n_stored_weights: int, cmos: CmosConfig, n_clusters: int = 0
) -> CmosEnergyReport:
    """General-purpose baseline energy per inference.

    Unclustered nets store the full dense weight matrix (zeros are part of the
    topology); clustered nets store only the cluster submatrix areas plus the
    leftover live synapses, paying a synchronization overhead per cluster.
    """
    if min(n_live_synapses, n_stored_weights, n_clusters) < 0:
        raise ValueError("counts must be non-negative")
    return CmosEnergyReport(
        compute=n_live_synapses * cmos.e_compute_j,
        memory_access=n_live_synapses * cmos.e_mem_access_j,
        leakage=n_stored_weights * cmos.bits_per_weight * cmos.p_leak_per_bit_j,
        sync=n_clusters * cmos.sync_overhead_per_cluster_j,
    )


def stored_weight_count(cluster_sets: list[ClusterSet]) -> int:
    """Storage for a clustered net: cluster footprint areas + residual synapses."""
    total = 0
    for cs in cluster_sets:
        total += sum(c.footprint_area() for c in cs.clusters)
        total += cs.residual.nnz
    return total


def quantize_weights(weights: np.ndarray, tech: TechConfig) -> tuple[np.ndarray, float]:
    """Snap nonzero weights to uniform levels over [-w_max, +w_max].

    Zeros stay exactly zero; returns (quantized copy, max absolute error).
    The error never exceeds w_max / (weight_levels - 1).
    """
    w = np.asarray(weights, dtype=np.float64)
    nz = w != 0
    if not nz.any():
        return w.copy(), 0.0
    w_max = np.abs(w[nz]).max()
    levels = np.linspace(-w_max, w_max, tech.weight_levels)
    step = levels[1] - levels[0]
    idx = np.clip(np.round((w - levels[0]) / step), 0, tech.weight_levels - 1).astype(int)
    q = np.where(nz, levels[idx], 0.0)
    return q, float(np.abs(q - w)[nz].max())


def quantize_model(model: MlpModel, tech: TechConfig) -> tuple[MlpModel, float]:
    """Quantize every layer; biases are left analog. Returns (model copy, max error)."""
    layers = []
    worst = 0.0
    for layer in model.layers:
        q, err = quantize_weights(layer.weights, tech)
        worst = max(worst, err)
        layers.append(Layer(weights=q, bias=layer.bias.copy(), mask=Mask(np.array(layer.mask.bits))))
    return MlpModel(layers), worst
