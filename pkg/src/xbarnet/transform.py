"""Integrated training loop: train, prune, cluster, and prune whole clusters.

Each epoch trains the network once, then (while enough synapses remain
unclustered and the epoch improved the training loss) refreshes the prune
maps, runs size-constrained clustering on the still-unclustered synapses, and
zeroes every synapse that is marked prunable and sits outside all clusters.
The model mask is always the union of prune map and cluster map, so clustered
synapses are shielded from magnitude pruning. Once the unclustered fraction
falls below the threshold the loop switches to cluster pruning: per improving
epoch it removes the lowest-scoring clusters outright and lets subsequent
epochs recover the accuracy.

Two switches (``enable_prune``, ``enable_cluster``) turn the same loop into
the baselines: both off is plain training, prune-only is the magnitude
pruning control, and a prune-only run followed by :func:`offline_cluster` is
the cluster-after-training arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .connectivity import Cluster, ClusterSet, ConnectivityMatrix, Mask
from .mlp import MlpModel, TrainConfig, evaluate, init_model, magnitude_prune, train_epoch
from .sizecluster import SizeClusterConfig, size_constrained_cluster
from .util import STREAM_CLUSTER, seed_for

PHASE_CLUSTERING = "clustering"
PHASE_CLUSTER_PRUNING = "cluster_pruning"


@dataclass(frozen=True)
class TransformConfig:
    scic: SizeClusterConfig = field(default_factory=SizeClusterConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    unclustered_threshold: float = 0.10
    cluster_prune_alpha: float = 0.5
    clusters_pruned_per_event: int = 1
    max_epochs: int = 20
    seed: int = 0
    # Per-epoch decay of the clustering acceptance threshold: early epochs
    # accept only dense blocks, later ones absorb the stubborn remainder.
    # 1.0 keeps the threshold fixed at scic.base_util_factor.
    threshold_anneal: float = 1.0

    def __post_init__(self):
        if not 0 < self.unclustered_threshold < 1:
            raise ValueError("unclustered_threshold must lie in (0, 1)")
        if not 0 <= self.cluster_prune_alpha <= 1:
            raise ValueError("cluster_prune_alpha must lie in [0, 1]")
        if self.clusters_pruned_per_event < 1:
            raise ValueError("clusters_pruned_per_event must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if not 0 < self.threshold_anneal <= 1:
            raise ValueError("threshold_anneal must lie in (0, 1]")


@dataclass
class ClusterRecord:
    """An accepted cluster plus its covered synapses and frozen utilization."""

    cluster: Cluster
    covered: np.ndarray
    util: float
    ordinal: int


@dataclass
class TransformState:
    model: MlpModel
    prune_maps: list[np.ndarray]
    cluster_maps: list[np.ndarray]
    records: list[list[ClusterRecord]]
    epoch: int = 0
    training_error_previous: float = float("inf")
    phase: str = PHASE_CLUSTERING
    next_ordinal: list[int] = field(default_factory=list)

    @classmethod
    def fresh(cls, topology: list[int], seed: int) -> "TransformState":
        model = init_model(topology, seed)
        prune = [np.ones(l.weights.shape, dtype=np.uint8) for l in model.layers]
        cluster = [np.zeros(l.weights.shape, dtype=np.uint8) for l in model.layers]
        return cls(
            model=model,
            prune_maps=prune,
            cluster_maps=cluster,
            records=[[] for _ in model.layers],
            next_ordinal=[0 for _ in model.layers],
        )

    def n_clusters(self) -> int:
        return sum(len(r) for r in self.records)

    def mean_util(self) -> float:
        utils = [rec.util for recs in self.records for rec in recs]
        return float(np.mean(utils)) if utils else 0.0


def unclustered_fraction(state: TransformState) -> float:
    """Unclustered live synapses over all live synapses (0 when nothing lives)."""
    live = 0
    unclustered = 0
    for layer, cmap in zip(state.model.layers, state.cluster_maps):
        nz = layer.weights != 0
        live += int(nz.sum())
        unclustered += int((nz & (cmap == 0)).sum())
    return unclustered / live if live else 0.0


def _epoch_scic_config(cfg: TransformConfig, epoch: int) -> SizeClusterConfig:
    base = max(
        cfg.scic.min_util_factor,
        cfg.scic.base_util_factor * cfg.threshold_anneal ** (epoch - 1),
    )
    return replace(
        cfg.scic,
        base_util_factor=base,
        min_util_factor=min(cfg.scic.min_util_factor, base),
    )


def cluster_score(state: TransformState, cfg: TransformConfig, layer_id: int, ordinal: int) -> float:
    """alpha * utilization + (1 - alpha) * normalized mean |w| of the cluster.

    The magnitude term divides the cluster's mean |w| over its covered
    synapses by the largest such mean among the clusters of the same layer,
    so each layer's strongest cluster scores 1.0 on that term.
    """
    records = state.records[layer_id]
    target = next((r for r in records if r.ordinal == ordinal), None)
    if target is None:
        raise ValueError(f"no cluster with ordinal {ordinal} in layer {layer_id}")
    if len(target.covered) == 0:
        raise ValueError("cluster covers no synapses")
    weights = state.model.layers[layer_id].weights
    means = [
        np.abs(weights[rec.covered[:, 0], rec.covered[:, 1]]).mean() for rec in records
    ]
    top = max(means)
    mine = np.abs(weights[target.covered[:, 0], target.covered[:, 1]]).mean()
    magnitude = mine / top if top > 0 else 0.0
    alpha = cfg.cluster_prune_alpha
    return alpha * target.util + (1 - alpha) * magnitude


def cluster_prune(state: TransformState, cfg: TransformConfig) -> int:
    """Remove the lowest-scoring clusters globally; returns how many were cut.

    The removed clusters' synapses are zeroed and dropped from both maps, so
    the following epochs can neither train nor re-prune them; ties break by
    (layer, ordinal). No-op on an empty cluster set.
    """
    scored = []
    for layer_id, records in enumerate(state.records):
        for rec in records:
            scored.append((cluster_score(state, cfg, layer_id, rec.ordinal), layer_id, rec.ordinal))
    if not scored:
        return 0
    scored.sort()
    removed = 0
    for _, layer_id, ordinal in scored[: cfg.clusters_pruned_per_event]:
        records = state.records[layer_id]
        rec = next(r for r in records if r.ordinal == ordinal)
        ii, jj = rec.covered[:, 0], rec.covered[:, 1]
        state.model.layers[layer_id].weights[ii, jj] = 0.0
        state.prune_maps[layer_id][ii, jj] = 0
        state.cluster_maps[layer_id][ii, jj] = 0
        records.remove(rec)
        removed += 1
    return removed


def _refresh_masks(state: TransformState) -> int:
    """mask <- prune map OR cluster map; zero weights outside; count casualties."""
    zeroed = 0
    for layer, pmap, cmap in zip(state.model.layers, state.prune_maps, state.cluster_maps):
        union = pmap | cmap
        zeroed += int(((layer.weights != 0) & (union == 0)).sum())
        layer.mask = Mask(union)
        layer.weights *= union
    return zeroed


def transform_epoch(
    state: TransformState,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TransformConfig,
    enable_prune: bool = True,
    enable_cluster: bool = True,
) -> dict:
    """One epoch of the integrated loop; mutates state, returns the log record."""
    epoch = state.epoch + 1
    loss = train_epoch(state.model, x, y, cfg.train, epoch)
    improved = loss < state.training_error_previous
    frac_before = unclustered_fraction(state)
    n_zeroed = 0
    pruned_clusters = 0

    if frac_before < cfg.unclustered_threshold:
        state.phase = PHASE_CLUSTER_PRUNING
        if improved and enable_cluster:
            pruned_clusters = cluster_prune(state, cfg)
    else:
        state.phase = PHASE_CLUSTERING
        if improved:
            if enable_prune:
                maps = magnitude_prune(state.model, cfg.train.prune_quality)
                state.prune_maps = [np.array(m.bits) for m in maps]
            if enable_cluster:
                scic_cfg = _epoch_scic_config(cfg, epoch)
                for layer_id, layer in enumerate(state.model.layers):
                    residual_bits = (
                        (layer.weights != 0) & (state.cluster_maps[layer_id] == 0)
                    ).astype(np.uint8)
                    if not residual_bits.any():
                        continue
                    cs = size_constrained_cluster(
                        ConnectivityMatrix(residual_bits),
                        scic_cfg,
                        seed_for(cfg.seed, STREAM_CLUSTER, epoch, layer_id),
                        layer_id=layer_id,
                    )
                    for cluster, idx in zip(cs.clusters, cs.covered):
                        state.records[layer_id].append(
                            ClusterRecord(
                                cluster=cluster,
                                covered=idx,
                                util=len(idx) / scic_cfg.crossbar_area,
                                ordinal=state.next_ordinal[layer_id],
                            )
                        )
                        state.next_ordinal[layer_id] += 1
                        state.cluster_maps[layer_id][idx[:, 0], idx[:, 1]] = 1

    n_zeroed = _refresh_masks(state)
    state.training_error_previous = loss
    state.epoch = epoch
    return {
        "epoch": epoch,
        "train_loss": loss,
        "sparsity": state.model.sparsity(),
        "unclustered_frac": unclustered_fraction(state),
        "n_clusters": state.n_clusters(),
        "mean_util": state.mean_util(),
        "phase": state.phase,
        "improved": improved,
        "n_zeroed_unprotected": n_zeroed,
        "n_clusters_pruned": pruned_clusters,
    }


@dataclass
class TransformResult:
    model: MlpModel
    state: TransformState
    log: list[dict]


def _converged(log: list[dict]) -> bool:
    # validation accuracy drift < 0.1% absolute and unclustered fraction drift
    # < 1% over the last five consecutive epochs
    if len(log) < 6:
        return False
    recent = log[-6:]
    acc = [r["val_acc"] for r in recent]
    frac = [r["unclustered_frac"] for r in recent]
    acc_stable = all(abs(a - b) < 0.001 for a, b in zip(acc[1:], acc[:-1]))
    frac_stable = all(abs(a - b) < 0.01 for a, b in zip(frac[1:], frac[:-1]))
    return acc_stable and frac_stable


def run(
    cfg: TransformConfig,
    topology: list[int],
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    enable_prune: bool = True,
    enable_cluster: bool = True,
) -> TransformResult:
    """Run the loop until max_epochs or convergence; returns model, state, log.

    Convergence: validation accuracy moved by < 0.1% absolute and the
    unclustered fraction by < 1% over five consecutive epochs.
    """
    state = TransformState.fresh(topology, cfg.seed)
    log: list[dict] = []
    for _ in range(cfg.max_epochs):
        record = transform_epoch(
            state, x_train, y_train, cfg, enable_prune=enable_prune, enable_cluster=enable_cluster
        )
        val_acc, val_loss = evaluate(state.model, x_val, y_val)
        record["val_acc"] = val_acc
        record["val_loss"] = val_loss
        log.append(record)
        if _converged(log):
            break
    return TransformResult(model=state.model, state=state, log=log)


def offline_cluster(model: MlpModel, scic_cfg: SizeClusterConfig, seed: int) -> list[ClusterSet]:
    """One post-hoc clustering pass per layer on the final connectivity."""
    sets = []
    for layer_id, layer in enumerate(model.layers):
        c = ConnectivityMatrix((layer.weights != 0).astype(np.uint8))
        sets.append(
            size_constrained_cluster(
                c, scic_cfg, seed_for(seed, STREAM_CLUSTER, 0, layer_id), layer_id=layer_id
            )
        )
    return sets


def audit_state(state: TransformState) -> None:
    """Exact consistency checks between model, maps, and cluster records.

    cluster_map must equal the union of per-cluster covered synapses, the
    model mask must equal prune_map OR cluster_map, weights outside the mask
    must be zero, and covered synapses must be live and claimed exactly once.
    """
    for layer_id, layer in enumerate(state.model.layers):
        claimed = np.zeros(layer.weights.shape, dtype=np.int32)
        for rec in state.records[layer_id]:
            claimed[rec.covered[:, 0], rec.covered[:, 1]] += 1
        assert (claimed <= 1).all(), f"layer {layer_id}: overlapping cluster coverage"
        assert np.array_equal(
            (claimed > 0).astype(np.uint8), state.cluster_maps[layer_id]
        ), f"layer {layer_id}: cluster_map out of sync with cluster records"
        union = state.prune_maps[layer_id] | state.cluster_maps[layer_id]
        assert np.array_equal(layer.mask.bits, union), f"layer {layer_id}: mask is not the map union"
        assert not layer.weights[union == 0].any(), f"layer {layer_id}: live weight outside mask"
        covered_weights = layer.weights[claimed > 0]
        assert covered_weights.all(), f"layer {layer_id}: covered synapse with zero weight"


def final_cluster_sets(state: TransformState) -> list[ClusterSet]:
    """Per-layer ClusterSets of the current state for mapping and reports."""
    sets = []
    for layer_id, layer in enumerate(state.model.layers):
        residual = (
            (layer.weights != 0) & (state.cluster_maps[layer_id] == 0)
        ).astype(np.uint8)
        records = state.records[layer_id]
        sets.append(
            ClusterSet(
                clusters=tuple(r.cluster for r in records),
                residual=ConnectivityMatrix(residual),
                covered=tuple(r.covered for r in records),
            )
        )
    return sets
