"""Experiment harnesses built on the training runtime and samplers."""

import logging
from typing import Dict, Sequence

import numpy as np
import pandas as pd

from .graph import Graph
from .plan import PartitionPlan
from .runtime import train
from .sampler import EpochSamplePlan, sample_boundary, sample_boundary_edges, sample_drop_edge
from .types import TrainConfig

logger = logging.getLogger(__name__)


def matched_edge_rates(graph: Graph, plan: PartitionPlan, p: float) -> Dict[str, float]:
    """
    Edge keep-rates matched to node sampling at rate ``p``.

    BES keeps each cross-partition edge with probability ``p``. DropEdge
    uses one rate over every directed edge, chosen so its expected number
    of dropped entries equals the ``(1 - p)`` share of cross-partition
    entries that node sampling drops.
    """
    cross = int(np.count_nonzero(plan.owner[graph.entry_rows] != plan.owner[graph.csr_targets]))
    total = len(graph.csr_targets)
    drop_edge = 1.0 - (1.0 - p) * cross / total if total else 1.0
    return {"bns": p, "bes": p, "dropedge": drop_edge}


def dropped_cross_entries(graph: Graph, plan: PartitionPlan, sample: EpochSamplePlan) -> int:
    """Directed cross-partition edges whose far end is missing from the receiving halo or was dropped."""
    rows, cols = graph.entry_rows, graph.csr_targets
    cross = plan.owner[rows] != plan.owner[cols]
    if sample.edge_keep is not None:
        return int(np.count_nonzero(cross & ~sample.edge_keep))
    selected = np.zeros((plan.num_parts, graph.num_nodes), dtype=bool)
    for part, u in enumerate(sample.selected):
        selected[part, u] = True
    return int(np.count_nonzero(cross & ~selected[plan.owner[rows], cols]))


def compare_samplers(graph: Graph, plan: PartitionPlan, p: float, epochs: int = 100, seed: int = 0,
                     dim: int = 1) -> pd.DataFrame:
    """Boundary rows exchanged per layer by BNS, BES and DropEdge at matched drop rates."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"sampling rate must lie in [0, 1], got {p}")
    rates = matched_edge_rates(graph, plan, p)
    samplers = {
        "bns": lambda epoch: sample_boundary(plan, rates["bns"], epoch, seed),
        "bes": lambda epoch: sample_boundary_edges(graph, plan, rates["bes"], epoch, seed),
        "dropedge": lambda epoch: sample_drop_edge(graph, plan, rates["dropedge"], epoch, seed),
    }
    rows = []
    for name, sample in samplers.items():
        counts = np.empty(epochs)
        dropped = np.empty(epochs)
        for epoch in range(epochs):
            plan_e = sample(epoch)
            counts[epoch] = plan_e.rows
            dropped[epoch] = dropped_cross_entries(graph, plan, plan_e)
        rows.append({
            "sampler": name,
            "rate": rates[name],
            "rows_mean": float(counts.mean()),
            "rows_stderr": float(counts.std(ddof=1) / np.sqrt(epochs)) if epochs > 1 else 0.0,
            "floats_per_layer": float(dim * counts.mean()),
            "dropped_cross_mean": float(dropped.mean()),
        })
        logger.info(f"{name} at rate {rates[name]:.4f}: {counts.mean():.2f} rows per layer")
    return pd.DataFrame(rows)


def bench(graph: Graph, plan: PartitionPlan, base_config: TrainConfig, p_list: Sequence[float]) -> pd.DataFrame:
    """Mean per-epoch time breakdown for each sampling rate, with the sampling share of the epoch."""
    rows = []
    for p in p_list:
        config = base_config.model_copy(update={"p": p, "record_timings": True})
        metrics = pd.DataFrame([m.to_dict() for m in train(graph, plan, config).metrics])
        means = metrics[["t_epoch_ms", "t_comp_ms", "t_comm_ms", "t_reduce_ms", "t_sample_ms",
                         "floats_sent"]].mean()
        rows.append({
            "p": p,
            **means.to_dict(),
            "sample_fraction": float(means["t_sample_ms"] / means["t_epoch_ms"]) if means["t_epoch_ms"] > 0 else 0.0,
        })
        logger.info(f"p={p}: {means['t_epoch_ms']:.2f} ms/epoch")
    return pd.DataFrame(rows)


def p_study(graph: Graph, plan: PartitionPlan, base_config: TrainConfig, p_list: Sequence[float],
            seeds: Sequence[int]) -> pd.DataFrame:
    """Final test accuracy (mean and std over seeds), traffic and peak memory per sampling rate."""
    rows = []
    for p in p_list:
        accs, floats, mem = [], [], []
        for seed in seeds:
            config = base_config.model_copy(update={"p": p, "seed": seed})
            metrics = train(graph, plan, config).metrics
            accs.append(metrics[-1].test_acc)
            floats.append(np.mean([m.floats_sent for m in metrics]))
            mem.append(max(m.mem_est_scalars_max for m in metrics))
        rows.append({
            "p": p,
            "test_acc_mean": float(np.mean(accs)),
            "test_acc_std": float(np.std(accs)),
            "floats_per_epoch": float(np.mean(floats)),
            "mem_peak_scalars": float(np.max(mem)),
        })
        logger.info(f"p={p}: test accuracy {np.mean(accs):.4f} ± {np.std(accs):.4f}")
    return pd.DataFrame(rows)
