"""
Per-epoch halo selection.

Boundary node sampling keeps every boundary node of every partition
independently with probability p. Uniforms are drawn from a generator keyed
by (seed, epoch, partition), one per boundary node in ascending id order, so
any worker can recompute another's selection, and rates sharing a seed are
coupled (U_i(p) ⊆ U_i(p') for p < p').

The edge samplers keep edges instead of nodes: boundary edge sampling draws
only cross-partition edges, DropEdge draws every edge. A boundary node is
communicated iff at least one of its kept cross edges reaches the partition.
Kept sampled edges are reweighted by 1/q.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from .graph import Graph
from .plan import PartitionPlan
from .types import SamplerKind
from .util import STREAM_BOUNDARY, STREAM_EDGES, rng_for


@dataclass(frozen=True, eq=False)
class EpochSamplePlan:
    epoch: int
    rate: float
    selected: List[np.ndarray]     # U_i
    send: List[List[np.ndarray]]   # send[i][j] = S_{i,j} = U_j ∩ V_i
    kind: SamplerKind = SamplerKind.BNS
    edge_keep: Optional[np.ndarray] = None    # per CSR entry, edge samplers only
    edge_weight: Optional[np.ndarray] = None

    @property
    def num_parts(self) -> int:
        return len(self.selected)

    @property
    def rows(self) -> int:
        """Rows exchanged per layer: Σ_i |U_i|."""
        return int(sum(len(u) for u in self.selected))

    def recv_set(self, dst: int, src: int) -> np.ndarray:
        """Nodes ``dst`` receives from ``src``: U_dst ∩ V_src."""
        return self.send[src][dst]


@dataclass(frozen=True, eq=False)
class EdgeMask:
    """Kept edges of one epoch, per CSR entry, and their aggregation weights."""
    keep: np.ndarray
    weight: np.ndarray

    def adjacency(self, graph: Graph) -> sp.csr_matrix:
        data = np.where(self.keep, self.weight, 0.0)
        adj = sp.csr_matrix((data, graph.csr_targets, graph.csr_offsets), shape=(graph.num_nodes,) * 2)
        adj.eliminate_zeros()
        return adj

    @property
    def num_kept_entries(self) -> int:
        return int(self.keep.sum())


def boundary_uniforms(plan: PartitionPlan, part: int, epoch: int, seed: int) -> np.ndarray:
    return rng_for(seed, STREAM_BOUNDARY, epoch, part).random(len(plan.boundary[part]))


def sample_partition_boundary(plan: PartitionPlan, part: int, p: float, epoch: int, seed: int) -> np.ndarray:
    """U_i for one partition; what worker ``part`` computes locally."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"sampling rate must lie in [0, 1], got {p}")
    return plan.boundary[part][boundary_uniforms(plan, part, epoch, seed) < p]


def derive_send_lists(plan: PartitionPlan, selected: List[np.ndarray]) -> List[List[np.ndarray]]:
    """S_{i,j} = U_j ∩ V_i for every ordered pair."""
    return [[u[plan.owner[u] == i] for u in selected] for i in range(plan.num_parts)]


def sample_boundary(plan: PartitionPlan, p: float, epoch: int, seed: int) -> EpochSamplePlan:
    selected = [sample_partition_boundary(plan, i, p, epoch, seed) for i in range(plan.num_parts)]
    return EpochSamplePlan(epoch=epoch, rate=p, selected=selected, send=derive_send_lists(plan, selected))


def edge_uniforms(graph: Graph, epoch: int, seed: int) -> np.ndarray:
    """One uniform per undirected edge, broadcast to both CSR directions."""
    return rng_for(seed, STREAM_EDGES, epoch).random(graph.num_edges)[graph.edge_ids]


def _cross_entries(graph: Graph, plan: PartitionPlan) -> np.ndarray:
    return plan.owner[graph.entry_rows] != plan.owner[graph.csr_targets]


def _reweighted(keep: np.ndarray, sampled: np.ndarray, q: float) -> EdgeMask:
    scale = 1.0 / q if q > 0 else 1.0
    return EdgeMask(keep=keep, weight=np.where(sampled, scale, 1.0))


def halo_from_edges(graph: Graph, plan: PartitionPlan, keep: np.ndarray, part: int) -> np.ndarray:
    """Boundary nodes of ``part`` reached by at least one kept cross edge."""
    rows, cols = graph.entry_rows, graph.csr_targets
    owner = plan.owner
    hit = keep & (owner[rows] == part) & (owner[cols] != part)
    return np.unique(cols[hit])


def boundary_edge_mask(graph: Graph, plan: PartitionPlan, q: float, epoch: int, seed: int) -> EdgeMask:
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"edge rate must lie in [0, 1], got {q}")
    cross = _cross_entries(graph, plan)
    keep = ~cross | (edge_uniforms(graph, epoch, seed) < q)
    return _reweighted(keep, cross, q)


def drop_edge_global(graph: Graph, q: float, epoch: int, seed: int) -> EdgeMask:
    """Every edge kept with probability q; the perturbed adjacency is ``mask.adjacency(graph)``."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"edge rate must lie in [0, 1], got {q}")
    keep = edge_uniforms(graph, epoch, seed) < q
    return _reweighted(keep, np.ones_like(keep), q)


def _edge_plan(graph: Graph, plan: PartitionPlan, mask: EdgeMask, q: float, epoch: int,
               kind: SamplerKind) -> EpochSamplePlan:
    selected = [halo_from_edges(graph, plan, mask.keep, i) for i in range(plan.num_parts)]
    return EpochSamplePlan(
        epoch=epoch,
        rate=q,
        selected=selected,
        send=derive_send_lists(plan, selected),
        kind=kind,
        edge_keep=mask.keep,
        edge_weight=mask.weight,
    )


def sample_boundary_edges(graph: Graph, plan: PartitionPlan, q: float, epoch: int, seed: int) -> EpochSamplePlan:
    mask = boundary_edge_mask(graph, plan, q, epoch, seed)
    return _edge_plan(graph, plan, mask, q, epoch, SamplerKind.BES)


def sample_drop_edge(graph: Graph, plan: PartitionPlan, q: float, epoch: int, seed: int) -> EpochSamplePlan:
    mask = drop_edge_global(graph, q, epoch, seed)
    return _edge_plan(graph, plan, mask, q, epoch, SamplerKind.DROPEDGE)


def edge_mask_for(kind: SamplerKind, graph: Graph, plan: PartitionPlan, q: float, epoch: int,
                  seed: int) -> EdgeMask:
    if kind is SamplerKind.BES:
        return boundary_edge_mask(graph, plan, q, epoch, seed)
    if kind is SamplerKind.DROPEDGE:
        return drop_edge_global(graph, q, epoch, seed)
    raise ValueError(f"sampler '{kind.value}' does not sample edges")
