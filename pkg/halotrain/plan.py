"""
Boundary sets, pairwise demand sets and the communication/memory cost models.

For partition i, B_i holds every node owned elsewhere with at least one
neighbour in V_i. Partition i needs D_{j->i} = B_i ∩ V_j from partition j,
so the total communication volume of one exchange is Σ_i |B_i|.
"""

import logging
from dataclasses import dataclass, asdict
from typing import Any, Dict, List, Sequence

import numpy as np

from .graph import Graph
from .partition import Assignment

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    num_parts: int
    owner: np.ndarray
    inner: List[np.ndarray]
    boundary: List[np.ndarray]
    demand: List[List[np.ndarray]]  # demand[i][j] = B_i ∩ V_j, sorted

    def send_set(self, src: int, dst: int) -> np.ndarray:
        """Nodes of ``src`` that ``dst`` needs: D_{src->dst}."""
        return self.demand[dst][src]

    @property
    def inner_sizes(self) -> np.ndarray:
        return np.array([len(v) for v in self.inner], dtype=np.int64)

    @property
    def boundary_sizes(self) -> np.ndarray:
        return np.array([len(b) for b in self.boundary], dtype=np.int64)

    def __str__(self) -> str:
        return (f"PartitionPlan(parts={self.num_parts}, inner={self.inner_sizes.tolist()}, "
                f"boundary={self.boundary_sizes.tolist()})")


@dataclass
class CommVolume:
    total: int
    per_partition: List[int]  # send volume of each partition

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class MemoryEstimate:
    """Scalar counts from (3·|V_i| + p·|B_i|)·d^(l), per partition and layer."""
    p: float
    dims: List[int]
    per_layer: np.ndarray      # (num_parts, len(dims))
    per_partition: np.ndarray  # row sums

    @property
    def total(self) -> float:
        return float(self.per_partition.sum())

    @property
    def max(self) -> float:
        return float(self.per_partition.max())

    @property
    def min(self) -> float:
        return float(self.per_partition.min())

    @property
    def imbalance(self) -> float:
        return self.max / self.min if self.min > 0 else float("inf")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "dims": self.dims,
            "per_layer": self.per_layer.tolist(),
            "per_partition": self.per_partition.tolist(),
            "total": self.total,
            "max": self.max,
            "min": self.min,
            "imbalance": self.imbalance,
        }


@dataclass
class RatioStats:
    ratios: List[float]
    max: float
    min: float
    q1: float
    median: float
    q3: float
    straggler: int  # partition with the largest boundary/inner ratio

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def build_plan(graph: Graph, assignment: Assignment) -> PartitionPlan:
    if len(assignment.part_of) != graph.num_nodes:
        raise ValueError(f"assignment covers {len(assignment.part_of)} nodes, graph has {graph.num_nodes}")
    m = assignment.num_parts
    owner = assignment.part_of
    src_part = owner[graph.entry_rows]
    dst_part = owner[graph.csr_targets]
    cross = src_part != dst_part

    # Unique (partition, external neighbour) pairs, sorted by partition then node id.
    pairs = np.unique(src_part[cross] * graph.num_nodes + graph.csr_targets[cross])
    needing_part = pairs // max(graph.num_nodes, 1)
    nodes = pairs % max(graph.num_nodes, 1)
    bounds = np.searchsorted(needing_part, np.arange(m + 1))

    inner = [assignment.members(i) for i in range(m)]
    boundary = [nodes[bounds[i]:bounds[i + 1]] for i in range(m)]
    demand = [[b[owner[b] == j] for j in range(m)] for b in boundary]

    plan = PartitionPlan(num_parts=m, owner=owner, inner=inner, boundary=boundary, demand=demand)
    logger.info(f"Built {plan}")
    return plan


def comm_volume(plan: PartitionPlan) -> CommVolume:
    """Rows exchanged by one full-boundary propagation: total = Σ_i |B_i|."""
    per_partition = [
        int(sum(len(plan.send_set(i, j)) for j in range(plan.num_parts)))
        for i in range(plan.num_parts)
    ]
    return CommVolume(total=int(plan.boundary_sizes.sum()), per_partition=per_partition)


def edgewise_volume(graph: Graph, assignment: Assignment) -> int:
    """Σ_v D(v), D(v) = number of other partitions where v has a neighbour."""
    owner = assignment.part_of
    rows, cols = graph.entry_rows, graph.csr_targets
    cross = owner[rows] != owner[cols]
    distinct = np.unique(rows[cross] * assignment.num_parts + owner[cols[cross]])
    return int(len(distinct))


def edge_cut(graph: Graph, assignment: Assignment) -> int:
    """Undirected edges whose endpoints live in different partitions."""
    edges = graph.edges()
    owner = assignment.part_of
    return int(np.count_nonzero(owner[edges[:, 0]] != owner[edges[:, 1]]))


def layer_memory_scalars(n_inner: float, n_boundary: float, dim: int) -> float:
    return (3 * n_inner + n_boundary) * dim


def memory_estimate(plan: PartitionPlan, layer_dims: Sequence[int], p: float = 1.0) -> MemoryEstimate:
    """
    Per-partition, per-layer scalar counts of features, activations and
    gradients. At sampling rate ``p`` the boundary term is its expectation
    p·|B_i|.
    """
    dims = [int(d) for d in layer_dims]
    if any(d <= 0 for d in dims):
        raise ValueError(f"layer dims must be positive, got {dims}")
    n_inner = plan.inner_sizes.astype(np.float64)[:, None]
    n_boundary = p * plan.boundary_sizes.astype(np.float64)[:, None]
    per_layer = layer_memory_scalars(n_inner, n_boundary, np.asarray(dims, dtype=np.float64)[None, :])
    return MemoryEstimate(p=p, dims=dims, per_layer=per_layer, per_partition=per_layer.sum(axis=1))


def boundary_inner_ratios(plan: PartitionPlan) -> RatioStats:
    ratios = plan.boundary_sizes / plan.inner_sizes
    q1, median, q3 = np.quantile(ratios, [0.25, 0.5, 0.75])
    return RatioStats(
        ratios=ratios.tolist(),
        max=float(ratios.max()),
        min=float(ratios.min()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        straggler=int(np.argmax(ratios)),
    )
