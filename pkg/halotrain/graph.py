"""
Immutable graph storage and per-partition subgraph extraction.

Graphs are undirected: adjacency is symmetric, self-loops and duplicate edges
are dropped at construction, and every CSR row lists its neighbours in
ascending id order.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import GraphError


@dataclass(frozen=True, eq=False)
class Graph:
    """CSR adjacency plus node features, labels and train/val/test masks."""
    num_nodes: int
    csr_offsets: np.ndarray
    csr_targets: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.csr_targets), dtype=np.float64)
        return sp.csr_matrix(
            (data, self.csr_targets, self.csr_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )

    @cached_property
    def entry_rows(self) -> np.ndarray:
        """Source node of every CSR entry."""
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)

    @cached_property
    def edge_ids(self) -> np.ndarray:
        """Undirected edge id of every CSR entry; (u, v) and (v, u) share one id."""
        rows, cols = self.entry_rows, self.csr_targets
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        keys = lo * self.num_nodes + hi
        upper = rows < cols
        return np.searchsorted(keys[upper], keys)

    @property
    def num_edges(self) -> int:
        return len(self.csr_targets) // 2

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.num_nodes else 0

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_targets[self.csr_offsets[v]:self.csr_offsets[v + 1]]

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with u < v, sorted."""
        upper = self.entry_rows < self.csr_targets
        return np.stack([self.entry_rows[upper], self.csr_targets[upper]], axis=1)

    def __str__(self) -> str:
        return f"Graph(nodes={self.num_nodes}, edges={self.num_edges}, dim={self.feature_dim})"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def build_graph(
    edge_list: Iterable[Tuple[int, int]],
    num_nodes: int,
    features: Optional[np.ndarray] = None,
    labels: Optional[Sequence[int]] = None,
    masks: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
) -> Graph:
    """Symmetrise, deduplicate and sort an edge list into a Graph."""
    if num_nodes < 0:
        raise GraphError(f"num_nodes must be non-negative, got {num_nodes}")

    if not isinstance(edge_list, np.ndarray):
        edge_list = list(edge_list)
    edges = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        bad = edges[(edges < 0) | (edges >= num_nodes)][0]
        raise GraphError(f"node id {bad} out of range for {num_nodes} nodes")

    edges = edges[edges[:, 0] != edges[:, 1]]
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    keys = np.unique(src * num_nodes + dst) if num_nodes else np.empty(0, dtype=np.int64)
    src, dst = keys // max(num_nodes, 1), keys % max(num_nodes, 1)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=num_nodes), out=offsets[1:])

    if features is None:
        features = np.zeros((num_nodes, 1))
    features = np.array(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    if features.ndim != 2 or features.shape[0] != num_nodes:
        raise GraphError(f"features have {features.shape[0]} rows, expected {num_nodes}")

    labels = np.zeros(num_nodes, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    if labels.shape != (num_nodes,):
        raise GraphError(f"labels have length {len(labels)}, expected {num_nodes}")
    if labels.size and labels.min() < 0:
        raise GraphError("labels must be non-negative class ids")

    if masks is None:
        masks = tuple(np.zeros(num_nodes, dtype=bool) for _ in range(3))
    train, val, test = (np.asarray(m, dtype=bool) for m in masks)
    for name, mask in (("train", train), ("val", val), ("test", test)):
        if mask.shape != (num_nodes,):
            raise GraphError(f"{name} mask has length {len(mask)}, expected {num_nodes}")
    if np.any((train & val) | (train & test) | (val & test)):
        raise GraphError("train/val/test masks must be pairwise disjoint")

    return Graph(
        num_nodes=num_nodes,
        csr_offsets=_frozen(offsets),
        csr_targets=_frozen(dst.astype(np.int64)),
        features=_frozen(features),
        labels=_frozen(labels),
        train_mask=_frozen(train.copy()),
        val_mask=_frozen(val.copy()),
        test_mask=_frozen(test.copy()),
    )


def row_entries(offsets: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """CSR entry positions of the given rows, concatenated in row order."""
    starts = offsets[rows]
    counts = offsets[rows + 1] - starts
    if counts.sum() == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(counts)
    return np.arange(ends[-1]) - np.repeat(ends - counts, counts) + np.repeat(starts, counts)


@dataclass(frozen=True, eq=False)
class SubgraphWithHalo:
    """
    Rows for one partition's inner nodes; columns over inner then halo nodes.

    Local index layout is inner nodes (ascending global id) followed by halo
    nodes (ascending global id), so a feature stack [H; H_U] lines up with
    the columns of ``local_csr``. Entries carry edge weights (1.0 unless an
    edge sampler rescaled them).
    """
    owner_partition: int
    inner_ids: np.ndarray
    halo_ids: np.ndarray
    local_csr: sp.csr_matrix
    full_degree: np.ndarray

    @property
    def num_inner(self) -> int:
        return len(self.inner_ids)

    @property
    def num_local(self) -> int:
        return len(self.inner_ids) + len(self.halo_ids)

    @property
    def global_ids(self) -> np.ndarray:
        return np.concatenate([self.inner_ids, self.halo_ids])

    @cached_property
    def global_to_local(self) -> Dict[int, int]:
        return {int(g): i for i, g in enumerate(self.global_ids)}

    def to_local(self, ids: np.ndarray) -> np.ndarray:
        """Vectorised global -> local index lookup."""
        ids = np.asarray(ids, dtype=np.int64)
        in_pos = np.searchsorted(self.inner_ids, ids)
        is_inner = (in_pos < self.num_inner) & (self.inner_ids[np.minimum(in_pos, self.num_inner - 1)] == ids) \
            if self.num_inner else np.zeros(len(ids), dtype=bool)
        halo_pos = np.searchsorted(self.halo_ids, ids)
        n_halo = len(self.halo_ids)
        is_halo = (halo_pos < n_halo) & (self.halo_ids[np.minimum(halo_pos, n_halo - 1)] == ids) \
            if n_halo else np.zeros(len(ids), dtype=bool)
        if not np.all(is_inner | is_halo):
            missing = ids[~(is_inner | is_halo)][0]
            raise GraphError(f"node {missing} is not in partition {self.owner_partition}'s subgraph")
        return np.where(is_inner, in_pos, self.num_inner + halo_pos)


def induced_subgraph(
    graph: Graph,
    inner_ids: Sequence[int],
    halo_ids: Sequence[int],
    owner_partition: int = 0,
    edge_keep: Optional[np.ndarray] = None,
    edge_weight: Optional[np.ndarray] = None,
) -> SubgraphWithHalo:
    """
    Node-induced subgraph of inner ∪ halo with rows only for inner nodes.

    ``edge_keep`` and ``edge_weight`` are optional per-CSR-entry arrays used by
    edge samplers: dropped entries are left out, kept ones carry their weight.
    """
    inner = np.unique(np.asarray(inner_ids, dtype=np.int64))
    halo = np.unique(np.asarray(halo_ids, dtype=np.int64))
    for ids in (inner, halo):
        if ids.size and (ids[0] < 0 or ids[-1] >= graph.num_nodes):
            raise GraphError(f"node ids must lie in [0, {graph.num_nodes})")
    if np.intersect1d(inner, halo).size:
        raise GraphError("inner and halo node sets overlap")

    n_inner = len(inner)
    lookup = np.full(graph.num_nodes, -1, dtype=np.int64)
    lookup[inner] = np.arange(n_inner)
    lookup[halo] = n_inner + np.arange(len(halo))

    pos = row_entries(graph.csr_offsets, inner)
    rows = np.repeat(np.arange(n_inner), graph.degrees[inner])
    cols = lookup[graph.csr_targets[pos]]

    reached = np.zeros(len(halo), dtype=bool)
    reached[cols[cols >= n_inner] - n_inner] = True
    if not reached.all():
        raise GraphError(f"halo node {halo[~reached][0]} has no neighbour among the inner nodes")

    keep = cols >= 0
    if edge_keep is not None:
        keep &= edge_keep[pos]
    weights = np.ones(int(keep.sum())) if edge_weight is None else edge_weight[pos][keep]

    local = sp.csr_matrix((weights, (rows[keep], cols[keep])), shape=(n_inner, n_inner + len(halo)))
    local.sort_indices()
    return SubgraphWithHalo(
        owner_partition=owner_partition,
        inner_ids=inner,
        halo_ids=halo,
        local_csr=local,
        full_degree=graph.degrees[inner].copy(),
    )


def full_subgraph(graph: Graph) -> SubgraphWithHalo:
    """The whole graph as a single partition with no halo."""
    return induced_subgraph(graph, np.arange(graph.num_nodes), np.empty(0, dtype=np.int64))
