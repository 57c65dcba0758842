"""
Node-to-partition assignment.

Two regimes: a uniformly random balanced split, and a streaming greedy
heuristic that places each node (in BFS order) where most of its already
placed neighbours live, subject to a size cap. Assignments produced
elsewhere (e.g. by METIS) can be imported from a file.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import List, Union

import numpy as np
from scipy.sparse.csgraph import breadth_first_order

from .errors import PartitionError
from .graph import Graph
from .util import STREAM_PARTITION, rng_for

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Assignment:
    part_of: np.ndarray
    num_parts: int

    def __post_init__(self):
        part_of = np.asarray(self.part_of, dtype=np.int64)
        object.__setattr__(self, "part_of", part_of)
        if self.num_parts < 1:
            raise PartitionError(f"num_parts must be at least 1, got {self.num_parts}")
        if part_of.size and (part_of.min() < 0 or part_of.max() >= self.num_parts):
            raise PartitionError(f"partition ids must lie in [0, {self.num_parts})")
        empty = np.flatnonzero(self.sizes == 0)
        if empty.size:
            raise PartitionError(f"partition {empty[0]} is empty")

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.part_of, minlength=self.num_parts)

    def members(self, part: int) -> np.ndarray:
        return np.flatnonzero(self.part_of == part)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Assignment) and self.num_parts == other.num_parts
                and np.array_equal(self.part_of, other.part_of))

    def __str__(self) -> str:
        return f"Assignment(parts={self.num_parts}, sizes={self.sizes.tolist()})"


def _check_parts(graph: Graph, m: int) -> None:
    if m < 1 or m > graph.num_nodes:
        raise PartitionError(f"partition count {m} out of range [1, {graph.num_nodes}]")


def partition_random(graph: Graph, m: int, seed: int = 0) -> Assignment:
    """Random balanced split; sizes differ by at most one."""
    _check_parts(graph, m)
    order = rng_for(seed, STREAM_PARTITION).permutation(graph.num_nodes)
    part_of = np.empty(graph.num_nodes, dtype=np.int64)
    part_of[order] = np.arange(graph.num_nodes) % m
    return Assignment(part_of, m)


def _bfs_order(graph: Graph, rng: np.random.Generator) -> np.ndarray:
    """Visit every component in BFS order, each rooted at a random minimum-degree node."""
    adjacency = graph.adjacency
    degrees = graph.degrees
    visited = np.zeros(graph.num_nodes, dtype=bool)
    chunks: List[np.ndarray] = []
    # Components are entered in a random order so no id range is favoured.
    for candidate in rng.permutation(graph.num_nodes):
        if visited[candidate]:
            continue
        component = breadth_first_order(adjacency, candidate, directed=False, return_predecessors=False)
        comp_deg = degrees[component]
        peripheral = component[comp_deg == comp_deg.min()]
        root = int(rng.choice(np.sort(peripheral)))
        order = breadth_first_order(adjacency, root, directed=False, return_predecessors=False)
        visited[order] = True
        chunks.append(order)
    return np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)


def partition_greedy(graph: Graph, m: int, slack: float = 0.0, seed: int = 0,
                     penalty: float = 1.0) -> Assignment:
    """
    Streaming greedy partition minimising boundary nodes under a size cap.

    Each node goes to the partition maximising
    ``placed neighbours there - penalty * size / cap``; ties go to the lowest
    partition id. The cap is ``ceil((1 + slack) * n / m)``. With ``slack == 0``
    every partition also keeps at least ``floor(n / m)`` nodes, so sizes differ
    by at most one; otherwise every partition keeps at least one node.
    """
    _check_parts(graph, m)
    if slack < 0:
        raise PartitionError(f"slack must be non-negative, got {slack}")
    n = graph.num_nodes
    cap = math.ceil((1.0 + slack) * n / m)
    if cap * m < n:
        raise PartitionError(f"capacity {cap} x {m} partitions cannot hold {n} nodes")
    floor_size = n // m if slack == 0 else 1

    rng = rng_for(seed, STREAM_PARTITION)
    part_of = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(m, dtype=np.int64)
    deficit = m * floor_size
    unplaced = n

    for v in _bfs_order(graph, rng):
        neigh_parts = part_of[graph.neighbors(v)]
        placed = np.bincount(neigh_parts[neigh_parts >= 0], minlength=m)
        score = placed - penalty * sizes / cap
        below_floor = sizes < floor_size
        # A partition already at its floor may only grow if the remaining nodes still cover every deficit.
        allowed = (sizes < cap) & (below_floor | (unplaced - 1 >= deficit))
        score = np.where(allowed, score, -np.inf)
        best = int(np.argmax(score))
        part_of[v] = best
        if below_floor[best]:
            deficit -= 1
        sizes[best] += 1
        unplaced -= 1

    logger.info(f"Greedy partition of {n} nodes into {m} parts, sizes {sizes.tolist()}")
    return Assignment(part_of, m)


def load_assignment(path: Union[str, os.PathLike], num_nodes: int) -> Assignment:
    """Read one partition id per line."""
    with open(path) as f:
        lines = [line.strip() for line in f if line.strip()]
    if len(lines) != num_nodes:
        raise PartitionError(f"{path}: expected {num_nodes} lines, found {len(lines)}")
    try:
        part_of = np.array([int(line) for line in lines], dtype=np.int64)
    except ValueError as e:
        raise PartitionError(f"{path}: non-integer partition id: {e}")
    if part_of.size and part_of.min() < 0:
        raise PartitionError(f"{path}: negative partition id {part_of.min()}")
    num_parts = int(part_of.max()) + 1 if part_of.size else 1
    return Assignment(part_of, num_parts)


def save_assignment(assignment: Assignment, path: Union[str, os.PathLike]) -> None:
    np.savetxt(path, assignment.part_of, fmt="%d")
