"""
Datasets: synthetic stochastic block models and the on-disk directory format.

A dataset directory holds

    edges.tsv     two node ids per line (each undirected edge once, u < v)
    features.csv  one comma-separated feature row per node, no header
    labels.txt    one class id per line
    split.txt     one of train / val / test / none per line
"""

import logging
import os
from pathlib import Path
from typing import List, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from .errors import DatasetError, GraphError
from .graph import Graph, build_graph
from .util import STREAM_DATA, rng_for

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
UNASSIGNED = "none"


class SbmSpec(BaseModel):
    blocks: int = Field(2, ge=1)
    nodes_per_block: int = Field(100, ge=1)
    p_in: float = Field(0.05, ge=0.0, le=1.0)
    p_out: float = Field(0.005, ge=0.0, le=1.0)
    feature_dim: int = Field(16, ge=1)
    mean_scale: float = Field(1.0, ge=0.0)  # std of the per-block mean vectors; noise is unit
    train_frac: float = Field(0.6, ge=0.0, le=1.0)
    val_frac: float = Field(0.2, ge=0.0, le=1.0)
    test_frac: float = Field(0.2, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_fractions(self) -> "SbmSpec":
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")
        return self

    @property
    def num_nodes(self) -> int:
        return self.blocks * self.nodes_per_block

    def expected_edges(self) -> float:
        k, s = self.blocks, self.nodes_per_block
        within = k * s * (s - 1) / 2 * self.p_in
        cross = k * (k - 1) / 2 * s * s * self.p_out
        return within + cross


def generate_sbm(spec: SbmSpec, seed: int = 0) -> Graph:
    """Labels are block ids; features are block means plus unit Gaussian noise."""
    sizes = [spec.nodes_per_block] * spec.blocks
    probs = [[spec.p_in if a == b else spec.p_out for b in range(spec.blocks)] for a in range(spec.blocks)]
    nx_seed = int(rng_for(seed, STREAM_DATA, 0).integers(2 ** 31 - 1))
    sbm = nx.stochastic_block_model(sizes, probs, seed=nx_seed)
    edges = np.array(list(sbm.edges()), dtype=np.int64).reshape(-1, 2)

    n = spec.num_nodes
    labels = np.repeat(np.arange(spec.blocks), spec.nodes_per_block)
    means = rng_for(seed, STREAM_DATA, 1).normal(0.0, spec.mean_scale, size=(spec.blocks, spec.feature_dim))
    features = means[labels] + rng_for(seed, STREAM_DATA, 2).standard_normal((n, spec.feature_dim))

    order = rng_for(seed, STREAM_DATA, 3).permutation(n)
    n_train = int(round(spec.train_frac * n))
    n_val = min(int(round(spec.val_frac * n)), n - n_train)
    masks = [np.zeros(n, dtype=bool) for _ in SPLITS]
    masks[0][order[:n_train]] = True
    masks[1][order[n_train:n_train + n_val]] = True
    masks[2][order[n_train + n_val:]] = True

    graph = build_graph(edges, n, features, labels, tuple(masks))
    logger.info(f"Generated SBM {graph} with {spec.blocks} blocks")
    return graph


def _records(path: Path) -> List[Tuple[int, List[str]]]:
    with open(path) as f:
        return [(lineno, line.split()) for lineno, line in enumerate(f, start=1) if line.strip()]


def load_dataset(directory: Union[str, os.PathLike]) -> Graph:
    directory = Path(directory)
    for name in ("edges.tsv", "features.csv", "labels.txt", "split.txt"):
        if not (directory / name).is_file():
            raise DatasetError(f"{directory}: missing {name}")

    try:
        frame = pd.read_csv(directory / "features.csv", header=None, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{directory / 'features.csv'}: no feature rows")
    except pd.errors.ParserError as e:
        raise DatasetError(f"{directory / 'features.csv'}: {e}")
    if not all(pd.api.types.is_numeric_dtype(t) for t in frame.dtypes) or frame.isna().any().any():
        raise DatasetError(f"{directory / 'features.csv'}: non-numeric or missing feature values")
    features = frame.to_numpy(dtype=np.float64)
    num_nodes = features.shape[0]

    edges = []
    for lineno, fields in _records(directory / "edges.tsv"):
        if len(fields) != 2:
            raise DatasetError(f"{directory / 'edges.tsv'}:{lineno}: expected two node ids, got {len(fields)} fields")
        try:
            edges.append((int(fields[0]), int(fields[1])))
        except ValueError:
            raise DatasetError(f"{directory / 'edges.tsv'}:{lineno}: non-integer node id")

    labels = []
    for lineno, fields in _records(directory / "labels.txt"):
        if len(fields) != 1:
            raise DatasetError(f"{directory / 'labels.txt'}:{lineno}: expected one label, got {len(fields)} fields")
        try:
            labels.append(int(fields[0]))
        except ValueError:
            raise DatasetError(f"{directory / 'labels.txt'}:{lineno}: non-integer label '{fields[0]}'")
    if len(labels) != num_nodes:
        raise DatasetError(f"{directory / 'labels.txt'}: {len(labels)} labels for {num_nodes} nodes")

    split = []
    for lineno, fields in _records(directory / "split.txt"):
        if len(fields) != 1:
            raise DatasetError(f"{directory / 'split.txt'}:{lineno}: expected one split name, got {len(fields)} fields")
        if fields[0] not in SPLITS + (UNASSIGNED,):
            raise DatasetError(f"{directory / 'split.txt'}:{lineno}: unknown split '{fields[0]}'")
        split.append(fields[0])
    if len(split) != num_nodes:
        raise DatasetError(f"{directory / 'split.txt'}: {len(split)} entries for {num_nodes} nodes")
    split = np.array(split)

    try:
        graph = build_graph(edges, num_nodes, features, labels, tuple(split == s for s in SPLITS))
    except GraphError as e:
        raise DatasetError(f"{directory}: {e}") from e
    logger.info(f"Loaded {graph} from {directory}")
    return graph


def save_dataset(graph: Graph, directory: Union[str, os.PathLike]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "edges.tsv", graph.edges(), fmt="%d", delimiter="\t")
    pd.DataFrame(graph.features).to_csv(directory / "features.csv", header=False, index=False)
    np.savetxt(directory / "labels.txt", graph.labels, fmt="%d")
    split = np.full(graph.num_nodes, UNASSIGNED, dtype=object)
    for name, mask in zip(SPLITS, (graph.train_mask, graph.val_mask, graph.test_mask)):
        split[mask] = name
    (directory / "split.txt").write_text("".join(f"{s}\n" for s in split))
