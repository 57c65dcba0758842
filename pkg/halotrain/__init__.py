from .errors import (DatasetError, DivergenceError, GraphError, HalotrainError, PartitionError, ProtocolError,
                     UsageError, VarianceBoundError)
from .types import EpochMetrics, Precision, SamplerKind, TrainConfig
from .graph import Graph, SubgraphWithHalo, build_graph, full_subgraph, induced_subgraph
from .partition import Assignment, load_assignment, partition_greedy, partition_random, save_assignment
from .plan import (CommVolume, MemoryEstimate, PartitionPlan, RatioStats, boundary_inner_ratios, build_plan,
                   comm_volume, edge_cut, edgewise_volume, memory_estimate)
from .sampler import (EdgeMask, EpochSamplePlan, drop_edge_global, sample_boundary, sample_boundary_edges,
                      sample_drop_edge)
from .nn import (AdamState, LayerParams, PropagationMatrix, adam_step, dropout, gcn_propagate, sage_backward,
                 sage_forward, softmax_xent)
from .wire import MessageTag, WireMessage, decode, encode, encoded_size
from .runtime import (Mailbox, TrainResult, allreduce, compare_to_reference, evaluate, exchange_features,
                      exchange_gradients, train, train_async, train_reference, write_metrics)
from .variance import VarianceReport, closed_form_variance, enumerate_variance, estimate_variance, variance_sweep
from .data import SbmSpec, generate_sbm, load_dataset, save_dataset
from .experiments import bench, compare_samplers, p_study

__all__ = [
    # Errors
    "HalotrainError", "GraphError", "PartitionError", "DatasetError", "ProtocolError", "DivergenceError",
    "VarianceBoundError", "UsageError",

    # Configuration and records
    "TrainConfig", "Precision", "SamplerKind", "EpochMetrics",

    # Graph storage and partitioning
    "Graph", "SubgraphWithHalo", "build_graph", "induced_subgraph", "full_subgraph",
    "Assignment", "partition_random", "partition_greedy", "load_assignment", "save_assignment",
    "PartitionPlan", "CommVolume", "MemoryEstimate", "RatioStats", "build_plan", "comm_volume",
    "edgewise_volume", "edge_cut", "memory_estimate", "boundary_inner_ratios",

    # Sampling
    "EpochSamplePlan", "EdgeMask", "sample_boundary", "sample_boundary_edges", "sample_drop_edge",
    "drop_edge_global",

    # Model
    "LayerParams", "AdamState", "PropagationMatrix", "sage_forward", "sage_backward", "gcn_propagate",
    "softmax_xent", "adam_step", "dropout",

    # Runtime
    "MessageTag", "WireMessage", "encode", "decode", "encoded_size",
    "Mailbox", "TrainResult", "train", "train_async", "train_reference", "compare_to_reference", "evaluate",
    "exchange_features", "exchange_gradients", "allreduce", "write_metrics",

    # Analysis and experiments
    "VarianceReport", "estimate_variance", "closed_form_variance", "enumerate_variance", "variance_sweep",
    "SbmSpec", "generate_sbm", "load_dataset", "save_dataset",
    "compare_samplers", "bench", "p_study",
]
