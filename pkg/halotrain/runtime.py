"""
Synchronous partition-parallel training.

One coroutine per partition runs every epoch in lockstep: sample the halo,
broadcast the selection, then per layer exchange boundary rows and run the
local layer, exchange halo gradients on the way back, average the weight
gradients and apply the same Adam step everywhere. Workers share nothing
mutable; all cross-worker data moves through the mailbox.
"""

import asyncio
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .errors import DivergenceError, ProtocolError
from .graph import Graph, SubgraphWithHalo, full_subgraph, induced_subgraph
from .nn import (AdamState, LayerParams, SageCache, accuracy, adam_step, backward_full, flatten,
                 forward_full, init_layers, node_dropout_scale, sage_backward, sage_forward,
                 softmax_xent, unflatten)
from .plan import PartitionPlan, layer_memory_scalars
from .sampler import (EpochSamplePlan, derive_send_lists, edge_mask_for, halo_from_edges,
                      sample_partition_boundary)
from .types import EpochMetrics, SamplerKind, TrainConfig
from .util import PhaseTimer
from .wire import MessageTag, WireMessage, decode, encode, encoded_size

logger = logging.getLogger(__name__)


@dataclass
class ModelState:
    layers: List[LayerParams]
    adam: AdamState

    @classmethod
    def initial(cls, dims: Sequence[int], config: TrainConfig) -> "ModelState":
        layers = init_layers(dims, config.seed, config.dtype)
        return cls(layers=layers, adam=AdamState.zeros_like(flatten(layers)))

    def tensors(self) -> List[np.ndarray]:
        return flatten(self.layers)


class Mailbox:
    """
    Ordered channels for every (src, dst) pair plus a shared barrier.

    Messages within a pair are delivered in send order. Receives and barrier
    waits give up after ``timeout`` seconds and raise ProtocolError.
    """

    def __init__(self, num_parts: int, timeout: float = 30.0, serialize: bool = False,
                 dtype: np.dtype = np.dtype(np.float64)):
        self.num_parts = num_parts
        self.timeout = timeout
        self.serialize = serialize
        self.dtype = np.dtype(dtype)
        self.channels: Dict[Tuple[int, int], asyncio.Queue] = {
            (src, dst): asyncio.Queue()
            for src in range(num_parts) for dst in range(num_parts) if src != dst
        }
        self.barrier = asyncio.Barrier(num_parts)
        self.bytes_sent = [0] * num_parts
        self.messages_sent = [0] * num_parts

    async def send(self, msg: WireMessage) -> None:
        if msg.src == msg.dst:
            raise ProtocolError(f"partition {msg.src} tried to message itself")
        self.bytes_sent[msg.src] += encoded_size(msg, self.dtype.itemsize)
        self.messages_sent[msg.src] += 1
        item = encode(msg) if self.serialize else msg
        await self.channels[(msg.src, msg.dst)].put(item)

    async def recv(self, src: int, dst: int, tag: MessageTag, epoch: int, layer: int = 0,
                   cols: int = 1) -> WireMessage:
        try:
            item = await asyncio.wait_for(self.channels[(src, dst)].get(), self.timeout)
        except asyncio.TimeoutError:
            raise ProtocolError(f"partition {dst} timed out waiting for {tag.name} from {src} "
                                f"(epoch {epoch}, layer {layer})")
        msg = decode(item, self.dtype, cols) if isinstance(item, bytes) else item
        if msg.tag is not tag or msg.epoch != epoch or msg.layer != layer:
            raise ProtocolError(f"partition {dst} expected {tag.name}(epoch={epoch}, layer={layer}) "
                                f"from {src}, got {msg}")
        return msg

    async def wait(self, rank: int, phase: str) -> None:
        try:
            await asyncio.wait_for(self.barrier.wait(), self.timeout)
        except (asyncio.TimeoutError, asyncio.BrokenBarrierError):
            raise ProtocolError(f"partition {rank} stuck at barrier '{phase}'")

    def take_bytes(self) -> int:
        total = sum(self.bytes_sent)
        self.bytes_sent = [0] * self.num_parts
        return total

    def pending(self) -> int:
        return sum(q.qsize() for q in self.channels.values())


# Collective operations

async def broadcast_selection(mailbox: Mailbox, rank: int, epoch: int, selected: np.ndarray) -> List[np.ndarray]:
    """Send U_rank to everyone; return [U_0, ..., U_{m-1}]."""
    for dst in range(mailbox.num_parts):
        if dst != rank:
            await mailbox.send(WireMessage(MessageTag.INDEX_SETS, epoch, 0, rank, dst, selected))
    gathered = []
    for src in range(mailbox.num_parts):
        if src == rank:
            gathered.append(selected)
        else:
            msg = await mailbox.recv(src, rank, MessageTag.INDEX_SETS, epoch)
            gathered.append(np.asarray(msg.payload, dtype=np.int64))
    return gathered


async def exchange_features(mailbox: Mailbox, rank: int, sample_plan: EpochSamplePlan, layer: int,
                            H_inner: np.ndarray, inner_ids: np.ndarray) -> Tuple[np.ndarray, int]:
    """
    Ship S_{rank,j} rows to every j and collect U_rank rows, ordered by
    (source partition, global id). Returns the rows and the floats sent.
    """
    sent = 0
    for dst in range(mailbox.num_parts):
        ids = sample_plan.send[rank][dst]
        if dst == rank or not len(ids):
            continue
        rows = H_inner[np.searchsorted(inner_ids, ids)]
        await mailbox.send(WireMessage(MessageTag.LAYER_FEATURES, sample_plan.epoch, layer, rank, dst, rows))
        sent += rows.size

    parts = []
    for src in range(mailbox.num_parts):
        ids = sample_plan.recv_set(rank, src)
        if src == rank or not len(ids):
            continue
        msg = await mailbox.recv(src, rank, MessageTag.LAYER_FEATURES, sample_plan.epoch, layer, H_inner.shape[1])
        if msg.rows != len(ids):
            raise ProtocolError(f"partition {rank} got {msg.rows} feature rows from {src}, expected {len(ids)}")
        parts.append(msg.payload)
    halo = np.vstack(parts) if parts else np.empty((0, H_inner.shape[1]), dtype=H_inner.dtype)
    return halo, sent


async def exchange_gradients(mailbox: Mailbox, rank: int, sample_plan: EpochSamplePlan, layer: int,
                             G_halo: np.ndarray, G_inner: np.ndarray, inner_ids: np.ndarray) -> Tuple[np.ndarray, int]:
    """
    Return halo-row gradients to their owners and add the ones received
    into ``G_inner`` in source-partition order. ``G_halo`` rows follow the
    (source partition, global id) order of ``exchange_features``.
    """
    sent = 0
    offset = 0
    for dst in range(mailbox.num_parts):
        count = len(sample_plan.recv_set(rank, dst)) if dst != rank else 0
        if count:
            rows = G_halo[offset:offset + count]
            await mailbox.send(WireMessage(MessageTag.LAYER_GRADS, sample_plan.epoch, layer, rank, dst, rows))
            sent += rows.size
        offset += count
    if offset != len(G_halo):
        raise ProtocolError(f"partition {rank} holds {len(G_halo)} halo gradient rows, plan expects {offset}")

    accumulated = G_inner.copy()
    for src in range(mailbox.num_parts):
        ids = sample_plan.send[rank][src]
        if src == rank or not len(ids):
            continue
        msg = await mailbox.recv(src, rank, MessageTag.LAYER_GRADS, sample_plan.epoch, layer, G_inner.shape[1])
        if msg.rows != len(ids):
            raise ProtocolError(f"partition {rank} got {msg.rows} gradient rows from {src}, expected {len(ids)}")
        accumulated[np.searchsorted(inner_ids, ids)] += msg.payload
    return accumulated, sent


async def allreduce(mailbox: Mailbox, rank: int, epoch: int, tensors: Sequence[np.ndarray]) -> Tuple[List[np.ndarray], int]:
    """Mean of every worker's tensors, summed in partition order so all workers agree bit for bit."""
    m = mailbox.num_parts
    sent = 0
    for dst in range(m):
        if dst == rank:
            continue
        for index, t in enumerate(tensors):
            await mailbox.send(WireMessage(MessageTag.REDUCE_CHUNK, epoch, index, rank, dst, t.ravel()))
            sent += t.size

    received: Dict[int, List[np.ndarray]] = {}
    for src in range(m):
        if src == rank:
            continue
        chunks = []
        for index, t in enumerate(tensors):
            msg = await mailbox.recv(src, rank, MessageTag.REDUCE_CHUNK, epoch, index)
            if msg.payload.size != t.size:
                raise ProtocolError(f"reduce chunk {index} from {src} has {msg.payload.size} values, "
                                    f"expected {t.size}")
            chunks.append(msg.payload.reshape(t.shape))
        received[src] = chunks

    means = []
    for index, t in enumerate(tensors):
        total = np.zeros_like(t)
        for src in range(m):
            total += t if src == rank else received[src][index]
        means.append(total / m)
    return means, sent


# Workers

@dataclass
class WorkerEpoch:
    loss: float
    floats_sent: int = 0
    index_ints_sent: int = 0
    reduce_floats: int = 0
    halo_size: int = 0
    mem_scalars: float = 0.0
    timings: Dict[str, float] = field(default_factory=dict)


class Worker:
    """One partition's view of training."""

    def __init__(self, rank: int, graph: Graph, plan: PartitionPlan, config: TrainConfig, mailbox: Mailbox,
                 dims: Sequence[int]):
        self.rank = rank
        self.graph = graph
        self.plan = plan
        self.config = config
        self.mailbox = mailbox
        self.dims = list(dims)
        self.state = ModelState.initial(dims, config)
        self.inner_ids = plan.inner[rank]
        self.features = graph.features[self.inner_ids].astype(config.dtype)
        self.labels = graph.labels[self.inner_ids]
        self.train_mask = graph.train_mask[self.inner_ids]
        # Local losses are scaled so that the mean over workers is the full-graph mean loss.
        total_train = int(graph.train_mask.sum())
        self.loss_normalizer = max(total_train, 1) / plan.num_parts
        self.barriers_passed = 0
        self.timer = PhaseTimer()
        self.logger = logging.getLogger(f"{__name__}.worker{rank}")

    async def _barrier(self, phase: str) -> None:
        await self.mailbox.wait(self.rank, phase)
        self.barriers_passed += 1

    def _select(self, epoch: int):
        cfg = self.config
        if cfg.sampler is SamplerKind.BNS:
            return sample_partition_boundary(self.plan, self.rank, cfg.p, epoch, cfg.seed), None
        mask = edge_mask_for(cfg.sampler, self.graph, self.plan, cfg.edge_rate, epoch, cfg.seed)
        return halo_from_edges(self.graph, self.plan, mask.keep, self.rank), mask

    def _verify(self, epoch: int, selected: List[np.ndarray]) -> None:
        for part, received in enumerate(selected):
            if part == self.rank or self.config.sampler is not SamplerKind.BNS:
                continue
            expected = sample_partition_boundary(self.plan, part, self.config.p, epoch, self.config.seed)
            if not np.array_equal(expected, received):
                raise ProtocolError(f"partition {self.rank}: broadcast selection of {part} at epoch {epoch} "
                                    f"does not match recomputation")

    async def run_epoch(self, epoch: int) -> WorkerEpoch:
        cfg = self.config
        timer = self.timer
        timer.reset()
        num_layers = len(self.state.layers)
        result = WorkerEpoch(loss=0.0)

        with timer.phase("epoch"):
            with timer.phase("sample"):
                own, edge_mask = self._select(epoch)
            with timer.phase("comm"):
                selected = await broadcast_selection(self.mailbox, self.rank, epoch, own)
            result.index_ints_sent = len(own) * (self.plan.num_parts - 1)
            if cfg.verify_broadcast:
                self._verify(epoch, selected)

            with timer.phase("comp"):
                sample_plan = EpochSamplePlan(
                    epoch=epoch,
                    rate=cfg.p if cfg.sampler is SamplerKind.BNS else cfg.edge_rate,
                    selected=selected,
                    send=derive_send_lists(self.plan, selected),
                    kind=cfg.sampler,
                    edge_keep=None if edge_mask is None else edge_mask.keep,
                    edge_weight=None if edge_mask is None else edge_mask.weight,
                )
                sub = induced_subgraph(self.graph, self.inner_ids, own, self.rank,
                                       sample_plan.edge_keep, sample_plan.edge_weight)
                arrival = np.concatenate(
                    [sample_plan.recv_set(self.rank, src) for src in range(self.plan.num_parts) if src != self.rank]
                    or [np.empty(0, dtype=np.int64)]
                )
                halo_slots = np.searchsorted(sub.halo_ids, arrival)
            agg_rate = cfg.p if cfg.sampler is SamplerKind.BNS else 1.0
            result.halo_size = len(own)
            result.mem_scalars = float(sum(layer_memory_scalars(len(self.inner_ids), len(own), d) for d in self.dims))
            with timer.phase("comm"):
                await self._barrier("indices")

            # Forward
            H = self.features
            caches: List[SageCache] = []
            for layer, params in enumerate(self.state.layers):
                with timer.phase("comm"):
                    received, sent = await exchange_features(self.mailbox, self.rank, sample_plan, layer, H,
                                                             self.inner_ids)
                result.floats_sent += sent
                with timer.phase("comp"):
                    halo = np.empty((len(own), H.shape[1]), dtype=H.dtype)
                    halo[halo_slots] = received
                    H_stack = np.vstack([H, halo])
                    scale = node_dropout_scale(cfg.seed, epoch, layer, sub.global_ids, self.graph.num_nodes,
                                               H.shape[1], cfg.dropout, H.dtype)
                    H, cache = sage_forward(sub, H_stack, params, agg_rate, train_mode=True,
                                            dropout_rate=cfg.dropout, dropout_scale=scale,
                                            activation=layer < num_layers - 1)
                    caches.append(cache)
                with timer.phase("comm"):
                    await self._barrier(f"forward-{layer}")

            # Loss
            with timer.phase("comp"):
                if self.train_mask.any():
                    result.loss, G = softmax_xent(H, self.labels, self.train_mask, self.loss_normalizer)
                else:
                    G = np.zeros_like(H)

            # Backward
            grads: List[Optional[LayerParams]] = [None] * num_layers
            for layer in reversed(range(num_layers)):
                with timer.phase("comp"):
                    grads[layer], G_stack = sage_backward(caches[layer], G)
                    n_inner = sub.num_inner
                    G_halo = G_stack[n_inner:][halo_slots]
                with timer.phase("comm"):
                    G, sent = await exchange_gradients(self.mailbox, self.rank, sample_plan, layer, G_halo,
                                                       G_stack[:n_inner], self.inner_ids)
                    result.floats_sent += sent
                    await self._barrier(f"backward-{layer}")

            # AllReduce + update
            with timer.phase("reduce"):
                mean_grads, result.reduce_floats = await allreduce(self.mailbox, self.rank, epoch, flatten(grads))
            with timer.phase("comp"):
                params, self.state.adam = adam_step(self.state.tensors(), mean_grads, self.state.adam, cfg.lr)
                self.state.layers = unflatten(params)
            with timer.phase("comm"):
                await self._barrier("update")

        result.timings = dict(timer.totals)
        self.logger.debug(f"epoch {epoch}: loss share {result.loss:.6f}, halo {len(own)}, "
                          f"floats sent {result.floats_sent}")
        return result


# Driver

@dataclass
class TrainResult:
    layers: List[LayerParams]
    metrics: List[EpochMetrics]
    max_weight_skew: float = 0.0

    @property
    def losses(self) -> List[float]:
        return [m.loss for m in self.metrics]


def evaluate(layers: Sequence[LayerParams], graph: Graph, mask: np.ndarray,
             full: Optional[SubgraphWithHalo] = None) -> float:
    """Full-graph inference without sampling or dropout; argmax accuracy over ``mask``."""
    full = full if full is not None else full_subgraph(graph)
    X = graph.features.astype(layers[0].W.dtype)
    logits, _ = forward_full(layers, full, X)
    return accuracy(logits, graph.labels, mask)


def _is_eval_epoch(epoch: int, config: TrainConfig) -> bool:
    return (epoch + 1) % config.eval_interval == 0 or epoch == config.epochs - 1


def _eval_pair(layers, graph: Graph, full: SubgraphWithHalo, epoch: int,
               config: TrainConfig) -> Tuple[Optional[float], Optional[float]]:
    if not _is_eval_epoch(epoch, config):
        return None, None
    return evaluate(layers, graph, graph.val_mask, full), evaluate(layers, graph, graph.test_mask, full)


async def _gather_workers(coroutines) -> List[WorkerEpoch]:
    tasks = [asyncio.create_task(c) for c in coroutines]
    try:
        return await asyncio.gather(*tasks)
    except Exception:
        for task in tasks:
            task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)
        raise


def _weight_skew(workers: Sequence[Worker]) -> float:
    reference = workers[0].state.tensors()
    skew = 0.0
    for worker in workers[1:]:
        for a, b in zip(reference, worker.state.tensors()):
            skew = max(skew, float(np.max(np.abs(a - b))) if a.size else 0.0)
    return skew


async def train_async(graph: Graph, plan: PartitionPlan, config: TrainConfig) -> TrainResult:
    if len(plan.owner) != graph.num_nodes:
        raise ValueError(f"plan covers {len(plan.owner)} nodes, graph has {graph.num_nodes}")
    if config.num_parts is not None and config.num_parts != plan.num_parts:
        raise ValueError(f"config asks for {config.num_parts} partitions, plan has {plan.num_parts}")
    if config.sampler is SamplerKind.BNS and config.p == 0.0 and plan.boundary_sizes.sum():
        logger.warning("Training with p=0: every boundary node is dropped, which is not recommended")

    m = plan.num_parts
    dims = config.layer_dims(graph.feature_dim, graph.num_classes)
    mailbox = Mailbox(m, config.phase_timeout_s, config.serialize_messages, config.dtype)
    workers = [Worker(rank, graph, plan, config, mailbox, dims) for rank in range(m)]
    full = full_subgraph(graph)
    metrics: List[EpochMetrics] = []
    skew = 0.0

    logger.info(f"Training {len(dims) - 1}-layer model {dims} on {m} partitions for {config.epochs} epochs "
                f"({config.sampler.value}, p={config.p})")
    for epoch in tqdm(range(config.epochs), disable=not config.show_progress, file=sys.stderr, desc="epochs"):
        results = await _gather_workers(w.run_epoch(epoch) for w in workers)
        if mailbox.pending():
            raise ProtocolError(f"{mailbox.pending()} undelivered messages after epoch {epoch}")

        loss = sum(r.loss for r in results) / m
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss} at epoch {epoch}")
        skew = max(skew, _weight_skew(workers))
        val_acc, test_acc = _eval_pair(workers[0].state.layers, graph, full, epoch, config)

        def timing(name: str) -> float:
            return max(r.timings.get(name, 0.0) for r in results) if config.record_timings else 0.0

        mem = [r.mem_scalars for r in results]
        metrics.append(EpochMetrics(
            epoch=epoch,
            loss=float(loss),
            val_acc=val_acc,
            test_acc=test_acc,
            floats_sent=int(sum(r.floats_sent for r in results)),
            bytes_sent=mailbox.take_bytes(),
            t_comp_ms=timing("comp"),
            t_comm_ms=timing("comm"),
            t_reduce_ms=timing("reduce"),
            t_sample_ms=timing("sample"),
            mem_est_scalars_max=max(mem),
            mem_est_scalars_min=min(mem),
            t_epoch_ms=timing("epoch"),
            boundary_rows=int(sum(r.halo_size for r in results)),
            index_ints_sent=int(sum(r.index_ints_sent for r in results)),
            reduce_floats=int(sum(r.reduce_floats for r in results)),
        ))
        logger.debug(f"epoch {epoch}: loss {loss:.6f}, floats sent {metrics[-1].floats_sent}")

    logger.info(f"Finished training: final loss {metrics[-1].loss:.6f}")
    return TrainResult(layers=workers[0].state.layers, metrics=metrics, max_weight_skew=skew)


def train(graph: Graph, plan: PartitionPlan, config: TrainConfig) -> TrainResult:
    """Run ``config.epochs`` epochs of partition-parallel training."""
    return asyncio.run(train_async(graph, plan, config))


# Single-process reference

def train_reference(graph: Graph, config: TrainConfig) -> TrainResult:
    """Full-graph training with the same initialisation, dropout masks and update rule."""
    dims = config.layer_dims(graph.feature_dim, graph.num_classes)
    state = ModelState.initial(dims, config)
    full = full_subgraph(graph)
    X = graph.features.astype(config.dtype)
    all_ids = np.arange(graph.num_nodes)
    metrics: List[EpochMetrics] = []

    for epoch in range(config.epochs):
        scales = [
            node_dropout_scale(config.seed, epoch, layer, all_ids, graph.num_nodes, d, config.dropout, config.dtype)
            for layer, d in enumerate(dims[:-1])
        ]
        logits, caches = forward_full(state.layers, full, X, train_mode=True, dropout_rate=config.dropout,
                                      dropout_scales=scales)
        loss, G = softmax_xent(logits, graph.labels, graph.train_mask)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite reference loss {loss} at epoch {epoch}")
        grads = backward_full(caches, G)
        params, state.adam = adam_step(state.tensors(), flatten(grads), state.adam, config.lr)
        state.layers = unflatten(params)
        val_acc, test_acc = _eval_pair(state.layers, graph, full, epoch, config)
        mem = float(sum(layer_memory_scalars(graph.num_nodes, 0, d) for d in dims))
        metrics.append(EpochMetrics(epoch=epoch, loss=float(loss), val_acc=val_acc, test_acc=test_acc,
                                    floats_sent=0, bytes_sent=0, t_comp_ms=0.0, t_comm_ms=0.0, t_reduce_ms=0.0,
                                    t_sample_ms=0.0, mem_est_scalars_max=mem, mem_est_scalars_min=mem))
    return TrainResult(layers=state.layers, metrics=metrics)


def compare_to_reference(result: TrainResult, reference: TrainResult) -> float:
    """Largest per-epoch relative loss deviation between two runs."""
    if len(result.metrics) != len(reference.metrics):
        raise ValueError(f"runs have {len(result.metrics)} and {len(reference.metrics)} epochs")
    deviation = 0.0
    for got, want in zip(result.losses, reference.losses):
        deviation = max(deviation, abs(got - want) / max(abs(want), np.finfo(np.float64).tiny))
    return deviation


def write_metrics(metrics: Sequence[EpochMetrics], path: Union[str, os.PathLike]) -> None:
    """One JSON object per line."""
    with open(path, "w") as f:
        for record in metrics:
            f.write(json.dumps(record.to_dict()) + "\n")
