"""
Hand-differentiated building blocks.

The GraphSAGE layer computes, for every inner node v,

    z_v  = (Σ_{u ∈ N(v) ∩ inner} h_u + (1/p)·Σ_{u ∈ N(v) ∩ halo} h_u) / |N(v)|
    h'_v = ReLU([z_v ; h_v] · W + b)

where |N(v)| is the degree in the full graph, so the sampled aggregate is an
unbiased estimate of the full mean. Dropped boundary neighbours contribute
exactly zero. The final layer skips the activation and emits logits.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import log_softmax, softmax

from .graph import Graph, SubgraphWithHalo
from .util import STREAM_DROPOUT, STREAM_INIT, rng_for

logger = logging.getLogger(__name__)


@dataclass
class LayerParams:
    W: np.ndarray  # (2·d_in, d_out): rows [:d_in] act on z_v, rows [d_in:] on h_v
    b: np.ndarray  # (d_out,)

    @property
    def d_in(self) -> int:
        return self.W.shape[0] // 2

    @property
    def d_out(self) -> int:
        return self.W.shape[1]

    def tensors(self) -> List[np.ndarray]:
        return [self.W, self.b]

    def copy(self) -> "LayerParams":
        return LayerParams(self.W.copy(), self.b.copy())


def init_layers(dims: Sequence[int], seed: int, dtype=np.float64) -> List[LayerParams]:
    """Glorot-uniform weights and zero biases for layer widths d^(0..L)."""
    layers = []
    for layer, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = np.sqrt(6.0 / (2 * d_in + d_out))
        W = rng_for(seed, STREAM_INIT, layer).uniform(-limit, limit, size=(2 * d_in, d_out))
        layers.append(LayerParams(W.astype(dtype), np.zeros(d_out, dtype=dtype)))
    return layers


def flatten(layers: Sequence[LayerParams]) -> List[np.ndarray]:
    return [t for layer in layers for t in layer.tensors()]


def unflatten(tensors: Sequence[np.ndarray]) -> List[LayerParams]:
    return [LayerParams(tensors[i], tensors[i + 1]) for i in range(0, len(tensors), 2)]


# Dropout

def dropout(H: np.ndarray, rate: float, train_mode: bool,
            rng: Optional[np.random.Generator]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout. Returns the output and the per-entry scale (None when inactive)."""
    if not train_mode or rate == 0.0:
        return H, None
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    scale = (rng.random(H.shape) >= rate).astype(H.dtype) / (1.0 - rate)
    return H * scale, scale


def node_dropout_scale(seed: int, epoch: int, layer: int, global_ids: np.ndarray,
                       num_nodes: int, dim: int, rate: float, dtype=np.float64) -> Optional[np.ndarray]:
    """
    Dropout scales for the rows of ``global_ids``, drawn once over all nodes
    of the graph so every copy of a node (owner or halo) gets the same mask.
    """
    if rate == 0.0:
        return None
    draws = rng_for(seed, STREAM_DROPOUT, epoch, layer).random((num_nodes, dim))[global_ids]
    return ((draws >= rate) / (1.0 - rate)).astype(dtype)


# GraphSAGE mean layer

def mean_aggregator(sub: SubgraphWithHalo, p: float = 1.0, dtype=np.float64) -> sp.csr_matrix:
    """Row-normalised aggregation matrix with halo columns scaled by 1/p."""
    local = sub.local_csr
    n_halo = sub.num_local - sub.num_inner
    if p == 0.0 and n_halo:
        raise ValueError("sampling rate p=0 with a non-empty halo")
    data = local.data.astype(np.float64, copy=True)
    if n_halo:
        data[local.indices >= sub.num_inner] /= p
    row_deg = np.repeat(sub.full_degree, np.diff(local.indptr))
    data /= row_deg
    return sp.csr_matrix((data.astype(dtype), local.indices, local.indptr), shape=local.shape)


@dataclass
class SageCache:
    X: np.ndarray                      # dropped-out H_stack
    A: sp.csr_matrix
    C: np.ndarray                      # [Z | X_inner]
    pre: np.ndarray
    W: np.ndarray
    scale: Optional[np.ndarray]
    activation: bool


def sage_forward(sub: SubgraphWithHalo, H_stack: np.ndarray, params: LayerParams, p: float = 1.0,
                 train_mode: bool = False, dropout_rate: float = 0.0,
                 rng: Optional[np.random.Generator] = None, dropout_scale: Optional[np.ndarray] = None,
                 activation: bool = True) -> Tuple[np.ndarray, SageCache]:
    if H_stack.shape[0] != sub.num_local:
        raise ValueError(f"H_stack has {H_stack.shape[0]} rows, subgraph has {sub.num_local} local nodes")
    if H_stack.shape[1] != params.d_in:
        raise ValueError(f"H_stack width {H_stack.shape[1]} does not match layer input {params.d_in}")

    if train_mode and dropout_scale is not None:
        X, scale = H_stack * dropout_scale, dropout_scale
    else:
        X, scale = dropout(H_stack, dropout_rate, train_mode, rng)

    A = mean_aggregator(sub, p, dtype=H_stack.dtype)
    Z = A @ X
    C = np.hstack([Z, X[:sub.num_inner]])
    pre = C @ params.W + params.b
    out = np.maximum(pre, 0) if activation else pre
    return out, SageCache(X=X, A=A, C=C, pre=pre, W=params.W, scale=scale, activation=activation)


def sage_backward(cache: SageCache, G_out: np.ndarray) -> Tuple[LayerParams, np.ndarray]:
    """Gradients w.r.t. the layer parameters and every row of H_stack (inner and halo)."""
    if G_out.shape != cache.pre.shape:
        raise ValueError(f"upstream gradient shape {G_out.shape} != output shape {cache.pre.shape}")
    G_pre = G_out * (cache.pre > 0) if cache.activation else G_out
    grads = LayerParams(W=cache.C.T @ G_pre, b=G_pre.sum(axis=0))
    G_C = G_pre @ cache.W.T
    d_in = cache.X.shape[1]
    G_X = cache.A.T @ G_C[:, :d_in]
    G_X[:cache.C.shape[0]] += G_C[:, d_in:]
    if cache.scale is not None:
        G_X = G_X * cache.scale
    return grads, G_X


def forward_full(layers: Sequence[LayerParams], sub: SubgraphWithHalo, X: np.ndarray,
                 train_mode: bool = False, dropout_rate: float = 0.0,
                 dropout_scales: Optional[Sequence[Optional[np.ndarray]]] = None
                 ) -> Tuple[np.ndarray, List[SageCache]]:
    """Stacked forward pass over a subgraph without halo (e.g. the whole graph)."""
    if sub.num_local != sub.num_inner:
        raise ValueError("forward_full needs a subgraph without halo nodes")
    H, caches = X, []
    for index, params in enumerate(layers):
        last = index == len(layers) - 1
        scale = dropout_scales[index] if dropout_scales is not None else None
        H, cache = sage_forward(sub, H, params, train_mode=train_mode, dropout_rate=dropout_rate,
                                dropout_scale=scale, activation=not last)
        caches.append(cache)
    return H, caches


def backward_full(caches: Sequence[SageCache], G_logits: np.ndarray) -> List[LayerParams]:
    grads: List[LayerParams] = []
    G = G_logits
    for cache in reversed(caches):
        layer_grads, G = sage_backward(cache, G)
        grads.append(layer_grads)
    return grads[::-1]


# GCN propagation (variance analysis)

@dataclass(frozen=True, eq=False)
class PropagationMatrix:
    """P = D̃^{-1/2} (A + I) D̃^{-1/2}."""
    matrix: sp.csr_matrix

    @classmethod
    def from_graph(cls, graph: Graph) -> "PropagationMatrix":
        a_tilde = graph.adjacency + sp.identity(graph.num_nodes, format="csr")
        inv_sqrt = 1.0 / np.sqrt(graph.degrees + 1.0)
        P = sp.diags(inv_sqrt) @ a_tilde @ sp.diags(inv_sqrt)
        P = sp.csr_matrix(P)
        P.sort_indices()
        return cls(P)

    def block(self, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if not len(rows) or not len(cols):
            return sp.csr_matrix((len(rows), len(cols)))
        return sp.csr_matrix(self.matrix[rows][:, cols])

    def frobenius_sq(self, rows: Optional[np.ndarray] = None, cols: Optional[np.ndarray] = None) -> float:
        n = self.matrix.shape[0]
        M = self.block(np.arange(n) if rows is None else rows, np.arange(n) if cols is None else cols)
        return float(M.multiply(M).sum())


def gcn_propagate(P_local: sp.spmatrix, H_stack: np.ndarray, W: np.ndarray, s_diag: np.ndarray) -> np.ndarray:
    """Z̃ = P_local · diag(s) · H_stack · W."""
    if P_local.shape[1] != H_stack.shape[0] or len(s_diag) != H_stack.shape[0]:
        raise ValueError(f"P_local {P_local.shape}, H_stack {H_stack.shape} and s_diag "
                         f"({len(s_diag)},) do not line up")
    if H_stack.shape[1] != W.shape[0]:
        raise ValueError(f"H_stack width {H_stack.shape[1]} does not match W rows {W.shape[0]}")
    return P_local @ (s_diag[:, None] * H_stack) @ W


# Loss

def softmax_xent(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray,
                 normalizer: Optional[float] = None) -> Tuple[float, np.ndarray]:
    """
    Cross-entropy summed over masked rows and divided by ``normalizer``
    (default: the number of masked rows, i.e. the mean).
    """
    grad = np.zeros_like(logits)
    count = int(np.count_nonzero(mask))
    if count == 0:
        logger.warning("softmax_xent called with an empty mask; loss is 0")
        return 0.0, grad
    if labels[mask].max() >= logits.shape[1]:
        raise ValueError(f"label {labels[mask].max()} out of range for {logits.shape[1]} classes")
    norm = float(count if normalizer is None else normalizer)
    rows = np.flatnonzero(mask)
    targets = labels[rows]
    logp = log_softmax(logits[rows], axis=1)
    loss = -float(logp[np.arange(len(rows)), targets].sum()) / norm
    g = softmax(logits[rows], axis=1)
    g[np.arange(len(rows)), targets] -= 1.0
    grad[rows] = g / norm
    return loss, grad


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    if not np.any(mask):
        logger.warning("accuracy requested over an empty mask")
        return 0.0
    return float(np.mean(np.argmax(logits[mask], axis=1) == labels[mask]))


# Adam

@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
              ) -> Tuple[List[np.ndarray], AdamState]:
    """Bias-corrected Adam; returns new parameters and the advanced state."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("parameter and gradient shapes do not match")
    t = state.t + 1
    m = [beta1 * m_ + (1 - beta1) * g for m_, g in zip(state.m, grads)]
    v = [beta2 * v_ + (1 - beta2) * g * g for v_, g in zip(state.v, grads)]
    bias1 = 1 - beta1 ** t
    bias2 = 1 - beta2 ** t
    new_params = [
        (p - lr * (m_ / bias1) / (np.sqrt(v_ / bias2) + eps)).astype(p.dtype, copy=False)
        for p, m_, v_ in zip(params, m, v)
    ]
    return new_params, AdamState(m=m, v=v, t=t)
