"""
Estimation variance of sampled GCN propagation.

For partition i the sampled product is Z̃ = P_{V_i, V_i ∪ B_i} · S · H · W
with S = 1 on inner rows and ξ_b/p on boundary rows (ξ_b ~ Bernoulli(p)).
Its error against the full product satisfies

    E‖Z̃ − Z‖²_F = Σ_b (1−p)/p · ‖P_{V_i,b}‖² · ‖(HW)_b‖²  ≤  γ² ‖P_{V_i,B_i}‖²_F / p

where γ is the largest row norm of HW. This module measures the left side by
Monte Carlo and by exhaustive enumeration, and reports both bounds.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .errors import VarianceBoundError
from .graph import Graph
from .nn import PropagationMatrix, gcn_propagate
from .plan import PartitionPlan
from .sampler import boundary_uniforms
from .util import STREAM_INIT, rng_for

logger = logging.getLogger(__name__)


@dataclass
class VarianceReport:
    p: float
    trials: int
    gamma: float
    empirical: List[float]   # Monte-Carlo E‖Z̃_{V_i} − Z_{V_i}‖²_F per partition
    stderr: List[float]
    exact: List[float]       # closed form
    bound: List[float]       # γ²‖P_{V_i,B_i}‖²_F / p
    global_empirical: float  # Σ_i empirical_i / |V|
    global_bound: float      # γ²‖P‖²_F / (p|V|)
    violations: List[int] = field(default_factory=list)

    @property
    def within_bound(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "trials": self.trials,
            "gamma": self.gamma,
            "empirical": self.empirical,
            "stderr": self.stderr,
            "exact": self.exact,
            "bound": self.bound,
            "global_empirical": self.global_empirical,
            "global_bound": self.global_bound,
            "violations": self.violations,
        }


def _check_rate(p: float) -> None:
    if not 0.0 < p <= 1.0:
        raise ValueError(f"variance needs a sampling rate in (0, 1], got {p}")


def partition_block(prop: PropagationMatrix, plan: PartitionPlan, part: int) -> Tuple[Any, np.ndarray]:
    """P restricted to rows V_i and columns V_i ∪ B_i, plus the column ids."""
    cols = np.concatenate([plan.inner[part], plan.boundary[part]])
    return prop.block(plan.inner[part], cols), cols


def sample_diag(n_inner: int, keep: np.ndarray, p: float) -> np.ndarray:
    return np.concatenate([np.ones(n_inner), keep / p])


def row_norms(H: np.ndarray, W: np.ndarray) -> np.ndarray:
    return np.linalg.norm(H @ W, axis=1)


def closed_form_variance(prop: PropagationMatrix, plan: PartitionPlan, H: np.ndarray, W: np.ndarray,
                         p: float) -> List[float]:
    """Exact E‖Z̃_{V_i} − Z_{V_i}‖²_F for every partition."""
    _check_rate(p)
    hw_sq = row_norms(H, W) ** 2
    result = []
    for part in range(plan.num_parts):
        block = prop.block(plan.inner[part], plan.boundary[part])
        col_sq = np.asarray(block.multiply(block).sum(axis=0)).ravel()
        result.append(float((1.0 - p) / p * np.sum(col_sq * hw_sq[plan.boundary[part]])))
    return result


def enumerate_variance(graph: Graph, plan: PartitionPlan, H: np.ndarray, W: np.ndarray, p: float,
                       max_boundary: int = 12) -> List[float]:
    """Exact expectation by summing over all 2^|B_i| selections."""
    _check_rate(p)
    prop = PropagationMatrix.from_graph(graph)
    too_big = [i for i in range(plan.num_parts) if len(plan.boundary[i]) > max_boundary]
    if too_big:
        raise ValueError(f"partition {too_big[0]} has {len(plan.boundary[too_big[0]])} boundary nodes, "
                         f"enumeration is limited to {max_boundary}")

    result = []
    for part in range(plan.num_parts):
        P_local, cols = partition_block(prop, plan, part)
        n_inner, n_bd = len(plan.inner[part]), len(plan.boundary[part])
        H_stack = H[cols]
        Z = gcn_propagate(P_local, H_stack, W, np.ones(len(cols)))
        total = 0.0
        for outcome in itertools.product((False, True), repeat=n_bd):
            keep = np.array(outcome, dtype=bool)
            kept = int(keep.sum())
            weight = p ** kept * (1.0 - p) ** (n_bd - kept)
            if weight == 0.0:
                continue
            Z_tilde = gcn_propagate(P_local, H_stack, W, sample_diag(n_inner, keep, p))
            total += weight * float(np.sum((Z_tilde - Z) ** 2))
        result.append(total)
    return result


def estimate_variance(graph: Graph, plan: PartitionPlan, H: np.ndarray, W: np.ndarray, p: float, trials: int,
                      seed: int = 0, strict: bool = True, show_progress: bool = False) -> VarianceReport:
    """
    Monte-Carlo estimate of the per-partition propagation error, checked
    against γ²‖P_{V_i,B_i}‖²_F / p with a 3/√trials relative slack.
    Trial t uses the boundary uniforms of epoch t, so runs at different p
    with one seed are coupled.
    """
    _check_rate(p)
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    if H.shape[0] != graph.num_nodes:
        raise ValueError(f"H has {H.shape[0]} rows, graph has {graph.num_nodes} nodes")

    prop = PropagationMatrix.from_graph(graph)
    gamma = float(row_norms(H, W).max()) if graph.num_nodes else 0.0
    empirical, stderr, bound = [], [], []

    for part in range(plan.num_parts):
        P_local, cols = partition_block(prop, plan, part)
        n_inner = len(plan.inner[part])
        H_stack = H[cols]
        Z = gcn_propagate(P_local, H_stack, W, np.ones(len(cols)))
        errors = np.empty(trials)
        for t in tqdm(range(trials), disable=not show_progress, desc=f"partition {part}", leave=False):
            keep = boundary_uniforms(plan, part, t, seed) < p
            Z_tilde = gcn_propagate(P_local, H_stack, W, sample_diag(n_inner, keep, p))
            errors[t] = np.sum((Z_tilde - Z) ** 2)
        empirical.append(float(errors.mean()))
        stderr.append(float(errors.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0)
        bound.append(gamma ** 2 * prop.frobenius_sq(plan.inner[part], plan.boundary[part]) / p)

    slack = 1.0 + 3.0 / np.sqrt(trials)
    violations = [i for i, (e, b) in enumerate(zip(empirical, bound)) if e > b * slack]
    n = max(graph.num_nodes, 1)
    report = VarianceReport(
        p=p,
        trials=trials,
        gamma=gamma,
        empirical=empirical,
        stderr=stderr,
        exact=closed_form_variance(prop, plan, H, W, p),
        bound=bound,
        global_empirical=sum(empirical) / n,
        global_bound=gamma ** 2 * prop.frobenius_sq() / (p * n),
        violations=violations,
    )
    if violations:
        message = (f"empirical variance above bound at p={p} for partitions {violations}: "
                   f"{[empirical[i] for i in violations]} > {[bound[i] for i in violations]}")
        if strict:
            raise VarianceBoundError(message)
        logger.warning(message)
    return report


def variance_sweep(graph: Graph, plan: PartitionPlan, H: np.ndarray, W: np.ndarray, p_list: Sequence[float],
                   trials: int, seed: int = 0, strict: bool = True) -> pd.DataFrame:
    """One row per p with per-node empirical and exact error, the global bound and γ."""
    rows = []
    for p in p_list:
        report = estimate_variance(graph, plan, H, W, p, trials, seed, strict=strict)
        n = max(graph.num_nodes, 1)
        rows.append({
            "p": p,
            "empirical": report.global_empirical,
            "exact": sum(report.exact) / n,
            "bound": report.global_bound,
            "gamma": report.gamma,
        })
        logger.info(f"p={p}: empirical {report.global_empirical:.6g}, bound {report.global_bound:.6g}")
    return pd.DataFrame(rows, columns=["p", "empirical", "exact", "bound", "gamma"])


def random_projection(in_dim: int, out_dim: int, seed: int) -> np.ndarray:
    """A fixed Gaussian W for variance experiments, scaled by 1/√in_dim."""
    return rng_for(seed, STREAM_INIT, 0).standard_normal((in_dim, out_dim)) / np.sqrt(in_dim)
