from dataclasses import dataclass, asdict
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

# Third-party imports
from pydantic import BaseModel, Field, model_validator


class Precision(Enum):
    """Scalar width used for features, weights and wire payloads."""
    F32 = "f32"
    F64 = "f64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.F32 else np.float64)


class SamplerKind(Enum):
    """Which halo reduction runs each epoch."""
    BNS = "bns"            # boundary nodes kept with probability p
    BES = "bes"            # cross-partition edges kept with probability q
    DROPEDGE = "dropedge"  # every edge kept with probability q


class TrainConfig(BaseModel):
    num_layers: int = Field(2, ge=1)
    hidden: int = Field(64, ge=1)
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    lr: float = Field(0.01, gt=0.0)
    epochs: int = Field(100, ge=1)
    p: float = Field(0.1, ge=0.0, le=1.0)
    seed: int = Field(0, ge=0)
    precision: Precision = Precision.F64
    num_parts: Optional[int] = Field(None, ge=1)
    eval_interval: int = Field(1, ge=1)
    sampler: SamplerKind = SamplerKind.BNS
    edge_rate: Optional[float] = Field(None, ge=0.0, le=1.0)
    phase_timeout_s: float = Field(30.0, gt=0.0)
    record_timings: bool = False
    serialize_messages: bool = False
    verify_broadcast: bool = False
    log_level: str = "INFO"
    show_progress: bool = False

    @model_validator(mode="after")
    def _check_sampler(self) -> "TrainConfig":
        if self.sampler is not SamplerKind.BNS and self.edge_rate is None:
            raise ValueError(f"sampler '{self.sampler.value}' requires edge_rate")
        return self

    @property
    def dtype(self) -> np.dtype:
        return self.precision.dtype

    def layer_dims(self, in_dim: int, num_classes: int) -> List[int]:
        """Feature widths d^(0..L): input, hidden layers, then class logits."""
        return [in_dim] + [self.hidden] * (self.num_layers - 1) + [num_classes]


@dataclass
class EpochMetrics:
    """One JSONL record per epoch."""
    epoch: int
    loss: float
    val_acc: Optional[float]
    test_acc: Optional[float]
    floats_sent: int
    bytes_sent: int
    t_comp_ms: float
    t_comm_ms: float
    t_reduce_ms: float
    t_sample_ms: float
    mem_est_scalars_max: float
    mem_est_scalars_min: float
    t_epoch_ms: float = 0.0
    boundary_rows: int = 0
    index_ints_sent: int = 0
    reduce_floats: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
