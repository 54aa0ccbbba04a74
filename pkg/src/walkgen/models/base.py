"""Shared model configuration and training records."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of an attention next-node model.

    vocab counts one token per node plus one start token (id vocab-1).
    context_len is the longest node prefix the model can condition on; the
    start token rides along, so position tables hold context_len+1 slots.
    """

    vocab: int
    depth: int = 1
    width: int = 128
    heads: int = 4
    context_len: int = 32
    dropout: float = 0.0

    def __post_init__(self):
        if self.vocab < 2:
            raise ValueError("vocab must include at least one node and the start token")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.width % self.heads != 0:
            raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
        if self.context_len < 1:
            raise ValueError("context_len must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0,1), got {self.dropout}")

    @property
    def start_token(self):
        return self.vocab - 1

    def to_dict(self):
        return {
            "vocab": self.vocab,
            "depth": self.depth,
            "width": self.width,
            "heads": self.heads,
            "context_len": self.context_len,
            "dropout": self.dropout,
        }


@dataclass(frozen=True)
class TrainParams:
    lr: float = 3e-3
    batch: int = 256
    epochs: int = 10
    seed: int = 0
    warmup_steps: int = 50

    def to_dict(self):
        return {
            "lr": self.lr,
            "batch": self.batch,
            "epochs": self.epochs,
            "seed": self.seed,
            "warmup_steps": self.warmup_steps,
        }


@dataclass
class TrainReport:
    """What a training run did; loss_trajectory holds the per-epoch mean
    cross-entropy in nats per token."""

    epochs: int
    final_cross_entropy: float
    wall_clock_seconds: float
    parameter_count: int
    loss_trajectory: list = field(default_factory=list)

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "final_cross_entropy": self.final_cross_entropy,
            "wall_clock_seconds": self.wall_clock_seconds,
            "parameter_count": self.parameter_count,
            "loss_trajectory": list(self.loss_trajectory),
        }


def new_counters():
    """Inference work counters shared by all model kinds.

    prefix_sequences counts sequences primed with a full forward pass over
    their prefix; incremental_steps counts single-token continuations.
    """
    return {"prefix_sequences": 0, "prefix_tokens": 0, "incremental_steps": 0}
