"""Python bindings for the IME temporal knowledge graph completion model."""

from ._core import (
    Error,
    TrainConfig,
    Trainer,
    cmd,
    filtered_rank,
    gradcheck,
    pool,
    pooling_weights,
    synthesize,
    train,
)

__all__ = [
    "Error",
    "TrainConfig",
    "Trainer",
    "cmd",
    "filtered_rank",
    "gradcheck",
    "pool",
    "pooling_weights",
    "synthesize",
    "train",
]
