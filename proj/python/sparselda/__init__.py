"""Sparsity-aware LDA trainer with sub-linear-in-K token sampling."""

from ._core import (
    Corpus,
    IterationStats,
    IoError,
    Model,
    SamplerKind,
    TrainConfig,
    ValidationError,
    WaryTree,
    __version__,
    heldout_ll,
    prefix_search,
    segmented_count,
    top_words,
    train,
)

__all__ = [
    "Corpus",
    "IterationStats",
    "IoError",
    "Model",
    "SamplerKind",
    "TrainConfig",
    "ValidationError",
    "WaryTree",
    "__version__",
    "heldout_ll",
    "prefix_search",
    "segmented_count",
    "top_words",
    "train",
]
