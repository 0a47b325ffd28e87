"""Shared-account sequential recommendation with frequency-domain behavior
disentanglement and progressive residual reasoning."""

from .data import (
    Dataset,
    GeneratorConfig,
    SyntheticGroundTruth,
    generate_synthetic,
    read_dataset,
    write_dataset,
)
from .estimator import DisenReasonRecommender
from .model import Hyper, ModelParams, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "GeneratorConfig",
    "SyntheticGroundTruth",
    "generate_synthetic",
    "read_dataset",
    "write_dataset",
    "DisenReasonRecommender",
    "Hyper",
    "ModelParams",
    "train",
    "__version__",
]
