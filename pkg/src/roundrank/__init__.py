"""Parallel-round sorted top-k, top-k and sorting with noiseless or noisy comparisons."""

from .harness import (
    Cross,
    Final,
    Pairs,
    RoundAlgorithm,
    RunStats,
    Within,
    audit_adaptiveness,
    early_outcome,
    execute,
)
from .model import (
    GroundTruth,
    InvalidParameter,
    NoiseModel,
    compare,
    make_ground_truth,
    true_sorted_topk,
)

__version__ = "0.1.0"
