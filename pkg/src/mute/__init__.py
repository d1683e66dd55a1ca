"""Similarity-aware multi-hot target codes and a small harness to test them."""

from .baselines import hadamard, one_hot, random_k_hot
from .codes import (
    Codebook,
    Provenance,
    WeightMatrix,
    hamming_distance,
    min_pairwise_distance,
    parse_codebook,
    serialize_codebook,
    validate_codebook,
    weighted_objective,
)
from .optimize import OptimizerConfig, OptimizerResult, exact_search, export_lp, local_search, weighted_shuffle
from .weights import ConfusionMatrix, confusion_to_weights, uniform_weights

__version__ = "0.1.0"
