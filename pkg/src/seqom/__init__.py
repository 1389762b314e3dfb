"""Optimal-matching analysis of weighted event sequences."""

__version__ = "0.1.0"

from .agreement import ami, ari, contingency, fms, mantel_test
from .align import DissimilarityMatrix, OptimalMatching, om_distance, pairwise_matrix
from .cluster import WeightedKMedoids, cluster_quality, quality_over_k, weighted_k_medoids
from .costs import build_cost_scheme, constant_costs
from .sequences import (EventAlphabet, EventSequence, SequenceDataset, apply_encoding,
                        from_event_lists, load_dataset)

__all__ = [
    "DissimilarityMatrix",
    "EventAlphabet",
    "EventSequence",
    "OptimalMatching",
    "SequenceDataset",
    "WeightedKMedoids",
    "ami",
    "apply_encoding",
    "ari",
    "build_cost_scheme",
    "cluster_quality",
    "constant_costs",
    "contingency",
    "fms",
    "from_event_lists",
    "load_dataset",
    "mantel_test",
    "om_distance",
    "pairwise_matrix",
    "quality_over_k",
    "weighted_k_medoids",
]
