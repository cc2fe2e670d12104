"""Resistant multiple sparse canonical correlation analysis."""

__version__ = "0.1.0"

from .covariance import DataPair, EstimatorMode, KMatrix, build_k, covariance, rank_transform
from .evaluate import MetricsReport, batch_summary, compute_metrics, contains_complete_group
from .mscca import CvPlan, FitResult, cv_select, deflate, fit_pairs, make_folds
from .scca import (
    CanonicalPair,
    SparsePairConfig,
    canonical_vectors,
    projected_correlation,
    soft_threshold,
    sparse_singular_pair,
)
from .significance import (
    PermutationSummary,
    count_significant,
    permutation_distribution,
    permutation_test,
    permute_rows,
)
from .simulate import GroundTruth, SimulationSpec, build_b, generate, sigma_yy_entry

__all__ = [
    "CanonicalPair", "CvPlan", "DataPair", "EstimatorMode", "FitResult", "GroundTruth",
    "KMatrix", "MetricsReport", "PermutationSummary", "SimulationSpec", "SparsePairConfig",
    "batch_summary", "build_b", "build_k", "canonical_vectors", "compute_metrics",
    "contains_complete_group", "count_significant", "covariance", "cv_select", "deflate",
    "fit_pairs", "generate", "make_folds", "permutation_distribution", "permutation_test",
    "permute_rows", "projected_correlation", "rank_transform", "sigma_yy_entry",
    "soft_threshold", "sparse_singular_pair",
]
