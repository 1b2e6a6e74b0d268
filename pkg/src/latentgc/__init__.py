"""Latent Granger-causal component analysis."""

from .causality import (
    CausalityStats,
    ProjectionPair,
    causality_direct,
    combined_objective,
    latent_stats,
    pairwise_causality_matrix,
    strength_batch,
    time_reversed_stats,
)
from .covariance import LagCovSet, MultiSeries, center, lag_covariance_set, regularize_condition_number
from .deflation import build_lag_matrix, deflate
from .gradient import analytic_gradient, combined_gradient, finite_diff_gradient, gradient_check
from .io import PreprocessSpec, ResultBundle, load_csv, preprocess, write_csv
from .optimizer import (
    ConvergenceTrace,
    Decomposition,
    OptimizerConfig,
    PairResult,
    compute_forward_model,
    decompose,
    match_components,
    optimize_pair,
)
from .simulator import MixingModel, VarSystem, mix, random_mixing, run_benchmark, simulate_var, three_source_system
from .stats import SurrogateTestResult, phase_randomize, surrogate_test

__version__ = "0.1.0"
