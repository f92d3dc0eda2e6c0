"""Privacy amplification by Poisson importance sampling, applied to DP k-means."""

__version__ = "0.1.0"

from .privacy import (
    PrivacyBudget,
    Profile,
    WeightedProfile,
    amplified_profile,
    amplify,
    constant_profile,
    improvement_impossible,
    improvement_possible,
    power_profile,
    subsample_amplify,
    verify_profile,
)
from .weights import (
    EvaluationBudgetError,
    InfeasiblePointError,
    SolverConfig,
    WeightSolution,
    WeightSolveError,
    bracket_upper,
    evaluation_bound,
    solve_dataset,
    solve_point,
)
from .sampling import (
    DataStats,
    SamplerSpec,
    WeightedDataset,
    data_stats,
    draw,
    estimate_objective,
    make_coreset,
    make_full,
    make_optimal,
    make_uniform,
)
from .kmeans import (
    LloydConfig,
    allocate_noise,
    core_sampler_epsilon,
    full_data_epsilon,
    kmeans_cost,
    lloyd_profile,
    weighted_dp_lloyd,
)
from .estimators import PoissonImportanceSampler, WeightedDPKMeans

__all__ = [
    "__version__",
    "PrivacyBudget",
    "Profile",
    "WeightedProfile",
    "amplified_profile",
    "amplify",
    "constant_profile",
    "improvement_impossible",
    "improvement_possible",
    "power_profile",
    "subsample_amplify",
    "verify_profile",
    "EvaluationBudgetError",
    "InfeasiblePointError",
    "SolverConfig",
    "WeightSolution",
    "WeightSolveError",
    "bracket_upper",
    "evaluation_bound",
    "solve_dataset",
    "solve_point",
    "DataStats",
    "SamplerSpec",
    "WeightedDataset",
    "data_stats",
    "draw",
    "estimate_objective",
    "make_coreset",
    "make_full",
    "make_optimal",
    "make_uniform",
    "LloydConfig",
    "allocate_noise",
    "core_sampler_epsilon",
    "full_data_epsilon",
    "kmeans_cost",
    "lloyd_profile",
    "weighted_dp_lloyd",
    "PoissonImportanceSampler",
    "WeightedDPKMeans",
]
