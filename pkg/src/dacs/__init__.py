"""Density-aware core-set selection for pool-based active learning."""

from .core import (
    AcquisitionConfig,
    DegenerateInputError,
    DegeneratePartitionError,
    DivergenceError,
    FeatureMatrix,
    PoolState,
    Rng,
    UndefinedCorrelationError,
    commit_acquisition,
    make_pool,
    normalize_rows,
)
from .density import (
    DensityConvention,
    DensityProfile,
    LshAssignment,
    chunk_window,
    exact_knn_density,
    lsh_assign,
    lsh_density,
)
from .model import (
    ModelConfig,
    ModelOutputs,
    ToyModel,
    infer,
    init_model,
    train,
    uncertainty,
)
from .partition import DensityPartition, allocate_budget, jenks_breaks
from .selection import (
    AcquisitionResult,
    UncertaintyScores,
    coreset_select,
    dacs_select,
    expand_and_squeeze,
    kcenter_greedy,
    random_select,
    region_only_select,
)
from .simulate import (
    ExperimentReport,
    SyntheticDataset,
    density_uncertainty_correlation,
    gen_gaussian_mixture,
    gen_near_duplicate,
    run_al,
    subset_metrics,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionConfig",
    "AcquisitionResult",
    "DegenerateInputError",
    "DegeneratePartitionError",
    "DensityConvention",
    "DensityPartition",
    "DensityProfile",
    "DivergenceError",
    "ExperimentReport",
    "FeatureMatrix",
    "LshAssignment",
    "ModelConfig",
    "ModelOutputs",
    "PoolState",
    "Rng",
    "SyntheticDataset",
    "ToyModel",
    "UncertaintyScores",
    "UndefinedCorrelationError",
    "allocate_budget",
    "chunk_window",
    "commit_acquisition",
    "coreset_select",
    "dacs_select",
    "density_uncertainty_correlation",
    "exact_knn_density",
    "expand_and_squeeze",
    "gen_gaussian_mixture",
    "gen_near_duplicate",
    "infer",
    "init_model",
    "jenks_breaks",
    "kcenter_greedy",
    "lsh_assign",
    "lsh_density",
    "make_pool",
    "normalize_rows",
    "random_select",
    "region_only_select",
    "run_al",
    "subset_metrics",
    "train",
    "uncertainty",
]
