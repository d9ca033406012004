"""Transfer learning for nonparametric classification under posterior drift.

Weighted and adaptive k-nearest-neighbor classifiers that combine source
and target samples sharing a covariate distribution but differing in
their regression functions, plus a simulation harness for accuracy
sweeps and empirical convergence-rate checks.
"""

__version__ = "0.1.0"

from .core import (
    HyperParams,
    KnnPlan,
    LabeledSample,
    MultiKnnPlan,
    MultiSourceDataset,
    RandomSource,
    SampleSet,
    TransferDataset,
    merge_sources,
    pooled_sample_set,
    validate_dataset,
)
from .neighbors import (
    NeighborIndex,
    NeighborList,
    build_index,
    merged_knn,
    query_knn,
)
from .classifiers import (
    AdaptiveTrace,
    LepskiTrace,
    MultiAdaptiveTrace,
    adaptive_predict,
    bayes_classify,
    combined_budget_k,
    default_knn_k,
    knn_predict,
    lepski_predict,
    minimax_plan,
    multisource_adaptive_predict,
    multisource_plan,
    multisource_weighted_predict,
    snr_index,
    weighted_knn_eta,
    weighted_knn_predict,
)
from .simulation import (
    DriftModel,
    ExperimentRecord,
    McEstimate,
    RateCheckResult,
    classification_accuracy,
    excess_risk_mc,
    make_drift_model,
    rate_exponent_check,
    run_accuracy_experiment,
    run_preset,
    sample_dataset,
    sample_multisource_dataset,
    sample_test_points,
    summarize_accuracy,
    target_rate_exponent,
)

__all__ = [
    "__version__",
    "HyperParams", "KnnPlan", "LabeledSample", "MultiKnnPlan",
    "MultiSourceDataset", "RandomSource", "SampleSet", "TransferDataset",
    "merge_sources", "pooled_sample_set", "validate_dataset",
    "NeighborIndex", "NeighborList", "build_index", "merged_knn", "query_knn",
    "AdaptiveTrace", "LepskiTrace", "MultiAdaptiveTrace", "adaptive_predict",
    "bayes_classify", "combined_budget_k", "default_knn_k", "knn_predict",
    "lepski_predict",
    "minimax_plan", "multisource_adaptive_predict", "multisource_plan",
    "multisource_weighted_predict", "snr_index", "weighted_knn_eta",
    "weighted_knn_predict",
    "DriftModel", "ExperimentRecord", "McEstimate", "RateCheckResult",
    "classification_accuracy", "excess_risk_mc", "make_drift_model",
    "rate_exponent_check", "run_accuracy_experiment", "run_preset",
    "sample_dataset", "sample_multisource_dataset", "sample_test_points",
    "summarize_accuracy", "target_rate_exponent",
]
