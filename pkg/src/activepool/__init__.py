"""Pool-based active learning toolkit.

Query heuristics from three families (committee disagreement, SVM margins,
posterior probabilities) drive a generic fit/select/label loop over built-in
classifiers (an SMO-trained kernel SVM with one-against-all multiclass and
sigmoid calibration, and shrinkage LDA), plus a benchmark harness that
aggregates repeated trials into learning curves.
"""

__version__ = "0.1.0"

from .dataset import (
    Dataset,
    Split,
    generate_gaussian_mixture,
    generate_three_class_toy,
    load_csv,
    stratified_split,
)
from .kernels import KernelConfig, gram_matrix, kernel_eval, normalized_similarity
from .models import (
    LdaModel,
    LdaTrainer,
    MulticlassSvmModel,
    SvmTrainer,
    cross_validate,
    train_binary_svm,
    train_lda,
    train_multiclass_svm,
)
from .clustering import ClusterAssignment, binary_split_largest, kernel_kmeans
from .heuristics import HeuristicError, ScoreVector
from .engine import (
    HEURISTIC_IDS,
    ActiveState,
    Oracle,
    StoppingRule,
    TrialHistory,
    build_heuristic,
    diversity_batch,
    initial_state,
    run_curve,
    run_iteration,
)
from .bench import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    LearningCurve,
    aggregate,
    compare,
    export,
    run_experiment,
)

__all__ = [
    "ActiveState",
    "ClusterAssignment",
    "ConfigError",
    "Dataset",
    "ExperimentConfig",
    "ExperimentResult",
    "HEURISTIC_IDS",
    "HeuristicError",
    "KernelConfig",
    "LdaModel",
    "LdaTrainer",
    "LearningCurve",
    "MulticlassSvmModel",
    "Oracle",
    "ScoreVector",
    "Split",
    "StoppingRule",
    "SvmTrainer",
    "TrialHistory",
    "aggregate",
    "binary_split_largest",
    "build_heuristic",
    "compare",
    "cross_validate",
    "diversity_batch",
    "export",
    "generate_gaussian_mixture",
    "generate_three_class_toy",
    "gram_matrix",
    "initial_state",
    "kernel_eval",
    "kernel_kmeans",
    "load_csv",
    "normalized_similarity",
    "run_curve",
    "run_experiment",
    "run_iteration",
    "stratified_split",
    "train_binary_svm",
    "train_lda",
    "train_multiclass_svm",
    "__version__",
]
