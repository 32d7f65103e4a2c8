"""Semi-supervised anomaly detection for multivariate time series.

The detection pipeline has five steps: (1) moving-window smoothing,
(2) variance-inflation-factor pruning of near-collinear variables,
(3) Mahalanobis-distance scoring against the training scatter,
(4) threshold selection (training maximum, peaks-over-threshold tail
extrapolation, or a chi-square reference quantile) with strict-exceedance
flagging, and (5) per-variable explanation of flagged windows by
random-forest Gini importance and logistic deviance shares.  Supporting
modules provide evaluation metrics, seeded synthetic corpora, and a
batch CLI (``madkit``).
"""

__version__ = "0.1.0"

from .collinearity import (
    ConstantVariableError,
    VifReport,
    center,
    compute_vifs,
    vif_prune,
)
from .data import (
    CsvFormatError,
    DetectorModel,
    GpdParameters,
    LabelVector,
    ModelFormatError,
    SeriesMatrix,
    SplitSpec,
    load_csv,
    load_headerless,
    load_model,
    save_csv,
    save_model,
    split,
)
from .importance import (
    ConvergenceError,
    DecisionTree,
    ExplainDataset,
    Forest,
    ImportanceReport,
    LogisticFit,
    SingleClassError,
    assemble_explain_dataset,
    fit_logistic,
    gini_importance,
    oob_accuracy,
    rcde,
    train_forest,
)
from .metrics import (
    AnomalyCluster,
    ConfusionCounts,
    confusion,
    extract_clusters,
    f1,
    mcc,
    precision,
    recall,
    ric,
)
from .pipeline import (
    EXIT_CODES,
    DetectionResult,
    PipelineConfig,
    PipelineError,
    apply_detector,
    fit_detector,
    report_core,
    run_detect,
    run_evaluate,
    run_explain,
)
from .scoring import (
    EigenBasis,
    ScatterFit,
    SingularCovarianceError,
    decompose_score,
    eigen_basis,
    fit_scatter,
    score,
    score_all,
)
from .smoothing import SmoothConfig, align_labels, smooth_matrix, smooth_series
from .synthetic import AnomalySpec, CollinearGroup, SynthConfig, generate
from .thresholds import (
    GpdFitError,
    ThresholdSpec,
    chi2_threshold,
    fit_gpd,
    flag,
    gpd_loglik,
    mvt_threshold,
    pot_quantile,
    pot_threshold,
)

__all__ = [
    "__version__",
    "AnomalyCluster",
    "AnomalySpec",
    "CollinearGroup",
    "ConfusionCounts",
    "ConstantVariableError",
    "ConvergenceError",
    "CsvFormatError",
    "DecisionTree",
    "DetectionResult",
    "DetectorModel",
    "EigenBasis",
    "EXIT_CODES",
    "ExplainDataset",
    "Forest",
    "GpdFitError",
    "GpdParameters",
    "ImportanceReport",
    "LabelVector",
    "LogisticFit",
    "ModelFormatError",
    "PipelineConfig",
    "PipelineError",
    "ScatterFit",
    "SeriesMatrix",
    "SingleClassError",
    "SingularCovarianceError",
    "SmoothConfig",
    "SplitSpec",
    "SynthConfig",
    "ThresholdSpec",
    "VifReport",
    "align_labels",
    "apply_detector",
    "assemble_explain_dataset",
    "center",
    "chi2_threshold",
    "compute_vifs",
    "confusion",
    "decompose_score",
    "eigen_basis",
    "extract_clusters",
    "f1",
    "fit_detector",
    "fit_gpd",
    "fit_logistic",
    "fit_scatter",
    "flag",
    "generate",
    "gini_importance",
    "gpd_loglik",
    "load_csv",
    "load_headerless",
    "load_model",
    "mcc",
    "mvt_threshold",
    "oob_accuracy",
    "pot_quantile",
    "pot_threshold",
    "precision",
    "rcde",
    "recall",
    "report_core",
    "ric",
    "run_detect",
    "run_evaluate",
    "run_explain",
    "save_csv",
    "save_model",
    "score",
    "score_all",
    "smooth_matrix",
    "smooth_series",
    "split",
    "train_forest",
    "vif_prune",
]
