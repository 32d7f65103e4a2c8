"""End-to-end detection, explanation, and evaluation runs.

The detection pipeline runs in a fixed order: smooth, vif_prune, center,
fit_scatter, score, threshold, flag.  Fitting touches only training data;
scoring applies the fitted model to the test block.  Each run produces a
JSON-serializable report that records the step order, per-step wall-clock
timings (training fit and test scoring separately), the pruning trace, and
the threshold.  Reports are deterministic for fixed inputs and seed except
for the ``timing`` block.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from . import __version__ as _version
from .collinearity import ConstantVariableError, center, vif_prune
from .data import (
    CsvFormatError,
    DetectorModel,
    LabelVector,
    SeriesMatrix,
    SplitSpec,
    load_csv,
    split as split_matrix,
)
from .importance import (
    ImportanceReport,
    SingleClassError,
    assemble_explain_dataset,
    gini_importance,
    rcde,
    train_forest,
)
from .metrics import confusion, extract_clusters, f1, mcc, precision, recall, ric
from .scoring import SingularCovarianceError, fit_scatter, score_all
from .smoothing import SmoothConfig, smooth_matrix
from .thresholds import (
    GpdFitError,
    ThresholdSpec,
    chi2_threshold,
    flag as flag_scores,
    mvt_threshold,
    pot_threshold,
)

STEP_ORDER = (
    "smooth",
    "vif_prune",
    "center",
    "fit_scatter",
    "score",
    "threshold",
    "flag",
)

# distinct process exit code per failing pipeline stage
EXIT_CODES = {
    "ok": 0,
    "error": 1,
    "config": 2,
    "ingest": 10,
    "smooth": 11,
    "collinearity": 12,
    "scatter": 13,
    "threshold": 14,
    "score": 15,
    "explain": 16,
    "evaluate": 17,
}


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage name and exit code."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.exit_code = EXIT_CODES.get(stage, EXIT_CODES["error"])
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


@dataclass
class PipelineConfig:
    """All knobs of a detection / explanation run.

    ``train`` and ``test`` may be file paths or in-memory matrices; as an
    alternative, ``data`` plus ``train_end`` splits one source in two.
    """

    train: str | Path | SeriesMatrix | None = None
    test: str | Path | SeriesMatrix | None = None
    data: str | Path | SeriesMatrix | None = None
    train_end: int | None = None
    label_column: str | None = None
    smooth: SmoothConfig = dataclass_field(default_factory=SmoothConfig)
    vif_threshold: float = 5.0
    threshold: ThresholdSpec = dataclass_field(default_factory=ThresholdSpec)
    importance: str = "rf"
    rf_trees: int = 100
    rf_seed: int = 0
    step5_window: tuple[int, int] | None = None
    step5_extra: int = 1000
    step5_features: str = "smoothed"
    top: int = 5
    min_cluster_len: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.importance not in ("rf", "lr", "both"):
            raise ValueError("importance must be 'rf', 'lr', or 'both'")
        if self.step5_features not in ("smoothed", "raw"):
            raise ValueError("step5_features must be 'smoothed' or 'raw'")
        if self.top < 1:
            raise ValueError("top must be at least 1")


@dataclass
class DetectionResult:
    """Scores and flags over the smoothed test timeline.

    ``time_offset`` maps score index 0 back to original test position
    ``h - 1``.
    """

    scores: np.ndarray
    flags: LabelVector
    time_offset: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.flags),):
            raise ValueError("scores and flags must have equal length")


def _resolve_data(cfg: PipelineConfig):
    def load(source, what):
        if isinstance(source, SeriesMatrix):
            return source
        try:
            matrix, _ = load_csv(source, label_column=cfg.label_column)
        except (CsvFormatError, OSError) as exc:
            raise PipelineError("ingest", exc) from exc
        return matrix

    if cfg.data is not None:
        if cfg.train_end is None:
            raise PipelineError(
                "config", ValueError("data source requires train_end")
            )
        full = load(cfg.data, "data")
        try:
            return split_matrix(full, SplitSpec(cfg.train_end))
        except ValueError as exc:
            raise PipelineError("config", exc) from exc
    if cfg.train is None or cfg.test is None:
        raise PipelineError(
            "config",
            ValueError("provide train and test sources, or data with train_end"),
        )
    return load(cfg.train, "train"), load(cfg.test, "test")


def fit_detector(
    train: SeriesMatrix,
    smooth: SmoothConfig | None = None,
    vif_threshold: float = 5.0,
    threshold: ThresholdSpec | None = None,
) -> tuple[DetectorModel, dict]:
    """Fit a detector on training data (steps 1 to 4).

    Returns the model plus a fit report holding the pruning trace,
    training-score summary, and per-step timings.
    """
    smooth = smooth or SmoothConfig()
    threshold = threshold or ThresholdSpec()
    timings: dict[str, float] = {}

    # timing-step name -> error-stage name for exit codes
    stages = {
        "smooth": "smooth",
        "vif_prune": "collinearity",
        "center": "collinearity",
        "fit_scatter": "scatter",
        "threshold": "threshold",
    }

    def timed(step, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except (
            ValueError,
            ConstantVariableError,
            SingularCovarianceError,
            GpdFitError,
        ) as exc:
            raise PipelineError(stages[step], exc) from exc
        timings[step] = time.perf_counter() - t0
        return result

    smoothed = timed("smooth", smooth_matrix, train, smooth)
    report = timed("vif_prune", vif_prune, smoothed, vif_threshold)
    centered_all, means = timed("center", center, smoothed)
    reduced = centered_all[report.retained]
    fit = timed(
        "fit_scatter", fit_scatter, reduced, means[np.array(report.retained)]
    )

    t0 = time.perf_counter()
    train_scores = score_all(fit, reduced)
    timings["score"] = time.perf_counter() - t0

    def pick_threshold():
        if threshold.kind == "mvt":
            return mvt_threshold(train_scores), None
        if threshold.kind == "pot":
            return pot_threshold(train_scores, threshold)
        return chi2_threshold(fit.m, threshold.alpha), None

    k, gpd = timed("threshold", pick_threshold)

    model = DetectorModel(
        retained=list(report.retained),
        h=smooth.h,
        filter_kind=smooth.kind,
        mu=fit.mu,
        sigma=fit.sigma,
        sigma_chol=fit.chol,
        threshold_kind=threshold.kind,
        k=float(k),
        gpd=gpd,
        vif_trace=list(report.removed),
    )
    info = {
        "vif": {
            "threshold": vif_threshold,
            "removed": [[int(i), float(v)] for i, v in report.removed],
            "retained": [int(i) for i in report.retained],
            "final_vifs": [float(v) for v in report.final_vifs],
        },
        "threshold": _threshold_block(model),
        "train_scores": {
            "count": int(train_scores.size),
            "max": float(train_scores.max()),
            "mean": float(train_scores.mean()),
        },
        "timing": timings,
    }
    return model, info


def apply_detector(
    model: DetectorModel, test: SeriesMatrix
) -> tuple[DetectionResult, dict]:
    """Score and flag a test block with a fitted model (step scoring)."""
    if test.n_vars != model.n_original:
        raise PipelineError(
            "score",
            ValueError(
                f"model was fitted on {model.n_original} variables, "
                f"test data has {test.n_vars}"
            ),
        )
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    try:
        smoothed = smooth_matrix(test, SmoothConfig(model.h, model.filter_kind))
    except ValueError as exc:
        raise PipelineError("smooth", exc) from exc
    timings["smooth"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reduced = smoothed.values[model.retained] - model.mu[:, None]
    fit = _fit_view(model)
    scores = score_all(fit, reduced)
    timings["score"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    flags = flag_scores(scores, model.k)
    timings["flag"] = time.perf_counter() - t0
    result = DetectionResult(
        scores=scores, flags=flags, time_offset=model.h - 1
    )
    return result, {"timing": timings}


def _fit_view(model: DetectorModel):
    from .scoring import ScatterFit

    return ScatterFit(
        mu=model.mu,
        sigma=model.sigma,
        chol=model.sigma_chol,
        m=len(model.retained),
        t_effective=0,
    )


def _threshold_block(model: DetectorModel) -> dict:
    block = {"kind": model.threshold_kind, "k": model.k}
    if model.gpd is not None:
        g = model.gpd
        block["gpd"] = {
            "gamma": g.gamma,
            "delta": g.delta,
            "l": g.l,
            "t_l": g.t_l,
            "t_total": g.t_total,
            "loglik": g.loglik,
        }
    return block


def run_detect(
    cfg: PipelineConfig,
) -> tuple[DetectorModel, DetectionResult, dict]:
    """Run the full detection pipeline from a configuration."""
    train, test = _resolve_data(cfg)
    model, fit_info = fit_detector(
        train,
        smooth=cfg.smooth,
        vif_threshold=cfg.vif_threshold,
        threshold=cfg.threshold,
    )
    result, score_info = apply_detector(model, test)
    flags = result.flags.labels
    report = {
        "tool": {"name": "madkit", "version": _version},
        "config": _config_block(cfg),
        "steps": list(STEP_ORDER),
        "vif": fit_info["vif"],
        "threshold": fit_info["threshold"],
        "train_scores": fit_info["train_scores"],
        "detection": {
            "n_scores": int(result.scores.size),
            "n_flags": int(flags.sum()),
            "time_offset": result.time_offset,
            "flagged_intervals": _intervals(flags, result.time_offset),
        },
        "timing": {
            "fit_seconds": sum(fit_info["timing"].values()),
            "score_seconds": sum(score_info["timing"].values()),
            "per_step": {
                "fit": fit_info["timing"],
                "score": score_info["timing"],
            },
        },
    }
    return model, result, report


def report_core(report: dict) -> dict:
    """Copy of a detection report without the wall-clock timing block.

    Everything in the core is a pure function of inputs, configuration,
    and seed, so two runs on identical inputs produce byte-identical
    JSON serialisations of it.
    """
    return {k: copy.deepcopy(v) for k, v in report.items() if k != "timing"}


def _config_block(cfg: PipelineConfig) -> dict:
    def describe(source):
        if isinstance(source, SeriesMatrix):
            return f"<in-memory {source.n_vars}x{source.n_times}>"
        return str(source) if source is not None else None

    return {
        "train": describe(cfg.train),
        "test": describe(cfg.test),
        "data": describe(cfg.data),
        "train_end": cfg.train_end,
        "smooth_window": cfg.smooth.h,
        "smooth_kind": cfg.smooth.kind,
        "vif_threshold": cfg.vif_threshold,
        "threshold": cfg.threshold.kind,
        "pot_q": cfg.threshold.q,
        "pot_percentile": cfg.threshold.percentile,
        "chi2_alpha": cfg.threshold.alpha,
        "seed": cfg.seed,
    }


def _intervals(flags: np.ndarray, offset: int) -> list[dict]:
    clusters = extract_clusters(flags)
    return [
        {
            "start": int(c.start + offset),
            "end": int(c.end + offset),
            "length": int(c.length),
        }
        for c in clusters
    ]


def run_explain(
    cfg: PipelineConfig,
    model: DetectorModel,
    flags: LabelVector,
    *,
    train: SeriesMatrix,
    test: SeriesMatrix,
) -> list[ImportanceReport]:
    """Rank variables behind the flags in the configured window.

    Features come from the representation that produced the flags
    (smoothed, unless ``cfg.step5_features == "raw"``), over the original
    pre-pruning variable set, with ``cfg.step5_extra`` known-normal rows
    from the end of the training block.
    """
    smooth = SmoothConfig(model.h, model.filter_kind)
    if cfg.step5_features == "smoothed":
        feat_test = smooth_matrix(test, smooth)
        feat_train = smooth_matrix(train, smooth)
    else:
        # raw columns aligned to the smoothed timeline (window ends)
        feat_test = test.slice_time(model.h - 1, test.n_times)
        feat_train = train.slice_time(model.h - 1, train.n_times)
    window = cfg.step5_window or (0, feat_test.n_times)
    n_extra = min(cfg.step5_extra, feat_train.n_times)
    try:
        dataset = assemble_explain_dataset(
            feat_test,
            flags,
            window,
            train_tail=feat_train if n_extra > 0 else None,
            n_extra=n_extra,
        )
        reports = []
        if cfg.importance in ("rf", "both"):
            forest = train_forest(
                dataset, n_trees=cfg.rf_trees, seed=cfg.rf_seed
            )
            reports.append(gini_importance(forest, dataset))
        if cfg.importance in ("lr", "both"):
            reports.append(rcde(dataset))
    except (SingleClassError, ValueError, RuntimeError) as exc:
        raise PipelineError("explain", exc) from exc
    return reports


def run_evaluate(pred, truth, min_cluster_len: int = 1) -> dict:
    """Pointwise and cluster metrics for aligned prediction/truth vectors."""
    try:
        counts = confusion(pred, truth)
        clusters = extract_clusters(truth, min_length=min_cluster_len)
        block = {
            "counts": {
                "tp": counts.tp,
                "fp": counts.fp,
                "tn": counts.tn,
                "fn": counts.fn,
            },
            "precision": precision(counts),
            "recall": recall(counts),
            "f1": f1(counts),
            "mcc": mcc(counts),
            "clusters": [
                {"start": c.start, "end": c.end, "length": c.length}
                for c in clusters
            ],
        }
        block["ric"] = ric(pred, clusters) if clusters else None
    except ValueError as exc:
        raise PipelineError("evaluate", exc) from exc
    return block
