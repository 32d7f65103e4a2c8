"""Command-line interface.

Subcommands: ``detect`` (fit on train, flag test), ``explain`` (rank the
variables behind flags in a window), ``evaluate`` (score predictions
against truth), ``synth`` (emit a synthetic corpus), ``fit`` (fit and save
a model), ``score`` (apply a saved model to data).

Every flag can also be supplied through a JSON config file (``--config``)
whose keys mirror the flag names; explicit flags win over the file.  Exit
codes are 0 on success, 2 for bad configuration, and a distinct nonzero
code per failing pipeline stage (see ``pipeline.EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .data import (
    CsvFormatError,
    LabelVector,
    ModelFormatError,
    load_csv,
    load_model,
    save_csv,
    save_model,
)
from .pipeline import (
    EXIT_CODES,
    PipelineConfig,
    PipelineError,
    apply_detector,
    fit_detector,
    run_detect,
    run_evaluate,
    run_explain,
)
from .smoothing import SmoothConfig, align_labels
from .synthetic import AnomalySpec, CollinearGroup, SynthConfig, generate
from .thresholds import ThresholdSpec

_STEP_DEFAULTS = {
    "smooth-window": 1,
    "smooth-kind": "median",
    "vif-threshold": 5.0,
    "threshold": "mvt",
    "pot-q": 0.001,
    "pot-percentile": 0.99,
    "chi2-alpha": 0.01,
}

_EXPLAIN_DEFAULTS = {
    "importance": "rf",
    "rf-trees": 100,
    "rf-seed": 0,
    "step5-window": None,
    "step5-extra": 1000,
    "step5-features": "smoothed",
    "top": 5,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        options = _merge_config(args)
        return args.handler(options)
    except PipelineError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return exc.exit_code
    except (CsvFormatError, ModelFormatError, OSError) as exc:
        print(f"error [ingest]: {exc}", file=sys.stderr)
        return EXIT_CODES["ingest"]
    except ValueError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="madkit",
        description="Mahalanobis-distance anomaly detection for "
        "multivariate time series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file of flag values")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help="run seed (default 0)")

    def add_step_flags(p):
        p.add_argument("--smooth-window", type=int, metavar="H")
        p.add_argument("--smooth-kind", choices=("mean", "median"))
        p.add_argument("--vif-threshold", type=float)
        p.add_argument("--threshold", choices=("mvt", "pot", "chi2"))
        p.add_argument("--pot-q", type=float)
        p.add_argument("--pot-percentile", type=float)
        p.add_argument("--chi2-alpha", type=float)
        p.add_argument("--label-column", help="label column to strip from data")

    def add_data_flags(p):
        p.add_argument("--train", help="training CSV")
        p.add_argument("--test", help="test CSV")
        p.add_argument("--data", help="single CSV, split with --train-end")
        p.add_argument("--train-end", type=int)

    def add_explain_flags(p):
        p.add_argument("--importance", choices=("rf", "lr", "both"))
        p.add_argument("--rf-trees", type=int, metavar="B")
        p.add_argument("--rf-seed", type=int)
        p.add_argument(
            "--step5-window", metavar="START:END", help="window to explain"
        )
        p.add_argument("--step5-extra", type=int, metavar="COUNT")
        p.add_argument("--step5-features", choices=("smoothed", "raw"))
        p.add_argument("--top", type=int, metavar="V")

    p = sub.add_parser("detect", help="fit on train data and flag test data")
    add_data_flags(p)
    add_step_flags(p)
    add_common(p)
    p.add_argument("--scores-out", help="write timestamp,score,flag CSV here")
    p.add_argument(
        "--intervals-out",
        help="write flagged intervals as start,end,length CSV here",
    )
    p.add_argument("--model-out", help="save the fitted model here")
    p.add_argument(
        "--summary", action="store_true", help="print a plain-text summary"
    )
    p.set_defaults(handler=_cmd_detect)

    p = sub.add_parser("explain", help="rank variables behind flagged windows")
    add_data_flags(p)
    add_step_flags(p)
    add_explain_flags(p)
    add_common(p)
    p.add_argument("--model", help="reuse a saved model instead of refitting")
    p.set_defaults(handler=_cmd_explain)

    p = sub.add_parser("evaluate", help="compare predictions against truth")
    p.add_argument("--pred", required=True, help="CSV holding predictions")
    p.add_argument("--truth", required=True, help="CSV holding ground truth")
    p.add_argument("--pred-column", default="flag")
    p.add_argument("--truth-column", default="label")
    p.add_argument(
        "--smooth-window",
        type=int,
        metavar="H",
        help="align truth to a window-H smoothed timeline",
    )
    p.add_argument("--min-cluster-len", type=int)
    add_common(p)
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--n", type=int, required=True, help="variable count")
    p.add_argument("--t-train", type=int, required=True)
    p.add_argument("--t-test", type=int, required=True)
    p.add_argument(
        "--collinear",
        action="append",
        metavar="BASE:DEP,DEP:NOISE",
        help="collinear group; repeatable",
    )
    p.add_argument(
        "--anomaly",
        action="append",
        metavar="START:LEN:VARS:MAG",
        help="planted anomaly; repeatable",
    )
    add_common(p)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("fit", help="fit a model on training data and save it")
    p.add_argument("--train", required=True, help="training CSV")
    add_step_flags(p)
    add_common(p)
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("score", help="apply a saved model to data")
    p.add_argument("--model", required=True, help="model file from fit/detect")
    p.add_argument("--data", required=True, help="CSV to score")
    p.add_argument("--label-column", help="label column to strip from data")
    add_common(p)
    p.set_defaults(handler=_cmd_score)

    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    """Flag values merged over the --config file, dashes normalized."""
    options = {
        k.replace("_", "-"): v
        for k, v in vars(args).items()
        if k not in ("handler", "command")
    }
    config_path = options.pop("config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config file {config_path}: {exc}")
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in loaded.items():
            key = key.replace("_", "-")
            if key not in options:
                raise ValueError(f"unknown config key {key!r}")
            if options[key] in (None, False):
                options[key] = value
    return options


def _get(options: dict, key: str, defaults: dict | None = None):
    value = options.get(key)
    if value is None and defaults is not None:
        value = defaults.get(key)
    return value


def _pipeline_config(options: dict) -> PipelineConfig:
    def step(key):
        return _get(options, key, _STEP_DEFAULTS)

    def explain(key):
        return _get(options, key, _EXPLAIN_DEFAULTS)

    window = explain("step5-window")
    if isinstance(window, str):
        window = _parse_window(window)
    return PipelineConfig(
        train=options.get("train"),
        test=options.get("test"),
        data=options.get("data"),
        train_end=options.get("train-end"),
        label_column=options.get("label-column"),
        smooth=SmoothConfig(h=step("smooth-window"), kind=step("smooth-kind")),
        vif_threshold=step("vif-threshold"),
        threshold=ThresholdSpec(
            kind=step("threshold"),
            q=step("pot-q"),
            percentile=step("pot-percentile"),
            alpha=step("chi2-alpha"),
        ),
        importance=explain("importance") or "rf",
        rf_trees=explain("rf-trees") or 100,
        rf_seed=explain("rf-seed") if explain("rf-seed") is not None else 0,
        step5_window=window,
        step5_extra=explain("step5-extra"),
        step5_features=explain("step5-features"),
        top=explain("top"),
        min_cluster_len=options.get("min-cluster-len") or 1,
        seed=options.get("seed") or 0,
    )


def _parse_window(text: str) -> tuple[int, int]:
    try:
        start, end = text.split(":")
        return int(start), int(end)
    except ValueError:
        raise ValueError(f"window must look like START:END, got {text!r}")


def _emit(payload: dict | list, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _write_scores_csv(path, result) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "score", "flag"])
        flags = result.flags.labels
        for i, s in enumerate(result.scores):
            writer.writerow(
                [i + result.time_offset, repr(float(s)), int(flags[i])]
            )


def _read_label_column(path, column: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if column not in header:
            raise CsvFormatError(f"{path}: no column named {column!r}")
        ci = header.index(column)
        out = []
        for r, row in enumerate(reader):
            if not row:
                continue
            cell = row[ci]
            if cell not in ("0", "1"):
                raise CsvFormatError(
                    f"{path}: line {r + 2}, column {column!r}: label must be "
                    f"'0' or '1', got {cell!r}"
                )
            out.append(int(cell))
    if not out:
        raise CsvFormatError(f"{path}: no data rows")
    return np.array(out, dtype=np.int8)


# ---------------------------------------------------------------------------
# handlers


def _cmd_detect(options: dict) -> int:
    cfg = _pipeline_config(options)
    model, result, report = run_detect(cfg)
    if options.get("model-out"):
        save_model(model, options["model-out"])
    if options.get("scores-out"):
        _write_scores_csv(options["scores-out"], result)
    if options.get("intervals-out"):
        with open(
            options["intervals-out"], "w", newline="", encoding="utf-8"
        ) as fh:
            writer = csv.writer(fh)
            writer.writerow(["start", "end", "length"])
            for iv in report["detection"]["flagged_intervals"]:
                writer.writerow([iv["start"], iv["end"], iv["length"]])
    if options.get("summary"):
        _print_summary(report)
    _emit(report, options.get("out"))
    return EXIT_CODES["ok"]


def _print_summary(report: dict) -> None:
    vif = report["vif"]
    det = report["detection"]
    thr = report["threshold"]
    lines = [
        f"retained {len(vif['retained'])} variables "
        f"({len(vif['removed'])} removed by VIF screening)",
        f"threshold {thr['kind']} k={thr['k']:.6g}",
        f"flagged {det['n_flags']} of {det['n_scores']} scored positions "
        f"in {len(det['flagged_intervals'])} intervals",
    ]
    for iv in det["flagged_intervals"][:10]:
        lines.append(
            f"  interval {iv['start']}..{iv['end']} (length {iv['length']})"
        )
    print("\n".join(lines))


def _cmd_explain(options: dict) -> int:
    cfg = _pipeline_config(options)
    from .pipeline import _resolve_data

    train, test = _resolve_data(cfg)
    if options.get("model"):
        model = load_model(options["model"])
    else:
        model, _ = fit_detector(
            train,
            smooth=cfg.smooth,
            vif_threshold=cfg.vif_threshold,
            threshold=cfg.threshold,
        )
    result, _ = apply_detector(model, test)
    reports = run_explain(cfg, model, result.flags, train=train, test=test)
    payload = [
        {
            "method": rep.method,
            "top": rep.top(cfg.top),
            "ranking": [
                {"variable": name, "score": score} for name, score in rep.ranking
            ],
        }
        for rep in reports
    ]
    _emit(payload, options.get("out"))
    return EXIT_CODES["ok"]


def _cmd_evaluate(options: dict) -> int:
    pred = _read_label_column(options["pred"], options.get("pred-column") or "flag")
    truth = _read_label_column(
        options["truth"], options.get("truth-column") or "label"
    )
    h = options.get("smooth-window") or 1
    if h > 1:
        truth = align_labels(truth, h)
    if pred.size != truth.size:
        raise PipelineError(
            "evaluate",
            ValueError(
                f"prediction length {pred.size} does not match aligned "
                f"truth length {truth.size}"
            ),
        )
    block = run_evaluate(pred, truth, options.get("min-cluster-len") or 1)
    _emit(block, options.get("out"))
    return EXIT_CODES["ok"]


def _cmd_synth(options: dict) -> int:
    groups = tuple(
        _parse_collinear(text) for text in options.get("collinear") or ()
    )
    anomalies = tuple(
        _parse_anomaly(text) for text in options.get("anomaly") or ()
    )
    config = SynthConfig(
        n=options["n"],
        t_train=options["t-train"],
        t_test=options["t-test"],
        collinear_groups=groups,
        anomalies=anomalies,
        seed=options.get("seed") or 0,
    )
    matrix, truth, spec = generate(config)
    prefix = options.get("out") or "synth"
    train_m = matrix.slice_time(0, spec.train_end)
    test_m = matrix.slice_time(spec.train_end, matrix.n_times)
    save_csv(train_m, f"{prefix}_train.csv")
    save_csv(test_m, f"{prefix}_test.csv")
    _write_truth_csv(
        f"{prefix}_truth.csv", truth.labels[spec.train_end :]
    )
    print(
        f"wrote {prefix}_train.csv ({train_m.n_times} rows), "
        f"{prefix}_test.csv ({test_m.n_times} rows), "
        f"{prefix}_truth.csv"
    )
    return EXIT_CODES["ok"]


def _write_truth_csv(path, labels: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"])
        for v in labels:
            writer.writerow([int(v)])


def _parse_collinear(text: str) -> CollinearGroup:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ValueError(
            f"collinear group must look like BASE:DEP,DEP[:NOISE], got {text!r}"
        )
    deps = tuple(int(c) for c in parts[1].split(",") if c != "")
    noise = float(parts[2]) if len(parts) == 3 else 0.0
    return CollinearGroup(base=int(parts[0]), dependents=deps, noise_scale=noise)


def _parse_anomaly(text: str) -> AnomalySpec:
    parts = text.split(":")
    if len(parts) != 4:
        raise ValueError(
            f"anomaly must look like START:LENGTH:VARS:MAGNITUDE, got {text!r}"
        )
    variables = tuple(int(c) for c in parts[2].split(",") if c != "")
    return AnomalySpec(
        start=int(parts[0]),
        length=int(parts[1]),
        variables=variables,
        magnitude=float(parts[3]),
    )


def _cmd_fit(options: dict) -> int:
    cfg = _pipeline_config(options)
    matrix, _ = load_csv(options["train"], label_column=cfg.label_column)
    model, info = fit_detector(
        matrix,
        smooth=cfg.smooth,
        vif_threshold=cfg.vif_threshold,
        threshold=cfg.threshold,
    )
    out = options.get("out")
    if not out:
        raise ValueError("fit requires --out for the model file")
    save_model(model, out)
    print(
        f"fitted model on {matrix.n_vars} variables "
        f"({len(model.retained)} retained), threshold "
        f"{model.threshold_kind} k={model.k:.6g}; saved to {out}"
    )
    return EXIT_CODES["ok"]


def _cmd_score(options: dict) -> int:
    model = load_model(options["model"])
    matrix, _ = load_csv(
        options["data"], label_column=options.get("label-column")
    )
    result, _ = apply_detector(model, matrix)
    out = options.get("out")
    if out:
        _write_scores_csv(out, result)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(["timestamp", "score", "flag"])
        flags = result.flags.labels
        for i, s in enumerate(result.scores):
            writer.writerow([i + result.time_offset, repr(float(s)), int(flags[i])])
    return EXIT_CODES["ok"]


if __name__ == "__main__":
    sys.exit(main())
