"""End-to-end pipeline runs, reports, and the command-line interface."""

import json

import numpy as np
import pytest

from madkit.cli import main
from madkit.data import LabelVector, load_csv, load_model, save_csv
from madkit.pipeline import (
    EXIT_CODES,
    STEP_ORDER,
    PipelineConfig,
    PipelineError,
    apply_detector,
    fit_detector,
    report_core,
    run_detect,
    run_evaluate,
    run_explain,
)
from madkit.smoothing import SmoothConfig
from madkit.synthetic import AnomalySpec, CollinearGroup, SynthConfig, generate
from madkit.thresholds import ThresholdSpec


def corpus(seed=0, n=6, t_train=3000, t_test=800, anomalies=None, groups=()):
    if anomalies is None:
        anomalies = (
            AnomalySpec(
                start=t_train + 200, length=120, variables=(1, 3), magnitude=6.0
            ),
        )
    cfg = SynthConfig(
        n=n,
        t_train=t_train,
        t_test=t_test,
        collinear_groups=groups,
        anomalies=anomalies,
        seed=seed,
    )
    matrix, truth, spec = generate(cfg)
    train = matrix.slice_time(0, spec.train_end)
    test = matrix.slice_time(spec.train_end, matrix.n_times)
    return train, test, truth


# ---------------------------------------------------------------------------
# library-level pipeline


def test_fit_detector_structure():
    train, _, _ = corpus(groups=(CollinearGroup(base=0, dependents=(4,)),))
    model, info = fit_detector(train, vif_threshold=5.0)
    assert model.n_original == 6
    assert len(model.retained) == 5
    assert [i for i, _ in model.vif_trace] == [r[0] for r in info["vif"]["removed"]]
    assert info["train_scores"]["count"] == train.n_times
    assert set(info["timing"]) == {
        "smooth", "vif_prune", "center", "fit_scatter", "score", "threshold",
    }


def test_training_data_never_flags_itself_under_mvt():
    train, _, _ = corpus(seed=1)
    model, _ = fit_detector(train, threshold=ThresholdSpec(kind="mvt"))
    result, _ = apply_detector(model, train)
    assert result.flags.labels.sum() == 0


def test_detect_finds_planted_anomaly():
    train, test, truth = corpus(seed=2)
    model, _ = fit_detector(train)
    result, _ = apply_detector(model, test)
    flagged = np.flatnonzero(result.flags.labels)
    window = np.flatnonzero(truth.labels[3000:])
    assert flagged.size > 0
    assert np.isin(flagged, window).mean() > 0.9


def test_apply_detector_checks_variable_count():
    train, test, _ = corpus(seed=3)
    model, _ = fit_detector(train)
    with pytest.raises(PipelineError) as err:
        apply_detector(model, test.select([0, 1, 2]))
    assert err.value.stage == "score"
    assert err.value.exit_code == EXIT_CODES["score"]


def test_pipeline_error_stages_and_codes():
    rng = np.random.default_rng(4)
    from madkit.data import SeriesMatrix

    flat = SeriesMatrix(
        names=["a", "b"],
        values=np.vstack([np.ones(50), rng.standard_normal(50)]),
    )
    with pytest.raises(PipelineError) as err:
        fit_detector(flat)
    assert err.value.stage == "collinearity"
    assert err.value.exit_code == EXIT_CODES["collinearity"]

    short = SeriesMatrix(names=["a"], values=rng.standard_normal((1, 5)))
    with pytest.raises(PipelineError) as err:
        fit_detector(short, smooth=SmoothConfig(h=10))
    assert err.value.stage == "smooth"

    few = SeriesMatrix(names=["a", "b"], values=rng.standard_normal((2, 30)))
    with pytest.raises(PipelineError) as err:
        fit_detector(few, threshold=ThresholdSpec(kind="pot"))
    assert err.value.stage == "threshold"


def test_run_detect_report_shape():
    train, test, _ = corpus(seed=5)
    cfg = PipelineConfig(train=train, test=test)
    model, result, report = run_detect(cfg)
    assert report["steps"] == list(STEP_ORDER)
    assert report["tool"]["name"] == "madkit"
    assert report["detection"]["n_scores"] == result.scores.size
    assert report["detection"]["n_flags"] == int(result.flags.labels.sum())
    assert report["threshold"]["kind"] == "mvt"
    assert report["threshold"]["k"] == model.k
    assert "fit_seconds" in report["timing"]
    json.dumps(report)  # must be JSON-serializable as-is


def test_run_detect_deterministic_modulo_timing():
    train, test, _ = corpus(seed=6)
    cfg = PipelineConfig(train=train, test=test)
    _, _, r1 = run_detect(cfg)
    _, _, r2 = run_detect(cfg)
    assert json.dumps(report_core(r1), sort_keys=True) == json.dumps(
        report_core(r2), sort_keys=True
    )
    assert "timing" not in report_core(r1)


def test_run_detect_smoothing_shifts_time_offset():
    train, test, _ = corpus(seed=7)
    cfg = PipelineConfig(train=train, test=test, smooth=SmoothConfig(h=5))
    _, result, report = run_detect(cfg)
    assert result.time_offset == 4
    assert result.scores.size == test.n_times - 4
    assert report["detection"]["time_offset"] == 4


def test_run_detect_pot_produces_gpd_block():
    train, test, _ = corpus(seed=8, t_train=20000)
    cfg = PipelineConfig(
        train=train,
        test=test,
        threshold=ThresholdSpec(kind="pot", q=0.001, percentile=0.99),
    )
    model, _, report = run_detect(cfg)
    assert model.gpd is not None
    g = report["threshold"]["gpd"]
    assert g["t_total"] == train.n_times
    assert g["delta"] > 0
    assert report["threshold"]["k"] > g["l"]


def test_run_explain_ranks_planted_variables():
    anomalies = (
        AnomalySpec(start=3200, length=150, variables=(2, 4), magnitude=7.0),
    )
    train, test, _ = corpus(seed=9, anomalies=anomalies)
    cfg = PipelineConfig(train=train, test=test, importance="both", rf_trees=60)
    model, result, _ = run_detect(cfg)
    assert result.flags.labels.sum() > 0
    reports = run_explain(cfg, model, result.flags, train=train, test=test)
    assert [r.method for r in reports] == ["rf-gini", "lr-rcde"]
    for rep in reports:
        top = rep.top(3)
        assert "v3" in top
        assert "v5" in top


def test_run_explain_zero_flag_window_fails():
    train, test, _ = corpus(seed=10, anomalies=())
    cfg = PipelineConfig(train=train, test=test, step5_window=(0, 50))
    model, result, _ = run_detect(cfg)
    assert result.flags.labels[:50].sum() == 0
    with pytest.raises(PipelineError) as err:
        run_explain(cfg, model, result.flags, train=train, test=test)
    assert err.value.stage == "explain"
    assert err.value.exit_code == EXIT_CODES["explain"]


def test_run_evaluate_blocks():
    pred = np.array([1, 1, 0, 0, 0, 0])
    truth = np.array([1, 0, 1, 1, 1, 0])
    block = run_evaluate(pred, truth)
    assert block["counts"] == {"tp": 1, "fp": 1, "tn": 1, "fn": 3}
    assert block["precision"] == 0.5
    assert block["recall"] == 0.25
    assert abs(block["f1"] - 1.0 / 3.0) < 1e-12
    assert block["clusters"] == [
        {"start": 0, "end": 0, "length": 1},
        {"start": 2, "end": 4, "length": 3},
    ]
    assert block["ric"] == 0.5


def test_run_evaluate_all_zero_prediction():
    truth = np.array([0, 1, 1, 0, 1])
    block = run_evaluate(np.zeros(5, dtype=int), truth)
    assert block["ric"] == 0.0
    assert block["mcc"] == 0.0
    assert block["recall"] == 0.0


def test_run_evaluate_without_clusters():
    block = run_evaluate(np.array([0, 1]), np.array([0, 0]))
    assert block["clusters"] == []
    assert block["ric"] is None


def test_model_reuse_matches_fresh_run(tmp_path):
    from madkit.data import save_model

    train, test, _ = corpus(seed=11)
    model, _ = fit_detector(train)
    path = tmp_path / "m.model"
    save_model(model, path)
    back = load_model(path)
    r1, _ = apply_detector(model, test)
    r2, _ = apply_detector(back, test)
    assert np.array_equal(r1.scores, r2.scores)
    assert np.array_equal(r1.flags.labels, r2.flags.labels)


def test_pipeline_config_validation():
    with pytest.raises(ValueError, match="step5_features"):
        PipelineConfig(train="a.csv", test="b.csv", step5_features="fourier")
    with pytest.raises(ValueError, match="importance"):
        PipelineConfig(train="a.csv", test="b.csv", importance="shap")

    # missing sources surface as configuration-stage pipeline errors
    with pytest.raises(PipelineError) as err:
        run_detect(PipelineConfig())
    assert err.value.stage == "config"
    assert err.value.exit_code == EXIT_CODES["config"]

    train, test, _ = corpus(seed=13, t_train=500, t_test=100, anomalies=())
    full = np.hstack([train.values, test.values])
    from madkit.data import SeriesMatrix

    matrix = SeriesMatrix(names=train.names, values=full)
    with pytest.raises(PipelineError) as err:
        run_detect(PipelineConfig(data=matrix))  # train_end missing
    assert err.value.stage == "config"


# ---------------------------------------------------------------------------
# command-line interface


def write_corpus(tmp_path, seed=0):
    train, test, truth = corpus(
        seed=seed, groups=(CollinearGroup(base=0, dependents=(5,)),)
    )
    train_csv = tmp_path / "train.csv"
    test_csv = tmp_path / "test.csv"
    truth_csv = tmp_path / "truth.csv"
    save_csv(train, train_csv)
    save_csv(test, test_csv)
    with open(truth_csv, "w", encoding="utf-8") as fh:
        fh.write("label\n")
        for v in truth.labels[3000:]:
            fh.write(f"{int(v)}\n")
    return train_csv, test_csv, truth_csv


def test_cli_detect_writes_everything(tmp_path, capsys):
    train_csv, test_csv, _ = write_corpus(tmp_path)
    report_path = tmp_path / "report.json"
    scores_path = tmp_path / "scores.csv"
    intervals_path = tmp_path / "intervals.csv"
    model_path = tmp_path / "model.txt"
    code = main([
        "detect",
        "--train", str(train_csv),
        "--test", str(test_csv),
        "--out", str(report_path),
        "--scores-out", str(scores_path),
        "--intervals-out", str(intervals_path),
        "--model-out", str(model_path),
        "--summary",
    ])
    assert code == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["steps"] == list(STEP_ORDER)
    assert report["detection"]["n_flags"] > 0
    assert report["vif"]["removed"]  # the planted duplicate went away

    lines = scores_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "timestamp,score,flag"
    assert len(lines) == 1 + report["detection"]["n_scores"]

    intervals = intervals_path.read_text(encoding="utf-8").splitlines()
    assert intervals[0] == "start,end,length"
    assert len(intervals) == 1 + len(report["detection"]["flagged_intervals"])

    model = load_model(model_path)
    assert model.n_original == 6
    summary = capsys.readouterr().out
    assert "flagged" in summary


def test_cli_score_matches_detect(tmp_path):
    train_csv, test_csv, _ = write_corpus(tmp_path, seed=1)
    model_path = tmp_path / "model.txt"
    scores_a = tmp_path / "a.csv"
    scores_b = tmp_path / "b.csv"
    assert main([
        "detect", "--train", str(train_csv), "--test", str(test_csv),
        "--model-out", str(model_path), "--scores-out", str(scores_a),
        "--out", str(tmp_path / "r.json"),
    ]) == 0
    assert main([
        "score", "--model", str(model_path), "--data", str(test_csv),
        "--out", str(scores_b),
    ]) == 0
    assert scores_a.read_text(encoding="utf-8") == scores_b.read_text(
        encoding="utf-8"
    )


def test_cli_fit_then_score(tmp_path, capsys):
    train_csv, test_csv, _ = write_corpus(tmp_path, seed=2)
    model_path = tmp_path / "model.txt"
    assert main(["fit", "--train", str(train_csv), "--out", str(model_path)]) == 0
    assert "saved to" in capsys.readouterr().out
    assert main([
        "score", "--model", str(model_path), "--data", str(test_csv),
    ]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "timestamp,score,flag"


def test_cli_evaluate(tmp_path):
    train_csv, test_csv, truth_csv = write_corpus(tmp_path, seed=3)
    scores_path = tmp_path / "scores.csv"
    eval_path = tmp_path / "eval.json"
    assert main([
        "detect", "--train", str(train_csv), "--test", str(test_csv),
        "--scores-out", str(scores_path), "--out", str(tmp_path / "r.json"),
    ]) == 0
    assert main([
        "evaluate", "--pred", str(scores_path), "--truth", str(truth_csv),
        "--out", str(eval_path),
    ]) == 0
    block = json.loads(eval_path.read_text(encoding="utf-8"))
    assert block["recall"] > 0.5
    assert block["ric"] == 1.0


def test_cli_evaluate_length_mismatch(tmp_path, capsys):
    pred = tmp_path / "pred.csv"
    truth = tmp_path / "truth.csv"
    pred.write_text("flag\n0\n1\n", encoding="utf-8")
    truth.write_text("label\n0\n1\n1\n", encoding="utf-8")
    code = main(["evaluate", "--pred", str(pred), "--truth", str(truth)])
    assert code == EXIT_CODES["evaluate"]
    assert "does not match" in capsys.readouterr().err


def test_cli_explain(tmp_path):
    train_csv, test_csv, _ = write_corpus(tmp_path, seed=4)
    out_path = tmp_path / "explain.json"
    code = main([
        "explain", "--train", str(train_csv), "--test", str(test_csv),
        "--importance", "rf", "--rf-trees", "40",
        "--out", str(out_path), "--top", "3",
    ])
    assert code == 0
    payload = json.loads(out_path.read_text(encoding="utf-8"))
    assert payload[0]["method"] == "rf-gini"
    assert len(payload[0]["top"]) == 3
    assert {"v2", "v4"} <= set(payload[0]["top"])
    assert len(payload[0]["ranking"]) == 6


def test_cli_synth_round_trip(tmp_path, capsys):
    prefix = str(tmp_path / "demo")
    code = main([
        "synth", "--n", "4", "--t-train", "500", "--t-test", "200",
        "--collinear", "0:2", "--anomaly", "600:30:1:5.0",
        "--seed", "7", "--out", prefix,
    ])
    assert code == 0
    train, _ = load_csv(f"{prefix}_train.csv")
    test, _ = load_csv(f"{prefix}_test.csv")
    assert train.values.shape == (4, 500)
    assert test.values.shape == (4, 200)
    truth_lines = (
        (tmp_path / "demo_truth.csv").read_text(encoding="utf-8").splitlines()
    )
    assert truth_lines[0] == "label"
    labels = np.array([int(v) for v in truth_lines[1:]])
    assert labels.size == 200
    assert labels.sum() == 30
    assert labels[100:130].all()


def test_cli_config_file_merging(tmp_path):
    train_csv, test_csv, _ = write_corpus(tmp_path, seed=5)
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(
        json.dumps({
            "train": str(train_csv),
            "test": str(test_csv),
            "threshold": "chi2",
            "chi2_alpha": 0.001,
        }),
        encoding="utf-8",
    )
    report_path = tmp_path / "report.json"
    code = main([
        "detect", "--config", str(cfg_path), "--out", str(report_path),
        "--threshold", "mvt",  # explicit flag beats the file
    ])
    assert code == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["threshold"]["kind"] == "mvt"
    assert report["config"]["chi2_alpha"] == 0.001


def test_cli_config_rejects_unknown_keys(tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text('{"no_such_flag": 1}', encoding="utf-8")
    code = main(["detect", "--config", str(cfg_path)])
    assert code == EXIT_CODES["config"]
    assert "unknown config key" in capsys.readouterr().err


def test_cli_exit_codes(tmp_path, capsys):
    # missing data sources
    assert main(["detect"]) == EXIT_CODES["config"]
    capsys.readouterr()

    # unreadable csv
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1.0,oops\n", encoding="utf-8")
    good = tmp_path / "good.csv"
    good.write_text("a,b\n1.0,2.0\n2.0,1.0\n3.0,4.0\n", encoding="utf-8")
    assert main(
        ["detect", "--train", str(bad), "--test", str(good)]
    ) == EXIT_CODES["ingest"]
    capsys.readouterr()

    # constant training variable
    const = tmp_path / "const.csv"
    const.write_text(
        "a,b\n" + "".join(f"1.0,{v}.0\n" for v in range(20)), encoding="utf-8"
    )
    assert main(
        ["detect", "--train", str(const), "--test", str(good)]
    ) == EXIT_CODES["collinearity"]
    err = capsys.readouterr().err
    assert "error [collinearity]" in err


def test_cli_single_file_split(tmp_path):
    train, test, _ = corpus(seed=12, t_train=1000, t_test=300, anomalies=())
    full = tmp_path / "full.csv"
    merged = np.hstack([train.values, test.values])
    from madkit.data import SeriesMatrix

    save_csv(SeriesMatrix(names=train.names, values=merged), full)
    report_path = tmp_path / "report.json"
    code = main([
        "detect", "--data", str(full), "--train-end", "1000",
        "--out", str(report_path),
    ])
    assert code == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["detection"]["n_scores"] == 300
