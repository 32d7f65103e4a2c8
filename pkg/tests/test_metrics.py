"""Pointwise and cluster evaluation metrics."""

import math

import numpy as np
import pytest

from madkit.metrics import (
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


def brute_metrics(pred, truth):
    """One explicit pass: the independent oracle for every pointwise metric."""
    tp = fp = tn = fn = 0
    for p, t in zip(pred, truth):
        if t == 1 and p == 1:
            tp += 1
        elif t == 0 and p == 1:
            fp += 1
        elif t == 0 and p == 0:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn


def brute_clusters(truth, min_length=1):
    runs = []
    start = None
    for i, t in enumerate(truth):
        if t == 1 and start is None:
            start = i
        elif t == 0 and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(truth) - 1))
    return [(s, e) for s, e in runs if e - s + 1 >= min_length]


def test_confusion_frozen_example():
    pred = np.array([1, 1, 0, 0, 0, 0])
    truth = np.array([1, 0, 1, 1, 1, 0])
    c = confusion(pred, truth)
    assert (c.tp, c.fp, c.tn, c.fn) == (1, 1, 1, 3)
    assert c.total == 6


def test_precision_recall_f1_frozen():
    # tp=1, fp=1, fn=3: precision 1/2, recall 1/4, F1 = 2tp/(2tp+fp+fn) = 1/3
    c = ConfusionCounts(tp=1, fp=1, tn=1, fn=3)
    assert precision(c) == 0.5
    assert recall(c) == 0.25
    assert abs(f1(c) - 1.0 / 3.0) < 1e-15


def test_zero_denominators_give_zero():
    no_pred = ConfusionCounts(tp=0, fp=0, tn=5, fn=2)
    assert precision(no_pred) == 0.0
    no_truth = ConfusionCounts(tp=0, fp=2, tn=5, fn=0)
    assert recall(no_truth) == 0.0
    nothing = ConfusionCounts(tp=0, fp=0, tn=5, fn=0)
    assert f1(nothing) == 0.0
    assert mcc(nothing) == 0.0


def test_mcc_frozen_example():
    # tp=6, tn=3, fp=1, fn=2: numerator 18-2=16, denominator sqrt(7*8*5*4)
    c = ConfusionCounts(tp=6, fp=1, tn=3, fn=2)
    assert abs(mcc(c) - 16.0 / math.sqrt(1120.0)) < 1e-12


def test_mcc_extremes():
    perfect = ConfusionCounts(tp=5, fp=0, tn=5, fn=0)
    assert mcc(perfect) == 1.0
    inverted = ConfusionCounts(tp=0, fp=5, tn=0, fn=5)
    assert mcc(inverted) == -1.0


def test_mcc_no_overflow_on_large_counts():
    # int64 products overflow silently in numpy; counts stay Python ints
    big = 10**7
    c = ConfusionCounts(tp=big, fp=big, tn=big, fn=big)
    assert mcc(c) == 0.0
    c2 = ConfusionCounts(tp=big, fp=1, tn=big, fn=1)
    assert 0.99 < mcc(c2) <= 1.0


def test_confusion_validation():
    with pytest.raises(ValueError):
        confusion(np.array([0, 1]), np.array([0, 1, 1]))
    with pytest.raises(ValueError):
        confusion(np.array([0, 2]), np.array([0, 1]))


def test_confusion_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = int(rng.integers(1, 200))
        pred = (rng.random(n) < 0.3).astype(int)
        truth = (rng.random(n) < 0.2).astype(int)
        c = confusion(pred, truth)
        assert (c.tp, c.fp, c.tn, c.fn) == brute_metrics(pred, truth)


def test_clusters_frozen_example():
    truth = np.array([0, 1, 1, 0, 1])
    got = [(c.start, c.end) for c in extract_clusters(truth)]
    assert got == [(1, 2), (4, 4)]
    got2 = [(c.start, c.end) for c in extract_clusters(truth, min_length=2)]
    assert got2 == [(1, 2)]


def test_clusters_edges_and_degenerates():
    assert extract_clusters(np.zeros(10, dtype=int)) == []
    full = extract_clusters(np.ones(7, dtype=int))
    assert [(c.start, c.end, c.length) for c in full] == [(0, 6, 7)]
    single = extract_clusters(np.array([1, 0, 0, 0, 1]))
    assert [(c.start, c.end) for c in single] == [(0, 0), (4, 4)]


def test_clusters_match_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(1, 300))
        truth = (rng.random(n) < 0.35).astype(int)
        min_len = int(rng.integers(1, 4))
        got = [(c.start, c.end) for c in extract_clusters(truth, min_len)]
        assert got == brute_clusters(truth, min_len)


def test_cluster_record_fields():
    c = AnomalyCluster(start=3, end=5, length=3)
    assert (c.start, c.end, c.length) == (3, 5, 3)


def test_ric_prediction_must_cover_clusters():
    truth = np.array([0, 0, 0, 1, 1])
    clusters = extract_clusters(truth)
    with pytest.raises(ValueError, match="cover"):
        ric(np.array([0, 1]), clusters)


def test_ric_frozen_example():
    # three truth clusters, predictions touch two of them
    truth = np.array([1, 1, 0, 1, 0, 1])
    pred = np.array([1, 0, 0, 1, 0, 0])
    clusters = extract_clusters(truth)
    assert len(clusters) == 3
    assert abs(ric(pred, clusters) - 2.0 / 3.0) < 1e-15


def test_ric_counts_any_overlap():
    truth = np.array([0, 1, 1, 1, 0])
    pred = np.array([0, 0, 0, 1, 0])  # one point of the cluster suffices
    assert ric(pred, extract_clusters(truth)) == 1.0


def test_ric_all_zero_prediction():
    truth = np.array([0, 1, 0, 1, 1])
    pred = np.zeros(5, dtype=int)
    assert ric(pred, extract_clusters(truth)) == 0.0


def test_ric_requires_clusters():
    with pytest.raises(ValueError, match="cluster"):
        ric(np.array([0, 1]), [])


def test_ric_matches_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = int(rng.integers(5, 300))
        truth = (rng.random(n) < 0.3).astype(int)
        clusters = extract_clusters(truth)
        if not clusters:
            continue
        pred = (rng.random(n) < 0.3).astype(int)
        covered = sum(
            1 for s, e in brute_clusters(truth) if any(pred[s : e + 1])
        )
        assert ric(pred, clusters) == covered / len(brute_clusters(truth))
