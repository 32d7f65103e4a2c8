"""Pointwise and cluster-level evaluation of binary anomaly predictions.

Pointwise scores follow the usual confusion-matrix definitions with the
convention that a zero denominator yields 0.  Cluster-level recall is the
rate of identified clusters (RIC): the fraction of maximal runs of 1s in
the truth that receive at least one predicted positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabelVector


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class AnomalyCluster:
    """A maximal run of 1s: inclusive ``start .. end`` with its length."""

    start: int
    end: int
    length: int


def _as_binary(vec, what: str) -> np.ndarray:
    if isinstance(vec, LabelVector):
        return vec.labels
    arr = np.asarray(vec)
    if arr.ndim != 1:
        raise ValueError(f"{what} must be 1-D")
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError(f"{what} must contain only 0 and 1")
    return arr.astype(np.int8)


def confusion(pred, truth) -> ConfusionCounts:
    """Count TP/FP/TN/FN between aligned binary vectors."""
    p = _as_binary(pred, "pred")
    t = _as_binary(truth, "truth")
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: pred {p.size}, truth {t.size}")
    counts = np.bincount(2 * t.astype(np.int64) + p, minlength=4)
    return ConfusionCounts(
        tp=int(counts[3]), fp=int(counts[1]), tn=int(counts[0]), fn=int(counts[2])
    )


def precision(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp
    return c.tp / denom if denom else 0.0


def recall(c: ConfusionCounts) -> float:
    denom = c.tp + c.fn
    return c.tp / denom if denom else 0.0


def f1(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 2 * c.tp / denom if denom else 0.0


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    factors = (
        (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    )
    if factors == 0:
        return 0.0
    num = c.tp * c.tn - c.fp * c.fn
    return num / math.sqrt(factors)


def extract_clusters(truth, min_length: int = 1) -> list[AnomalyCluster]:
    """Maximal runs of 1s in ``truth`` that are at least ``min_length`` long."""
    if min_length < 1:
        raise ValueError("min_length must be at least 1")
    t = _as_binary(truth, "truth")
    padded = np.concatenate(([0], t, [0]))
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return [
        AnomalyCluster(start=int(s), end=int(e), length=int(e - s + 1))
        for s, e in zip(starts, ends)
        if e - s + 1 >= min_length
    ]


def ric(pred, clusters: list[AnomalyCluster]) -> float:
    """Fraction of clusters overlapping at least one predicted positive."""
    if not clusters:
        raise ValueError("no clusters to identify")
    p = _as_binary(pred, "pred")
    last = max(c.end for c in clusters)
    if last >= p.size:
        raise ValueError("prediction vector does not cover the clusters")
    hit = sum(1 for c in clusters if p[c.start : c.end + 1].any())
    return hit / len(clusters)
