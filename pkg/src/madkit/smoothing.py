"""Moving-window noise filters applied before scoring.

A window of length ``h`` slides over each variable independently; only full
windows produce output, so a series of length ``T`` shrinks to ``T - h + 1``.
Output position ``j`` summarizes the original positions ``j .. j + h - 1``,
and downstream bookkeeping aligns labels to the window end ``j + h - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import FILTER_KINDS, SeriesMatrix


@dataclass(frozen=True)
class SmoothConfig:
    """Window length ``h`` (1 disables smoothing) and filter kind."""

    h: int = 1
    kind: str = "median"

    def __post_init__(self):
        if self.h < 1:
            raise ValueError("window length h must be at least 1")
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"kind must be one of {FILTER_KINDS}")


def smooth_series(x: np.ndarray, config: SmoothConfig) -> np.ndarray:
    """Apply the moving filter to one series.

    Returns an array of length ``len(x) - h + 1`` whose entry ``j`` is the
    mean or median of ``x[j : j + h]``.  An even-length median is the mean
    of the two middle order statistics.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("smooth_series expects a 1-D array")
    return _smooth_last_axis(x, config)


def smooth_matrix(matrix: SeriesMatrix, config: SmoothConfig) -> SeriesMatrix:
    """Apply the moving filter to every variable of a matrix.

    The result records the alignment shift: its ``time_offset`` grows by
    ``h - 1`` so column 0 maps back to the original timeline.
    """
    smoothed = _smooth_last_axis(matrix.values, config)
    return SeriesMatrix(
        names=list(matrix.names),
        values=smoothed,
        period_seconds=matrix.period_seconds,
        time_offset=matrix.time_offset + config.h - 1,
    )


def align_labels(labels: np.ndarray, h: int) -> np.ndarray:
    """Map original-timeline labels onto the smoothed timeline.

    Smoothed position ``j`` carries the original label at the window end
    ``j + h - 1``, so the aligned vector is ``labels[h - 1:]``.
    """
    labels = np.asarray(labels)
    if h < 1:
        raise ValueError("window length h must be at least 1")
    if labels.shape[-1] < h:
        raise ValueError("label vector shorter than the window")
    return labels[..., h - 1 :]


def _smooth_last_axis(values: np.ndarray, config: SmoothConfig) -> np.ndarray:
    t = values.shape[-1]
    if t < config.h:
        raise ValueError(f"series length {t} is shorter than window {config.h}")
    if config.h == 1:
        return values.copy()
    windows = sliding_window_view(values, config.h, axis=-1)
    if config.kind == "mean":
        return windows.mean(axis=-1)
    return np.median(windows, axis=-1)
