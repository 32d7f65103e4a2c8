"""Typed containers and file I/O for multivariate time-series detection.

The central container is :class:`SeriesMatrix`, an ``n x T`` matrix of real
observations (one row per variable, one column per timestamp).  Ground-truth
and predicted anomaly labels travel in :class:`LabelVector`.  A fitted
detector is a :class:`DetectorModel`, which can be serialized to a versioned
text file and reloaded without losing precision.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODEL_FORMAT_HEADER = "madkit-model v1"

THRESHOLD_KINDS = ("mvt", "pot", "chi2")
FILTER_KINDS = ("mean", "median")


class CsvFormatError(ValueError):
    """Raised when a delimited input file cannot be parsed."""


class ModelFormatError(ValueError):
    """Raised when a model file is unreadable, truncated, or wrong version."""


@dataclass
class SeriesMatrix:
    """An ``n x T`` block of real-valued observations.

    Parameters
    ----------
    names : list of str
        Unique variable names, one per row.
    values : ndarray, shape (n, T)
        Finite float64 observations. Treated as immutable after construction.
    period_seconds : float, optional
        Sampling period metadata; no computation depends on it.
    time_offset : int
        Index in the original timeline that column 0 corresponds to.  Raw
        ingested data has offset 0; smoothing advances it by ``h - 1``.
    """

    names: list[str]
    values: np.ndarray
    period_seconds: float | None = None
    time_offset: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D array (variables x time)")
        n, t = self.values.shape
        if n < 1:
            raise ValueError("need at least one variable")
        if t < 2:
            raise ValueError("need at least two observations")
        if len(self.names) != n:
            raise ValueError(f"{len(self.names)} names for {n} rows")
        if len(set(self.names)) != n:
            raise ValueError("variable names must be unique")
        if not np.isfinite(self.values).all():
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise ValueError(
                f"non-finite value for variable {self.names[bad[0]]!r} "
                f"at position {bad[1]}"
            )
        if self.period_seconds is not None and not self.period_seconds > 0:
            raise ValueError("period_seconds must be positive")
        if self.time_offset < 0:
            raise ValueError("time_offset must be non-negative")

    @property
    def n_vars(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    def select(self, indices) -> "SeriesMatrix":
        """Return a new matrix containing only the given variable rows."""
        indices = list(indices)
        return SeriesMatrix(
            names=[self.names[i] for i in indices],
            values=self.values[indices],
            period_seconds=self.period_seconds,
            time_offset=self.time_offset,
        )

    def slice_time(self, start: int, stop: int) -> "SeriesMatrix":
        """Return columns ``start:stop`` as a new matrix."""
        return SeriesMatrix(
            names=list(self.names),
            values=self.values[:, start:stop],
            period_seconds=self.period_seconds,
            time_offset=self.time_offset + start,
        )


@dataclass
class LabelVector:
    """A 0/1 integer label per timestamp of some :class:`SeriesMatrix`."""

    labels: np.ndarray
    aligned_to: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 1:
            raise ValueError("labels must be 1-D")
        if self.labels.size == 0:
            raise ValueError("labels must be non-empty")
        vals = np.unique(self.labels)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError("labels must contain only 0 and 1")
        self.labels = self.labels.astype(np.int8)

    def __len__(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class SplitSpec:
    """Column index at which training data ends and test data begins."""

    train_end: int

    def __post_init__(self):
        if self.train_end < 2:
            raise ValueError("train_end must be at least 2")


def split(matrix: SeriesMatrix, spec: SplitSpec) -> tuple[SeriesMatrix, SeriesMatrix]:
    """Split a matrix into (training, test) halves at ``spec.train_end``."""
    if not spec.train_end < matrix.n_times:
        raise ValueError(
            f"train_end {spec.train_end} leaves no test columns "
            f"(T = {matrix.n_times})"
        )
    return matrix.slice_time(0, spec.train_end), matrix.slice_time(
        spec.train_end, matrix.n_times
    )


@dataclass
class GpdParameters:
    """Generalized Pareto tail fit attached to a POT-thresholded model."""

    gamma: float
    delta: float
    l: float
    t_l: int
    t_total: int
    loglik: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.t_l < 1 or self.t_total < self.t_l:
            raise ValueError("need 1 <= t_l <= t_total")


@dataclass
class DetectorModel:
    """Everything needed to score and flag new data.

    ``retained`` indexes into the original variable order; ``mu``, ``sigma``
    and ``sigma_chol`` are in the reduced (retained) order.  ``vif_trace``
    records the removed variables as ``(original_index, vif_at_removal)``
    pairs, in removal order.
    """

    retained: list[int]
    h: int
    filter_kind: str
    mu: np.ndarray
    sigma: np.ndarray
    sigma_chol: np.ndarray
    threshold_kind: str
    k: float
    gpd: GpdParameters | None = None
    vif_trace: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        self.sigma_chol = np.asarray(self.sigma_chol, dtype=np.float64)
        m = len(self.retained)
        if m < 1:
            raise ValueError("model must retain at least one variable")
        if sorted(set(self.retained)) != sorted(self.retained):
            raise ValueError("retained indices must be distinct")
        if self.h < 1:
            raise ValueError("h must be at least 1")
        if self.filter_kind not in FILTER_KINDS:
            raise ValueError(f"filter_kind must be one of {FILTER_KINDS}")
        if self.threshold_kind not in THRESHOLD_KINDS:
            raise ValueError(f"threshold_kind must be one of {THRESHOLD_KINDS}")
        if self.mu.shape != (m,):
            raise ValueError("mu length must match retained count")
        if self.sigma.shape != (m, m) or self.sigma_chol.shape != (m, m):
            raise ValueError("sigma and sigma_chol must be m x m")
        if not self.k > 0:
            raise ValueError("threshold k must be positive")
        if self.threshold_kind == "pot" and self.gpd is None:
            raise ValueError("POT model requires gpd parameters")
        removed = [i for i, _ in self.vif_trace]
        if set(removed) & set(self.retained):
            raise ValueError("removed and retained variables overlap")

    @property
    def n_original(self) -> int:
        """Variable count of the data this model was fitted on."""
        return len(self.retained) + len(self.vif_trace)


# ---------------------------------------------------------------------------
# delimited text ingestion


def _parse_rows(rows, names, path, first_data_line):
    """Convert string rows to a float64 matrix with located errors."""
    width = len(names)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(
                f"{path}: line {first_data_line + r} has {len(row)} fields, "
                f"expected {width}"
            )
    try:
        values = np.array(rows, dtype=np.float64)
    except ValueError:
        # slow path only to name the offending cell
        for r, row in enumerate(rows):
            for c, cell in enumerate(row):
                try:
                    float(cell)
                except ValueError:
                    raise CsvFormatError(
                        f"{path}: line {first_data_line + r}, column "
                        f"{names[c]!r}: cannot parse {cell!r} as a real"
                    ) from None
        raise
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        r, c = bad[0]
        raise CsvFormatError(
            f"{path}: line {first_data_line + r}, column {names[c]!r}: "
            f"non-finite value"
        )
    return values


def load_csv(
    path, label_column: str | None = None
) -> tuple[SeriesMatrix, LabelVector | None]:
    """Load a header-bearing CSV of real-valued columns.

    Parameters
    ----------
    path : str or Path
        CSV file with a header row; every non-label cell must parse as a
        finite real.
    label_column : str, optional
        Name of a 0/1 ground-truth column to split off.  Its cells must be
        exactly ``"0"`` or ``"1"``.

    Returns
    -------
    (SeriesMatrix, LabelVector or None)
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise CsvFormatError(f"{path}: duplicate header names {dupes}")
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")

    labels = None
    if label_column is not None:
        if label_column not in header:
            raise CsvFormatError(f"{path}: no column named {label_column!r}")
        li = header.index(label_column)
        raw = [row[li] for row in rows]
        for r, cell in enumerate(raw):
            if cell not in ("0", "1"):
                raise CsvFormatError(
                    f"{path}: line {r + 2}, column {label_column!r}: label "
                    f"must be '0' or '1', got {cell!r}"
                )
        labels = LabelVector(
            np.array(raw, dtype=np.int8), aligned_to=str(path)
        )
        header = header[:li] + header[li + 1 :]
        rows = [row[:li] + row[li + 1 :] for row in rows]

    values = _parse_rows(rows, header, path, first_data_line=2)
    matrix = SeriesMatrix(names=header, values=values.T)
    return matrix, labels


def load_headerless(path, name_prefix: str = "v") -> SeriesMatrix:
    """Load a headerless delimited numeric file (comma or whitespace).

    This is the adapter for plain text dumps such as server-monitoring
    datasets: delimiters are normalized to commas and variables are named
    ``v1 .. vn`` by column position.
    """
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            normalized = line.replace("\t", ",").replace(" ", ",")
            rows.append([c for c in normalized.split(",") if c != ""])
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    names = [f"{name_prefix}{i + 1}" for i in range(len(rows[0]))]
    values = _parse_rows(rows, names, path, first_data_line=1)
    return SeriesMatrix(names=names, values=values.T)


def save_csv(
    matrix: SeriesMatrix,
    path,
    labels: LabelVector | None = None,
    label_column: str = "label",
) -> None:
    """Write a matrix (optionally with a 0/1 label column) as CSV.

    Reals are written with ``repr``, which round-trips float64 exactly, so
    ``load_csv(save_csv(m))`` reproduces ``m.values`` bit for bit.
    """
    path = Path(path)
    header = list(matrix.names)
    if labels is not None:
        if len(labels) != matrix.n_times:
            raise ValueError("label length must match matrix T")
        header.append(label_column)
    cols = matrix.values.T
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        if labels is None:
            for row in cols:
                writer.writerow([repr(float(v)) for v in row])
        else:
            lab = labels.labels
            for t, row in enumerate(cols):
                writer.writerow([repr(float(v)) for v in row] + [str(lab[t])])


# ---------------------------------------------------------------------------
# model serialization

_REAL = "%.17g"  # round-trips IEEE754 double exactly


def _fmt_reals(vec) -> str:
    return ",".join(_REAL % v for v in np.asarray(vec, dtype=np.float64))


def _parse_reals(text: str) -> np.ndarray:
    if text == "":
        return np.empty(0)
    return np.array([float(c) for c in text.split(",")], dtype=np.float64)


def save_model(model: DetectorModel, path) -> None:
    """Write a model as versioned, self-describing UTF-8 text."""
    lines = [MODEL_FORMAT_HEADER]
    lines.append(f"threshold_kind: {model.threshold_kind}")
    lines.append(f"h: {model.h}")
    lines.append(f"filter_kind: {model.filter_kind}")
    lines.append("k: " + _REAL % model.k)
    lines.append("retained: " + ",".join(str(i) for i in model.retained))
    trace = ";".join(f"{i}," + _REAL % v for i, v in model.vif_trace)
    lines.append("vif_trace: " + trace)
    lines.append("mu: " + _fmt_reals(model.mu))
    m = len(model.retained)
    lines.append(f"sigma_rows: {m}")
    for row in model.sigma:
        lines.append(_fmt_reals(row))
    if model.gpd is not None:
        g = model.gpd
        lines.append(
            "gpd: "
            + ",".join(
                [_REAL % g.gamma, _REAL % g.delta, _REAL % g.l]
                + [str(g.t_l), str(g.t_total)]
                + [_REAL % g.loglik]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _take(lines, key: str, path) -> str:
    if not lines:
        raise ModelFormatError(f"{path}: truncated model file, missing {key!r}")
    line = lines.pop(0)
    prefix = key + ":"
    if not line.startswith(prefix):
        raise ModelFormatError(f"{path}: expected {key!r} field, got {line!r}")
    return line[len(prefix) :].strip()


def load_model(path) -> DetectorModel:
    """Load a model written by :func:`save_model`."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"{path}: cannot read model file: {exc}") from exc
    lines = [ln for ln in raw.splitlines() if ln.strip() != ""]
    if not lines:
        raise ModelFormatError(f"{path}: empty model file")
    header = lines.pop(0)
    if header != MODEL_FORMAT_HEADER:
        raise ModelFormatError(
            f"{path}: unsupported model format {header!r}, "
            f"expected {MODEL_FORMAT_HEADER!r}"
        )
    try:
        threshold_kind = _take(lines, "threshold_kind", path)
        h = int(_take(lines, "h", path))
        filter_kind = _take(lines, "filter_kind", path)
        k = float(_take(lines, "k", path))
        retained_text = _take(lines, "retained", path)
        retained = [int(c) for c in retained_text.split(",") if c != ""]
        trace_text = _take(lines, "vif_trace", path)
        vif_trace = []
        if trace_text:
            for item in trace_text.split(";"):
                idx, vif = item.split(",")
                vif_trace.append((int(idx), float(vif)))
        mu = _parse_reals(_take(lines, "mu", path))
        m = int(_take(lines, "sigma_rows", path))
        if len(lines) < m:
            raise ModelFormatError(f"{path}: truncated sigma block")
        sigma = np.array([_parse_reals(lines.pop(0)) for _ in range(m)])
        if sigma.shape != (m, m):
            raise ModelFormatError(f"{path}: sigma block is not {m} x {m}")
        gpd = None
        if lines and lines[0].startswith("gpd:"):
            parts = _take(lines, "gpd", path).split(",")
            if len(parts) != 6:
                raise ModelFormatError(f"{path}: malformed gpd field")
            gpd = GpdParameters(
                gamma=float(parts[0]),
                delta=float(parts[1]),
                l=float(parts[2]),
                t_l=int(parts[3]),
                t_total=int(parts[4]),
                loglik=float(parts[5]),
            )
    except (ValueError, IndexError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: corrupted model file: {exc}") from exc
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ModelFormatError(
            f"{path}: stored sigma is not positive definite"
        ) from exc
    try:
        return DetectorModel(
            retained=retained,
            h=h,
            filter_kind=filter_kind,
            mu=mu,
            sigma=sigma,
            sigma_chol=chol,
            threshold_kind=threshold_kind,
            k=k,
            gpd=gpd,
            vif_trace=vif_trace,
        )
    except ValueError as exc:
        raise ModelFormatError(f"{path}: invalid model contents: {exc}") from exc
