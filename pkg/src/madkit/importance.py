"""Per-variable explanations for flagged anomaly windows.

Two rankings over the original (pre-pruning) variables are supported:

* random-forest Gini importance: a from-scratch forest of classification
  trees is trained to separate flagged from unflagged observations, and a
  variable's importance is its mean total Gini-impurity decrease per tree,
  each split weighted by the fraction of training rows reaching its node;
* logistic relative change in deviance explained (RCDE): for a ridge
  logistic fit, the share of explained deviance that is lost when one
  variable is removed.

The classifier dataset pairs a flagged window of scored observations with
an optional tail of known-normal training rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import LabelVector, SeriesMatrix

PROVENANCE_WINDOW = "test-window"
PROVENANCE_TAIL = "training-tail"


class SingleClassError(ValueError):
    """The assembled window contains only one class, so nothing separates."""


class ConvergenceError(RuntimeError):
    """Iterative fitting hit its iteration cap (often separation; raise
    the ridge penalty)."""


@dataclass
class ExplainDataset:
    """Rows to classify: flagged-window observations plus normal tail rows.

    ``features`` is (N, p) in original variable order, ``targets`` the 0/1
    class per row, ``provenance`` one of the module's provenance strings.
    """

    features: np.ndarray
    targets: np.ndarray
    feature_names: list[str]
    provenance: list[str]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets).astype(np.int8)
        n, p = self.features.shape
        if n < 2:
            raise ValueError("need at least two rows")
        if self.targets.shape != (n,) or len(self.provenance) != n:
            raise ValueError("targets and provenance must have one entry per row")
        if len(self.feature_names) != p:
            raise ValueError("one name per feature column")
        classes = np.unique(self.targets)
        if classes.size < 2:
            raise SingleClassError(
                "window contains a single class; widen it or add tail rows"
            )

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def assemble_explain_dataset(
    test: SeriesMatrix,
    flags,
    window: tuple[int, int],
    train_tail: SeriesMatrix | None = None,
    n_extra: int = 0,
) -> ExplainDataset:
    """Build the classifier dataset for a flagged window.

    Parameters
    ----------
    test : SeriesMatrix
        The representation that produced the flags (smoothed when h > 1),
        columns aligned one-to-one with ``flags``.
    flags : LabelVector or array
        Per-column 0/1 predictions over ``test``.
    window : (start, stop)
        Half-open column range of ``test`` to explain.
    train_tail : SeriesMatrix, optional
        Same variables as ``test``; its last ``n_extra`` columns are added
        as known-normal rows (target 0).
    n_extra : int
        How many tail columns to add; 0 disables the tail.
    """
    f = flags.labels if isinstance(flags, LabelVector) else np.asarray(flags)
    if f.shape != (test.n_times,):
        raise ValueError("flags must have one entry per test column")
    start, stop = window
    if not (0 <= start < stop <= test.n_times):
        raise ValueError(
            f"window {window} out of range for {test.n_times} columns"
        )
    rows = [test.values[:, start:stop].T]
    targets = [f[start:stop]]
    provenance = [PROVENANCE_WINDOW] * (stop - start)
    if n_extra < 0:
        raise ValueError("n_extra must be non-negative")
    if n_extra > 0:
        if train_tail is None:
            raise ValueError("n_extra > 0 requires a training tail matrix")
        if train_tail.names != test.names:
            raise ValueError("training tail variables must match the test set")
        if n_extra > train_tail.n_times:
            raise ValueError("n_extra exceeds the training tail length")
        rows.append(train_tail.values[:, train_tail.n_times - n_extra :].T)
        targets.append(np.zeros(n_extra, dtype=np.int8))
        provenance += [PROVENANCE_TAIL] * n_extra
    return ExplainDataset(
        features=np.vstack(rows),
        targets=np.concatenate(targets),
        feature_names=list(test.names),
        provenance=provenance,
    )


@dataclass
class ImportanceReport:
    """A ranking of variables by importance, best first.

    ``method`` is ``"rf-gini"`` or ``"lr-rcde"``; ``ranking`` holds
    ``(variable_name, score)`` pairs sorted by descending score, ties
    broken toward the lower variable index.
    """

    method: str
    ranking: list[tuple[str, float]]

    def top(self, v: int) -> list[str]:
        return [name for name, _ in self.ranking[:v]]


def _rank(names: list[str], scores: np.ndarray, method: str) -> ImportanceReport:
    order = np.argsort(-scores, kind="stable")
    ranking = [(names[i], float(scores[i])) for i in order]
    return ImportanceReport(method=method, ranking=ranking)


# ---------------------------------------------------------------------------
# random forest


@dataclass
class DecisionTree:
    """One fitted tree, stored as parallel node arrays.

    ``feature[i] < 0`` marks a leaf.  ``n_node`` and ``count1`` are the
    training rows and class-1 rows reaching each node; ``decrease`` is the
    Gini impurity decrease of the node's split (0 at leaves).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_node: np.ndarray
    count1: np.ndarray
    impurity: np.ndarray
    decrease: np.ndarray
    seed: int
    oob_indices: np.ndarray
    max_depth: int
    n_train: int

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Leaf majority class per row; leaf ties vote for class 1."""
        features = np.asarray(features, dtype=np.float64)
        n = features.shape[0]
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        for _ in range(self.max_depth + 1):
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            vals = features[rows, np.where(active, feat, 0)]
            go_left = vals <= self.threshold[node]
            node = np.where(
                active, np.where(go_left, self.left[node], self.right[node]), node
            )
        ones = self.count1[node]
        return (2 * ones >= self.n_node[node]).astype(np.int8)

    def importances(self, n_features: int) -> np.ndarray:
        """Total impurity decrease per variable, nodes weighted by the
        fraction of training rows they see."""
        imp = np.zeros(n_features)
        splits = self.feature >= 0
        weights = self.n_node[splits] / self.n_train * self.decrease[splits]
        np.add.at(imp, self.feature[splits], weights)
        return imp


@dataclass
class Forest:
    """A bag of trees with the sampling parameters that grew them."""

    trees: list[DecisionTree]
    tree_seeds: list[int]
    n_trees: int
    t_min: int
    q_features: int
    n_features: int
    feature_names: list[str] = field(default_factory=list)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Majority vote across trees; exact ties vote for class 1."""
        features = np.asarray(features, dtype=np.float64)
        votes = np.zeros(features.shape[0], dtype=np.int64)
        for tree in self.trees:
            votes += tree.predict(features)
        return (2 * votes >= self.n_trees).astype(np.int8)


def _gini(ones: float, total: float) -> float:
    p1 = ones / total
    p0 = 1.0 - p1
    return 1.0 - p1 * p1 - p0 * p0


def _best_split(sub: np.ndarray, y: np.ndarray, parent_gini: float):
    """Best Gini split over the columns of ``sub``.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values.  Returns ``(gain, column, threshold)`` or ``None`` when no
    column admits a split with positive impurity decrease.
    """
    s = sub.shape[0]
    order = np.argsort(sub, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(sub, order, axis=0)
    ones = np.cumsum(y[order], axis=0, dtype=np.float64)
    n_left = np.arange(1, s, dtype=np.float64)[:, None]
    n_right = s - n_left
    ones_left = ones[:-1]
    ones_right = ones[-1] - ones_left
    gini_left = 1.0 - (
        ones_left**2 + (n_left - ones_left) ** 2
    ) / (n_left * n_left)
    gini_right = 1.0 - (
        ones_right**2 + (n_right - ones_right) ** 2
    ) / (n_right * n_right)
    weighted = (n_left * gini_left + n_right * gini_right) / s
    weighted[sorted_vals[:-1] >= sorted_vals[1:]] = np.inf  # duplicate values
    flat = int(np.argmin(weighted))
    pos, col = divmod(flat, weighted.shape[1])
    best = weighted[pos, col]
    if not np.isfinite(best):
        return None
    gain = parent_gini - float(best)
    if gain <= 0.0:
        return None
    lo = sorted_vals[pos, col]
    hi = sorted_vals[pos + 1, col]
    thr = (lo + hi) / 2.0
    if thr >= hi:  # midpoint rounded up to the right value
        thr = lo
    return gain, int(col), float(thr)


def _grow_tree(
    features: np.ndarray,
    targets: np.ndarray,
    t_min: int,
    q: int,
    seed: int,
) -> DecisionTree:
    rng = np.random.default_rng(seed)
    n, p = features.shape
    boot = rng.integers(0, n, size=n)
    oob = np.setdiff1d(np.arange(n), boot)
    x = features[boot]
    y = targets[boot].astype(np.float64)

    feat_l, thr_l, left_l, right_l = [], [], [], []
    n_l, c1_l, imp_l, dec_l = [], [], [], []

    def new_node():
        feat_l.append(-1)
        thr_l.append(0.0)
        left_l.append(-1)
        right_l.append(-1)
        n_l.append(0)
        c1_l.append(0)
        imp_l.append(0.0)
        dec_l.append(0.0)
        return len(feat_l) - 1

    max_depth = 0
    stack = [(new_node(), np.arange(n), 0)]
    while stack:
        node_id, idx, depth = stack.pop()
        max_depth = max(max_depth, depth)
        s = idx.size
        ones = int(y[idx].sum())
        gini = _gini(ones, s)
        n_l[node_id] = s
        c1_l[node_id] = ones
        imp_l[node_id] = gini
        if s <= t_min or ones == 0 or ones == s:
            continue
        cols = rng.choice(p, size=q, replace=False)
        split = _best_split(x[idx[:, None], cols[None, :]], y[idx], gini)
        if split is None:
            continue
        gain, col, thr = split
        go_left = x[idx, cols[col]] <= thr
        feat_l[node_id] = int(cols[col])
        thr_l[node_id] = thr
        dec_l[node_id] = gain
        left_id = new_node()
        right_id = new_node()
        left_l[node_id] = left_id
        right_l[node_id] = right_id
        stack.append((left_id, idx[go_left], depth + 1))
        stack.append((right_id, idx[~go_left], depth + 1))

    return DecisionTree(
        feature=np.array(feat_l, dtype=np.int32),
        threshold=np.array(thr_l),
        left=np.array(left_l, dtype=np.int32),
        right=np.array(right_l, dtype=np.int32),
        n_node=np.array(n_l, dtype=np.int64),
        count1=np.array(c1_l, dtype=np.int64),
        impurity=np.array(imp_l),
        decrease=np.array(dec_l),
        seed=seed,
        oob_indices=oob,
        max_depth=max_depth,
        n_train=n,
    )


def train_forest(
    data: ExplainDataset,
    n_trees: int = 100,
    t_min: int = 2,
    q_features: int | None = None,
    seed: int = 0,
) -> Forest:
    """Grow a random forest on the explanation dataset.

    Each tree sees a bootstrap of all rows; each node draws
    ``q_features`` variables without replacement (default: floor of the
    square root of the variable count) and takes the best Gini split.
    Per-tree seeds are derived deterministically from ``seed``, so the
    same call rebuilds bit-identical trees regardless of growth order.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    if t_min < 1:
        raise ValueError("t_min must be at least 1")
    p = data.n_features
    if q_features is None:
        q_features = max(1, int(math.isqrt(p)))
    if not 1 <= q_features <= p:
        raise ValueError(f"q_features must lie in 1 .. {p}")
    tree_seeds = [
        int(s) for s in np.random.SeedSequence(seed).generate_state(n_trees)
    ]
    trees = [
        _grow_tree(data.features, data.targets, t_min, q_features, ts)
        for ts in tree_seeds
    ]
    return Forest(
        trees=trees,
        tree_seeds=tree_seeds,
        n_trees=n_trees,
        t_min=t_min,
        q_features=q_features,
        n_features=p,
        feature_names=list(data.feature_names),
    )


def gini_importance(forest: Forest, data: ExplainDataset) -> ImportanceReport:
    """Mean per-tree Gini importance, ranked descending."""
    if data.n_features != forest.n_features:
        raise ValueError("dataset feature count does not match the forest")
    total = np.zeros(forest.n_features)
    for tree in forest.trees:
        total += tree.importances(forest.n_features)
    return _rank(data.feature_names, total / forest.n_trees, "rf-gini")


def oob_accuracy(forest: Forest, data: ExplainDataset) -> float:
    """Accuracy of out-of-bag majority votes over rows that have any."""
    n = data.n_rows
    votes1 = np.zeros(n, dtype=np.int64)
    votes_total = np.zeros(n, dtype=np.int64)
    for tree in forest.trees:
        oob = tree.oob_indices
        if oob.size == 0:
            continue
        votes1[oob] += tree.predict(data.features[oob])
        votes_total[oob] += 1
    covered = votes_total > 0
    if not covered.any():
        raise ValueError("no row is out of bag; grow more trees")
    pred = (2 * votes1[covered] >= votes_total[covered]).astype(np.int8)
    return float((pred == data.targets[covered]).mean())


# ---------------------------------------------------------------------------
# logistic regression and deviance-based importance


@dataclass
class LogisticFit:
    """Ridge logistic fit with the deviances needed for RCDE."""

    coef: np.ndarray
    intercept: float
    d_null: float
    d_full: float
    n_iter: int


def _null_deviance(y: np.ndarray) -> float:
    n1 = float(y.sum())
    n0 = y.size - n1
    p_bar = n1 / y.size
    return -2.0 * (n1 * math.log(p_bar) + n0 * math.log(1.0 - p_bar))


def _fit_glm(x: np.ndarray, y: np.ndarray, ridge: float, max_iter: int = 100):
    """Newton (IRLS) fit of ridge logistic regression with free intercept.

    Maximizes ``loglik - ridge/2 * |coef|^2`` (intercept unpenalized);
    declares convergence when the largest coefficient update is below
    1e-8.  The no-predictor case reduces to the closed-form null model so
    deviance comparisons against it are exact.
    """
    n, p = x.shape
    if p == 0:
        n1 = float(y.sum())
        p_bar = n1 / n
        return np.empty(0), math.log(p_bar / (1.0 - p_bar)), _null_deviance(y), 0
    design = np.hstack([np.ones((n, 1)), x])
    beta = np.zeros(p + 1)
    penalty = np.full(p + 1, ridge)
    penalty[0] = 0.0
    for it in range(1, max_iter + 1):
        eta = design @ beta
        prob = 1.0 / (1.0 + np.exp(-np.clip(eta, -35.0, 35.0)))
        w = prob * (1.0 - prob)
        grad = design.T @ (y - prob) - penalty * beta
        hess = (design * w[:, None]).T @ design
        hess[np.diag_indices_from(hess)] += penalty
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                "singular update (separation?); increase the ridge penalty"
            ) from exc
        beta = beta + step
        if np.abs(step).max() < 1e-8:
            eta = design @ beta
            loglik = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
            return beta[1:], float(beta[0]), -2.0 * loglik, it
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations "
        f"(often separation; increase the ridge penalty)"
    )


def fit_logistic(data: ExplainDataset, ridge: float = 1e-6) -> LogisticFit:
    """Fit ridge logistic regression of the targets on all features."""
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    y = data.targets.astype(np.float64)
    coef, intercept, d_full, n_iter = _fit_glm(data.features, y, ridge)
    return LogisticFit(
        coef=coef,
        intercept=intercept,
        d_null=_null_deviance(y),
        d_full=d_full,
        n_iter=n_iter,
    )


def rcde(data: ExplainDataset, ridge: float = 1e-6) -> ImportanceReport:
    """Relative change in deviance explained, per variable.

    For variable x, ``((D_null - D_full) - (D_null - D_wo_x)) /
    (D_null - D_full)`` where ``D_wo_x`` refits without x.  With a single
    predictor this is exactly 1.  Raises when the full model explains no
    deviance.
    """
    y = data.targets.astype(np.float64)
    _, _, d_full, _ = _fit_glm(data.features, y, ridge)
    d_null = _null_deviance(y)
    denom = d_null - d_full
    if not denom > 0.0:
        raise ValueError(
            "full model explains no deviance; RCDE is undefined"
        )
    p = data.n_features
    scores = np.empty(p)
    for j in range(p):
        reduced = np.delete(data.features, j, axis=1)
        _, _, d_wo, _ = _fit_glm(reduced, y, ridge)
        scores[j] = ((d_null - d_full) - (d_null - d_wo)) / denom
    return _rank(data.feature_names, scores, "lr-rcde")
