"""Random-forest style trainer producing VotingEnsemble models.

Plain CART with Gini impurity, bootstrap resampling and per-split feature
subsampling. Deliberately small: the point is a trainable, serialisable
voting ensemble whose tree structure the audit tooling can traverse, not a
state-of-the-art learner. Exposed as a scikit-learn compatible estimator
so it drops into the usual pipelines.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .ensemble import VotingEnsemble, compute_thresholds
from .schema import FeatureSchema, count_features_schema
from .tree import DecisionNode, Leaf, Node
from .validation import as_count_matrix, as_label_list


def _gini(counts: np.ndarray) -> np.ndarray:
    """Gini impurity per row of a class-count matrix."""
    totals = counts.sum(axis=-1, keepdims=True)
    safe = np.maximum(totals, 1)
    p = counts / safe
    return 1.0 - (p * p).sum(axis=-1)


def _best_split(X: np.ndarray, y_idx: np.ndarray, rows: np.ndarray,
                n_classes: int, feature_ids: np.ndarray,
                min_leaf: int) -> tuple[int, float, float] | None:
    """Lowest weighted-impurity split over the candidate features.

    Returns (feature, threshold, impurity) or None when no feature admits a
    split that leaves min_leaf rows on both sides. Ties keep the first
    candidate in ascending feature order, then the lowest threshold.
    """
    n = rows.size
    best: tuple[int, float, float] | None = None
    for f in feature_ids:
        col = X[rows, f]
        order = np.argsort(col, kind="stable")
        sorted_col = col[order]
        sorted_y = y_idx[rows][order]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), sorted_y] = 1.0
        prefix = np.cumsum(onehot, axis=0)
        # split after position i keeps rows [0..i] on the left
        cut = np.nonzero(sorted_col[:-1] != sorted_col[1:])[0]
        if cut.size == 0:
            continue
        left_n = cut + 1
        right_n = n - left_n
        ok = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not ok.any():
            continue
        cut = cut[ok]
        left_n = left_n[ok]
        right_n = n - left_n
        left_counts = prefix[cut]
        right_counts = prefix[-1] - left_counts
        impurity = (left_n * _gini(left_counts) + right_n * _gini(right_counts)) / n
        at = int(np.argmin(impurity))
        if best is None or impurity[at] < best[2]:
            thr = (sorted_col[cut[at]] + sorted_col[cut[at] + 1]) / 2.0
            best = (int(f), float(thr), float(impurity[at]))
    return best


def _grow(X: np.ndarray, y_idx: np.ndarray, rows: np.ndarray, classes: tuple[str, ...],
          depth: int, max_depth: int, min_leaf: int, n_candidates: int,
          rng: np.random.Generator) -> Node:
    counts = np.bincount(y_idx[rows], minlength=len(classes))
    majority = classes[int(np.argmax(counts))]
    if depth >= max_depth or rows.size < 2 * min_leaf or np.count_nonzero(counts) <= 1:
        return Leaf(majority)
    feature_ids = np.sort(rng.choice(X.shape[1], size=n_candidates, replace=False))
    found = _best_split(X, y_idx, rows, len(classes), feature_ids, min_leaf)
    if found is None:
        return Leaf(majority)
    f, thr, _ = found
    mask = X[rows, f] <= thr
    left = _grow(X, y_idx, rows[mask], classes, depth + 1, max_depth,
                 min_leaf, n_candidates, rng)
    right = _grow(X, y_idx, rows[~mask], classes, depth + 1, max_depth,
                  min_leaf, n_candidates, rng)
    return DecisionNode(f, thr, left, right)


def _resolve_candidates(feature_subsample, n_features: int) -> int:
    if feature_subsample is None or feature_subsample == "all":
        return n_features
    if feature_subsample == "sqrt":
        return max(1, round(math.sqrt(n_features)))
    if isinstance(feature_subsample, float):
        return min(n_features, max(1, round(feature_subsample * n_features)))
    if isinstance(feature_subsample, int):
        if not (1 <= feature_subsample <= n_features):
            raise ValueError("feature_subsample out of range")
        return feature_subsample
    raise ValueError(f"bad feature_subsample: {feature_subsample!r}")


def train_forest(X, y, schema: FeatureSchema | None = None, *, n_trees: int = 100,
                 max_depth: int = 12, min_leaf: int = 4,
                 bootstrap_fraction: float = 0.8,
                 feature_subsample=0.75, seed: int = 0) -> VotingEnsemble:
    """Train a hard-voting forest; deterministic for a given seed.

    Defaults favour auditable trees: min_leaf 4 keeps single-row sliver
    leaves out, and the mild subsampling (75% of features per split, 80%
    bootstrap) decorrelates trees without forcing noise splits the way
    sqrt-subsampling does. Aggressive randomisation produces leaves with
    near-empty feature boxes that a region search cannot use.
    """
    X = as_count_matrix(X)
    y = as_label_list(y, X.shape[0])
    if schema is None:
        schema = count_features_schema([f"f{i}" for i in range(X.shape[1])])
    if X.shape[1] != len(schema):
        raise ValueError(
            f"data has {X.shape[1]} features but schema has {len(schema)}")
    classes = tuple(sorted(set(y)))
    if len(classes) < 2:
        raise ValueError("training data must contain at least two classes")
    if n_trees < 1:
        raise ValueError("n_trees must be positive")
    if not (0 < bootstrap_fraction <= 1.0):
        raise ValueError("bootstrap_fraction must be in (0, 1]")
    class_index = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([class_index[v] for v in y])
    n_candidates = _resolve_candidates(feature_subsample, X.shape[1])
    rng = np.random.default_rng(seed)
    n_boot = max(1, round(bootstrap_fraction * X.shape[0]))
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, X.shape[0], size=n_boot)
        trees.append(_grow(X, y_idx, rows, classes, 0, max_depth,
                           min_leaf, n_candidates, rng))
    return VotingEnsemble(schema=schema, classes=classes, trees=tuple(trees),
                          weights=(1.0,) * n_trees)


class VotingForestClassifier(BaseEstimator, ClassifierMixin):
    """scikit-learn front end over train_forest.

    After fit, ``ensemble_`` holds the traversable VotingEnsemble and
    ``thresholds_`` the per-class score thresholds estimated on the
    training data.
    """

    def __init__(self, n_trees: int = 100, max_depth: int = 12, min_leaf: int = 4,
                 bootstrap_fraction: float = 0.8, feature_subsample=0.75,
                 random_state: int = 0, schema: FeatureSchema | None = None):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.bootstrap_fraction = bootstrap_fraction
        self.feature_subsample = feature_subsample
        self.random_state = random_state
        self.schema = schema

    def fit(self, X, y) -> "VotingForestClassifier":
        self.ensemble_ = train_forest(
            X, y, self.schema, n_trees=self.n_trees, max_depth=self.max_depth,
            min_leaf=self.min_leaf, bootstrap_fraction=self.bootstrap_fraction,
            feature_subsample=self.feature_subsample, seed=self.random_state)
        X = as_count_matrix(X, len(self.ensemble_.schema))
        self.thresholds_ = compute_thresholds(self.ensemble_, X, list(y))
        self.classes_ = np.array(self.ensemble_.classes)
        self.n_features_in_ = len(self.ensemble_.schema)
        return self

    def predict(self, X) -> np.ndarray:
        X = as_count_matrix(X, self.n_features_in_)
        labels, _ = self.ensemble_.predict_batch(X)
        return np.array(labels)

    def predict_score(self, X) -> tuple[np.ndarray, np.ndarray]:
        """(labels, vote-share scores) per row."""
        X = as_count_matrix(X, self.n_features_in_)
        labels, scores = self.ensemble_.predict_batch(X)
        return np.array(labels), scores
