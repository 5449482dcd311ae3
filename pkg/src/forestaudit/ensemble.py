"""Hard-voting decision tree ensembles with per-class score thresholds.

The classification score of a class is the weight share of trees voting
for it; the prediction is the highest-scoring real class (ties go to the
lowest class index). A patched ensemble additionally owns an anomaly
sentinel label: guarded leaves can divert their vote to it, the sentinel
never wins the argmax, and any weight it attracts depresses every real
class's score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tree import DecisionNode, Leaf, Node, route, validate_tree


class ThresholdError(ValueError):
    """Raised when per-class score thresholds cannot be estimated."""


@dataclass(frozen=True)
class ClassThresholds:
    """Score statistics of one class over its correctly labelled rows."""

    mu: float
    sigma: float
    t: float

    @staticmethod
    def from_scores(scores) -> "ClassThresholds":
        arr = np.asarray(scores, dtype=float)
        mu = float(arr.mean())
        sigma = float(arr.std())
        return ClassThresholds(mu, sigma, min(max(mu - sigma, 0.0), 1.0))


@dataclass
class VotingEnsemble:
    """A frozen, weighted hard-voting forest over one feature schema."""

    schema: object
    classes: tuple[str, ...]
    trees: tuple[Node, ...]
    weights: tuple[float, ...]
    anomalous_label: str | None = None
    _flat: list = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self) -> None:
        if len(self.trees) == 0:
            raise ValueError("ensemble needs at least one tree")
        if len(self.weights) != len(self.trees):
            raise ValueError("one weight per tree required")
        if any(w <= 0 for w in self.weights):
            raise ValueError("tree weights must be positive")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class labels must be unique")
        if self.anomalous_label is not None and self.anomalous_label not in self.classes:
            raise ValueError("anomalous label must be listed among the classes")
        known = set(self.classes)
        for t, root in enumerate(self.trees):
            validate_tree(root, len(self.schema), where=f"trees[{t}]")
            for leaf_label in _leaf_labels(root):
                if leaf_label not in known:
                    raise ValueError(f"trees[{t}]: unknown leaf label {leaf_label!r}")

    # -- scalar interface ---------------------------------------------------

    @property
    def real_classes(self) -> tuple[str, ...]:
        return tuple(c for c in self.classes if c != self.anomalous_label)

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights))

    def tree_vote(self, t: int, x) -> str:
        """Label tree t casts for x, after applying any leaf guards."""
        leaf = route(self.trees[t], x)
        if self.anomalous_label is not None:
            for g in leaf.guards:
                if x[g.feature] > g.threshold:
                    return self.anomalous_label
        return leaf.label

    def vote_shares(self, x) -> dict[str, float]:
        """Per-class weight share; shares sum to 1 over all classes."""
        shares = dict.fromkeys(self.classes, 0.0)
        for t in range(len(self.trees)):
            shares[self.tree_vote(t, x)] += self.weights[t]
        total = self.total_weight
        return {c: v / total for c, v in shares.items()}

    def predict(self, x) -> tuple[str, float]:
        """(label, score) for one instance; sentinel never wins the argmax."""
        shares = self.vote_shares(x)
        best = None
        best_share = -math.inf
        for c in self.classes:
            if c == self.anomalous_label:
                continue
            if shares[c] > best_share:
                best, best_share = c, shares[c]
        return best, best_share

    # -- batch interface ----------------------------------------------------

    def _flatten(self) -> list:
        if self._flat is None:
            class_index = {c: i for i, c in enumerate(self.classes)}
            self._flat = [_FlatTree(root, class_index) for root in self.trees]
        return self._flat

    def vote_matrix(self, X: np.ndarray) -> np.ndarray:
        """(n, n_classes) weight-share matrix; rows sum to 1."""
        X = np.asarray(X)
        n = X.shape[0]
        votes = np.zeros((n, len(self.classes)))
        anom_idx = (self.classes.index(self.anomalous_label)
                    if self.anomalous_label is not None else -1)
        rows = np.arange(n)
        for flat, w in zip(self._flatten(), self.weights):
            labels = flat.leaf_label_idx(X, anom_idx)
            votes[rows, labels] += w
        return votes / self.total_weight

    def predict_batch(self, X: np.ndarray) -> tuple[list[str], np.ndarray]:
        """Labels and scores for a matrix of instances."""
        shares = self.vote_matrix(X)
        if self.anomalous_label is not None:
            shares = shares.copy()
            shares[:, self.classes.index(self.anomalous_label)] = -1.0
        idx = np.argmax(shares, axis=1)
        labels = [self.classes[i] for i in idx]
        scores = shares[np.arange(len(idx)), idx]
        return labels, scores


class _FlatTree:
    """Array form of one tree for vectorised routing."""

    def __init__(self, root: Node, class_index: dict[str, int]) -> None:
        feats: list[int] = []
        thrs: list[float] = []
        left: list[int] = []
        right: list[int] = []
        labels: list[int] = []
        guarded: list[tuple[int, np.ndarray, np.ndarray]] = []

        def add(node: Node) -> int:
            slot = len(feats)
            feats.append(0)
            thrs.append(0.0)
            left.append(slot)
            right.append(slot)
            labels.append(-1)
            if isinstance(node, Leaf):
                labels[slot] = class_index[node.label]
                if node.guards:
                    gf = np.array([g.feature for g in node.guards])
                    gt = np.array([g.threshold for g in node.guards])
                    guarded.append((slot, gf, gt))
            else:
                feats[slot] = node.feature
                thrs[slot] = node.threshold
                left[slot] = add(node.left)
                right[slot] = add(node.right)
            return slot

        add(root)
        self.feature = np.array(feats)
        self.threshold = np.array(thrs)
        self.left = np.array(left)
        self.right = np.array(right)
        self.label = np.array(labels)
        self.guarded = guarded

    def leaf_label_idx(self, X: np.ndarray, anom_idx: int) -> np.ndarray:
        n = X.shape[0]
        slots = np.zeros(n, dtype=np.intp)
        rows = np.arange(n)
        while True:
            at_leaf = self.label[slots] >= 0
            if at_leaf.all():
                break
            go_left = X[rows, self.feature[slots]] <= self.threshold[slots]
            nxt = np.where(go_left, self.left[slots], self.right[slots])
            slots = np.where(at_leaf, slots, nxt)
        out = self.label[slots].copy()
        if anom_idx >= 0:
            for slot, gf, gt in self.guarded:
                here = np.nonzero(slots == slot)[0]
                if here.size:
                    fired = (X[here][:, gf] > gt[None, :]).any(axis=1)
                    out[here[fired]] = anom_idx
        return out


def _leaf_labels(root: Node):
    stack = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            yield node.label
        else:
            stack.append(node.left)
            stack.append(node.right)


def compute_thresholds(ensemble: VotingEnsemble, X, y) -> dict[str, ClassThresholds]:
    """Per-class score thresholds t = clamp(mu - sigma) over the rows the
    ensemble labels correctly. Every real class must contribute rows."""
    X = np.asarray(X)
    labels, scores = ensemble.predict_batch(X)
    per_class: dict[str, list[float]] = {c: [] for c in ensemble.real_classes}
    for truth, pred, score in zip(y, labels, scores):
        if truth == pred:
            per_class[truth].append(score)
    empty = sorted(c for c, vals in per_class.items() if not vals)
    if empty:
        raise ThresholdError(
            "no correctly labelled rows for class(es): " + ", ".join(empty))
    return {c: ClassThresholds.from_scores(vals) for c, vals in per_class.items()}


def flags_anomaly(thresholds: dict[str, ClassThresholds], label: str, score: float) -> bool:
    """Anomaly verdict of the inference loop: score below the class threshold."""
    return score < thresholds[label].t
