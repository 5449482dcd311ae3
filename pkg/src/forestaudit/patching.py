"""Post-training hardening of voting ensembles with leaf guards.

A leaf whose path never tests ``x[f] <= t`` for some feature f is open
above on f: inflating f arbitrarily keeps reaching it. Patching appends
upper-bound guards to such leaves so that counts beyond anything the
leaf's class exhibited in training divert the tree's vote to an anomaly
sentinel. The sentinel never wins the final argmax; fired guards simply
drain the predicted class's score below its detection threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import VotingEnsemble
from .intervals import DEFAULT_P_CAP
from .schema import FeatureSchema
from .search import SearchStats, generate_recipes
from .tree import (GUARD_ADDITIONAL, GUARD_ESSENTIAL, Guard, Leaf, Node,
                   iter_paths, map_leaves, route)
from .validation import as_count_matrix, as_label_list

ANOMALOUS_LABEL = "anomalous"


class PatchError(ValueError):
    pass


@dataclass(frozen=True)
class LeafBounds:
    """Which features a leaf's path bounds from above.

    bounded: tested by at least one left branch (x[f] <= t) on the path.
    right_only: tested, but only by right branches (x[f] > t).
    absent: never tested on the path.
    """

    path: str
    label: str
    bounded: frozenset[int]
    right_only: frozenset[int]
    absent: frozenset[int]

    @property
    def unbounded(self) -> frozenset[int]:
        return self.right_only | self.absent


@dataclass(frozen=True)
class PatchRecord:
    """One guard added to one leaf."""

    tree: int
    leaf: str
    feature: str
    threshold: float
    kind: str


def analyze_leaf_bounds(root: Node, n_features: int) -> list[LeafBounds]:
    """Per-leaf feature bound analysis, leaves in pre-order."""
    out = []
    everything = frozenset(range(n_features))
    for path, conds, leaf in iter_paths(root):
        left = {c.feature for c in conds if c.is_left}
        right = {c.feature for c in conds if not c.is_left}
        out.append(LeafBounds(
            path=path, label=leaf.label,
            bounded=frozenset(left),
            right_only=frozenset(right - left),
            absent=everything - left - right))
    return out


def compute_class_maxima(X, y) -> dict[str, np.ndarray]:
    """Column-wise per-class maxima over a labelled count matrix."""
    X = as_count_matrix(X)
    y = as_label_list(y, X.shape[0])
    maxima: dict[str, np.ndarray] = {}
    for label in sorted(set(y)):
        rows = [i for i, lab in enumerate(y) if lab == label]
        maxima[label] = X[rows].max(axis=0)
    return maxima


def compute_leaf_maxima(ensemble: VotingEnsemble, X) -> dict[tuple[int, str], np.ndarray]:
    """Column maxima over the training rows routed to each leaf.

    Keys are (tree index, leaf path id); leaves no row reaches are absent,
    so callers fall back to class-level maxima for them.
    """
    X = as_count_matrix(X, len(ensemble.schema))
    buckets: dict[tuple[int, str], list[int]] = {}
    paths_per_tree = []
    for t, root in enumerate(ensemble.trees):
        ids = {id(leaf): path for path, _, leaf in iter_paths(root)}
        paths_per_tree.append(ids)
    for i, x in enumerate(X):
        for t, root in enumerate(ensemble.trees):
            leaf = route(root, x)
            buckets.setdefault((t, paths_per_tree[t][id(leaf)]), []).append(i)
    return {key: X[rows].max(axis=0) for key, rows in buckets.items()}


def _sentinel_for(ensemble: VotingEnsemble) -> str:
    if ensemble.anomalous_label is not None:
        return ensemble.anomalous_label
    if ANOMALOUS_LABEL in ensemble.classes:
        raise PatchError(
            f"class list already uses {ANOMALOUS_LABEL!r}; rename that class "
            "before patching")
    return ANOMALOUS_LABEL


def _guard_value(maxima: dict[str, np.ndarray], leaf_maxima, tree: int,
                 path: str, label: str, feature: int) -> float:
    if label not in maxima:
        raise PatchError(f"no training maxima for class {label!r}")
    if leaf_maxima is not None:
        vec = leaf_maxima.get((tree, path))
        if vec is not None:
            return float(vec[feature])
    return float(maxima[label][feature])


def _already_guarded(leaf: Leaf, feature: int, threshold: float) -> bool:
    return any(g.feature == feature and g.threshold <= threshold
               for g in leaf.guards)


def _patched_ensemble(ensemble: VotingEnsemble, trees, sentinel: str) -> VotingEnsemble:
    classes = ensemble.classes if sentinel in ensemble.classes \
        else ensemble.classes + (sentinel,)
    return VotingEnsemble(schema=ensemble.schema, classes=classes,
                          trees=tuple(trees), weights=ensemble.weights,
                          anomalous_label=sentinel)


def essential_patch(ensemble: VotingEnsemble, maxima: dict[str, np.ndarray],
                    *, leaf_maxima=None) -> tuple[VotingEnsemble, list[PatchRecord]]:
    """Guard every leaf's right-branch-only features at its class maxima.

    Absent features are left alone; use additional_patch for those. Leaves
    already guarded at an equal-or-tighter threshold gain nothing, so the
    operation is idempotent. Pass leaf_maxima (from compute_leaf_maxima)
    to tighten guards to what actually reached each leaf.
    """
    sentinel = _sentinel_for(ensemble)
    records: list[PatchRecord] = []
    new_trees = []
    for t, root in enumerate(ensemble.trees):
        def patch(path: str, conds, leaf: Leaf, t=t) -> Leaf:
            if leaf.label == sentinel:
                return leaf
            left = {c.feature for c in conds if c.is_left}
            right = {c.feature for c in conds if not c.is_left}
            guards = list(leaf.guards)
            for f in sorted(right - left):
                thr = _guard_value(maxima, leaf_maxima, t, path, leaf.label, f)
                if _already_guarded(leaf, f, thr):
                    continue
                guards.append(Guard(f, thr, GUARD_ESSENTIAL))
                records.append(PatchRecord(
                    tree=t, leaf=path, feature=ensemble.schema.features[f].name,
                    threshold=thr, kind=GUARD_ESSENTIAL))
            if len(guards) == len(leaf.guards):
                return leaf
            return Leaf(leaf.label, tuple(guards))

        new_trees.append(map_leaves(root, patch))
    return _patched_ensemble(ensemble, new_trees, sentinel), records


def additional_patch(ensemble: VotingEnsemble, maxima: dict[str, np.ndarray],
                     features, *, leaf_maxima=None) -> tuple[VotingEnsemble, list[PatchRecord]]:
    """Guard the requested features on every leaf of every tree.

    features may be names or indices. A leaf already guarded on a feature
    at an equal-or-tighter threshold keeps its guard unchanged.
    """
    schema = ensemble.schema
    wanted = sorted(schema.index_of(f) if isinstance(f, str) else int(f)
                    for f in set(features))
    for f in wanted:
        if not 0 <= f < len(schema):
            raise PatchError(f"feature index {f} out of range")
    sentinel = _sentinel_for(ensemble)
    records: list[PatchRecord] = []
    new_trees = []
    for t, root in enumerate(ensemble.trees):
        def patch(path: str, conds, leaf: Leaf, t=t) -> Leaf:
            if leaf.label == sentinel:
                return leaf
            guards = list(leaf.guards)
            for f in wanted:
                thr = _guard_value(maxima, leaf_maxima, t, path, leaf.label, f)
                if any(g.feature == f and g.threshold <= thr for g in guards):
                    continue
                guards.append(Guard(f, thr, GUARD_ADDITIONAL))
                records.append(PatchRecord(
                    tree=t, leaf=path, feature=schema.features[f].name,
                    threshold=thr, kind=GUARD_ADDITIONAL))
            if len(guards) == len(leaf.guards):
                return leaf
            return Leaf(leaf.label, tuple(guards))

        new_trees.append(map_leaves(root, patch))
    return _patched_ensemble(ensemble, new_trees, sentinel), records


def audit_patched(patched: VotingEnsemble, rules, target_class: str, t_d: float,
                  n_permutations: int, seed: int, *, p_cap: int = DEFAULT_P_CAP,
                  time_budget_s: float = 60.0,
                  stats: SearchStats | None = None):
    """Re-run the recipe search against a patched model.

    Guards act as extra upper-bound conditions on their leaves, so recipes
    that relied on inflating a guarded feature disappear.
    """
    if target_class == patched.anomalous_label:
        raise ValueError("the anomaly sentinel cannot be an attack target")
    return generate_recipes(patched, rules, target_class, t_d, n_permutations,
                            seed, p_cap=p_cap, time_budget_s=time_budget_s,
                            stats=stats)
