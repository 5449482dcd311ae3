"""Greedy adversarial recipe search over voting tree ensembles.

A recipe is an interval box: start from the attack's target rules, walk the
trees of the ensemble in a given order, and for each tree merge in the
first pre-order root-to-leaf path that (a) ends in a leaf of the target
class and (b) stays realizable when intersected with everything merged so
far. Branch decisions are checked against the merged working box — single
feature admissibility plus the frame-size and boundary checks of the
touched flow pair — so the final box is realizable by construction. Trees
with no surviving path are skipped; they can never vote for the target
class anywhere inside the final box.

The candidate box is kept only if its cheapest witness instance actually
gets predicted as the target class with a score at or above the class
threshold.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attacks import TargetRules
from .ensemble import VotingEnsemble
from .intervals import (DEFAULT_P_CAP, FULL, Interval, NEG_INF, POS_INF, Provenance,
                        RecipeBox, boundary_consistent, box_consistent,
                        frame_size_consistent, merge, min_injection)
from .schema import FeatureSchema
from .tree import DecisionNode, Leaf, Node, PathCondition


class ProjectionError(RuntimeError):
    """A consistent box failed to yield a witness instance; internal bug."""


class SearchBudgetExceeded(RuntimeError):
    """A single permutation ran past its wall-time cap."""


@dataclass(frozen=True)
class AdversarialPath:
    """Root-to-leaf conditions steering one tree into a target-class leaf.

    Guard conditions of the reached leaf appear at the end as additional
    left-branch (<=) conditions.
    """

    conditions: tuple[PathCondition, ...]
    leaf_label: str


@dataclass
class SearchStats:
    """Counters accumulated across find_recipe / generate_recipes calls."""

    permutations_run: int = 0
    recipes_found: int = 0
    duplicates: int = 0
    trees_merged: int = 0
    trees_skipped: int = 0
    rejected_validation: int = 0
    prune_single: int = 0
    prune_frame: int = 0
    prune_boundary: int = 0
    partial: bool = False


class _BoxSearch:
    """Mutable working box with undo, shared across one recipe search."""

    def __init__(self, intervals: list[Interval], schema: FeatureSchema,
                 p_cap: int, stats: SearchStats) -> None:
        self.box = intervals
        self.schema = schema
        self.p_cap = p_cap
        self.stats = stats
        self._pair_of = [schema.pair_of(i) for i in range(len(schema))]

    def try_apply(self, feature: int, cond: Interval,
                  undo: list[tuple[int, Interval]]) -> bool:
        """Merge one condition into the box; on any inconsistency leave the
        box untouched and record the prune reason."""
        old = self.box[feature]
        merged = merge(old, cond)
        if merged is None:
            self.stats.prune_single += 1
            return False
        pair = self._pair_of[feature]
        if pair is not None:
            pkt_i, byte_i = pair
            self.box[feature] = merged
            pkt_iv, byte_iv = self.box[pkt_i], self.box[byte_i]
            if not frame_size_consistent(pkt_iv, byte_iv, self.schema.frame_min,
                                         self.schema.frame_max):
                self.box[feature] = old
                self.stats.prune_frame += 1
                return False
            if not boundary_consistent(pkt_iv, byte_iv, self.schema.frame_min,
                                       self.schema.frame_max, self.p_cap):
                self.box[feature] = old
                self.stats.prune_boundary += 1
                return False
        else:
            self.box[feature] = merged
        undo.append((feature, old))
        return True

    def rollback(self, undo: list[tuple[int, Interval]], mark: int = 0) -> None:
        while len(undo) > mark:
            feature, old = undo.pop()
            self.box[feature] = old

    def descend(self, node: Node, target: str) -> list[PathCondition] | None:
        """First pre-order target-class path consistent with the box; on
        success the merged conditions stay applied to the box."""
        if isinstance(node, Leaf):
            if node.label != target:
                return None
            undo: list[tuple[int, Interval]] = []
            conds: list[PathCondition] = []
            for g in node.guards:
                if not self.try_apply(g.feature, Interval(NEG_INF, g.threshold), undo):
                    self.rollback(undo)
                    return None
                conds.append(PathCondition(g.feature, True, g.threshold))
            return conds
        undo: list[tuple[int, Interval]] = []
        if self.try_apply(node.feature, Interval(NEG_INF, node.threshold), undo):
            found = self.descend(node.left, target)
            if found is not None:
                found.insert(0, PathCondition(node.feature, True, node.threshold))
                return found
            self.rollback(undo)
        if self.try_apply(node.feature, Interval(node.threshold, POS_INF), undo):
            found = self.descend(node.right, target)
            if found is not None:
                found.insert(0, PathCondition(node.feature, False, node.threshold))
                return found
            self.rollback(undo)
        return None


def find_adv_path(root: Node, target_class: str, intervals, schema: FeatureSchema,
                  p_cap: int = DEFAULT_P_CAP,
                  stats: SearchStats | None = None) -> AdversarialPath | None:
    """Search one tree for a target-class path realizable within ``intervals``.

    The given intervals are not modified. Returns the full root-to-leaf
    condition list (plus any leaf guard conditions) or None.
    """
    stats = stats if stats is not None else SearchStats()
    search = _BoxSearch(list(intervals), schema, p_cap, stats)
    conds = search.descend(root, target_class)
    if conds is None:
        return None
    return AdversarialPath(tuple(conds), target_class)


def project(intervals, schema: FeatureSchema, p_cap: int = DEFAULT_P_CAP) -> np.ndarray:
    """Cheapest realizable instance inside a consistent box.

    For every flow pair: the fewest packets, carried in equal frames of the
    smallest workable size. Unpaired features take their smallest admissible
    count.
    """
    x = np.zeros(len(schema), dtype=np.int64)
    done = set()
    for pkt_i, byte_i in schema.flow_pairs:
        got = min_injection(intervals[pkt_i], intervals[byte_i], 0, 0,
                            schema.frame_min, schema.frame_max, p_cap)
        if got is None:
            raise ProjectionError(
                f"flow {schema.flow_name((pkt_i, byte_i))!r} admits no instance")
        pkts, size = got
        x[pkt_i] = pkts
        x[byte_i] = pkts * size
        done.update((pkt_i, byte_i))
    for i in range(len(schema)):
        if i in done:
            continue
        v = intervals[i].lowest_admissible()
        if v is None:
            raise ProjectionError(
                f"feature {schema.features[i].name!r} admits no count")
        x[i] = v
    return x


def find_recipe(ensemble: VotingEnsemble, tree_order, rules: TargetRules,
                target_class: str, t_d: float, *, p_cap: int = DEFAULT_P_CAP,
                permutation_id: int = 0, stats: SearchStats | None = None,
                deadline: float | None = None) -> RecipeBox | None:
    """One greedy pass over the trees in ``tree_order``.

    Returns a realizable recipe box whose witness instance the ensemble
    classifies as ``target_class`` with score at least ``t_d``, or None when
    the merged box fails that final check.
    """
    stats = stats if stats is not None else SearchStats()
    schema = ensemble.schema
    if target_class not in ensemble.real_classes:
        raise ValueError(f"unknown target class {target_class!r}")
    intervals = list(rules.as_intervals(schema))
    reason = box_consistent(intervals, schema, p_cap)
    if reason is not None:
        raise ValueError(f"target rules are unrealizable: {reason}")
    search = _BoxSearch(intervals, schema, p_cap, stats)
    contributing = []
    for t in tree_order:
        if deadline is not None and time.monotonic() > deadline:
            raise SearchBudgetExceeded(
                f"permutation {permutation_id} ran past its time budget")
        if search.descend(ensemble.trees[t], target_class) is not None:
            contributing.append(int(t))
            stats.trees_merged += 1
        else:
            stats.trees_skipped += 1
    witness = project(intervals, schema, p_cap)
    label, score = ensemble.predict(witness)
    if label != target_class or score < t_d:
        stats.rejected_validation += 1
        return None
    return RecipeBox(target_class, tuple(intervals),
                     Provenance(permutation_id, tuple(contributing)))


def generate_recipes(ensemble: VotingEnsemble, rules: TargetRules, target_class: str,
                     t_d: float, n_permutations: int, seed: int, *,
                     p_cap: int = DEFAULT_P_CAP, time_budget_s: float = 60.0,
                     stats: SearchStats | None = None) -> list[RecipeBox]:
    """Run find_recipe over n tree orders and deduplicate the results.

    The first order is the identity; the rest are seeded random
    permutations drawn sequentially, so runs sharing a seed share a
    permutation prefix. Duplicates (exact interval equality) keep their
    first provenance. A permutation that overruns ``time_budget_s`` is
    dropped and the stats are flagged partial.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be positive")
    stats = stats if stats is not None else SearchStats()
    rng = np.random.default_rng(seed)
    n_trees = len(ensemble.trees)
    unique: dict[tuple, RecipeBox] = {}
    for k in range(n_permutations):
        order = np.arange(n_trees) if k == 0 else rng.permutation(n_trees)
        deadline = (time.monotonic() + time_budget_s) if time_budget_s else None
        stats.permutations_run += 1
        try:
            recipe = find_recipe(ensemble, order, rules, target_class, t_d,
                                 p_cap=p_cap, permutation_id=k, stats=stats,
                                 deadline=deadline)
        except SearchBudgetExceeded:
            stats.partial = True
            continue
        if recipe is None:
            continue
        stats.recipes_found += 1
        sig = recipe.signature()
        if sig in unique:
            stats.duplicates += 1
        else:
            unique[sig] = recipe
    return list(unique.values())


def sample_instances(box: RecipeBox, schema: FeatureSchema, rng: np.random.Generator,
                     n: int, span: int = 1000,
                     p_cap: int = DEFAULT_P_CAP) -> np.ndarray:
    """Random realizable integer instances inside a recipe box.

    Flow pairs are sampled as (packet count, equal frame size) tuples so
    every returned row could be real traffic. ``span`` caps how far above
    the box floor unbounded features are explored.
    """
    out = np.zeros((n, len(schema)), dtype=np.int64)
    for row in range(n):
        done = set()
        for pkt_i, byte_i in schema.flow_pairs:
            pkt_iv, byte_iv = box.intervals[pkt_i], box.intervals[byte_i]
            p1 = pkt_iv.lowest_admissible()
            if p1 is None:
                raise ValueError("box is not consistent")
            p2 = pkt_iv.highest_admissible()
            p_hi = int(min(p2, p1 + span))
            for _ in range(200):
                p = int(rng.integers(p1, p_hi + 1))
                if p == 0:
                    if byte_iv.contains(0):
                        out[row, pkt_i] = 0
                        out[row, byte_i] = 0
                        break
                    continue
                b1 = byte_iv.lowest_admissible()
                b2 = byte_iv.highest_admissible()
                s_lo = max(schema.frame_min, -(-b1 // p))
                s_hi = min(schema.frame_max,
                           POS_INF if b2 == POS_INF else int(b2) // p)
                if s_lo <= s_hi:
                    s_cap = int(min(s_hi, s_lo + span))
                    s = int(rng.integers(s_lo, s_cap + 1))
                    out[row, pkt_i] = p
                    out[row, byte_i] = p * s
                    break
            else:
                # fall back to the deterministic witness for this pair
                got = min_injection(pkt_iv, byte_iv, 0, 0, schema.frame_min,
                                    schema.frame_max, p_cap)
                if got is None:
                    raise ValueError("box is not consistent")
                out[row, pkt_i] = got[0]
                out[row, byte_i] = got[0] * got[1]
            done.update((pkt_i, byte_i))
        for i in range(len(schema)):
            if i in done:
                continue
            iv = box.intervals[i]
            v1 = iv.lowest_admissible()
            if v1 is None:
                raise ValueError("box is not consistent")
            v2 = int(min(iv.highest_admissible(), v1 + span))
            out[row, i] = int(rng.integers(v1, v2 + 1))
    return out
