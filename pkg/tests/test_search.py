"""Recipe search: the golden two-tree walkthrough, pruning, and an oracle."""
import itertools
import time

import numpy as np
import pytest

from forestaudit.attacks import TargetRules
from forestaudit.ensemble import VotingEnsemble
from forestaudit.intervals import FULL, NEG_INF, POS_INF, Interval
from forestaudit.model_io import load_model
from forestaudit.schema import default_iot_schema
from forestaudit.search import (
    ProjectionError, SearchBudgetExceeded, SearchStats, find_recipe,
    generate_recipes, project, sample_instances,
)
from forestaudit.tree import DecisionNode, Leaf

from conftest import FIXTURE_DIR
from helpers import TINY_SCHEMA, adversarial_grid_points, random_tiny_ensemble

INF = POS_INF


@pytest.fixture(scope="module")
def two_tree():
    return load_model(str(FIXTURE_DIR / "two_tree_model.json"))


def test_two_tree_walkthrough_box(two_tree):
    ens, thr = two_tree
    rules = TargetRules((("flow_a", 1000.0),))
    box = find_recipe(ens, [0, 1], rules, "victim", thr["victim"].t)
    assert box is not None
    assert [(iv.lo, iv.hi) for iv in box.intervals] == [
        (1000.0, INF), (50.0, 60.0), (10.0, INF)]
    assert box.provenance.trees == (0, 1)
    x = project(box.intervals, ens.schema)
    assert list(x) == [1001, 51, 11]
    label, score = ens.predict(x.astype(float))
    assert label == "victim" and score == 1.0


def test_inert_tree_is_skipped(two_tree):
    ens, _ = two_tree
    # a third tree that never votes the target cannot contribute, and with
    # t_d at a majority of 2/3 the recipe must still validate without it
    trees = list(ens.trees) + [Leaf("other")]
    bigger = VotingEnsemble(ens.schema, list(ens.classes), trees, [1 / 3] * 3)
    stats = SearchStats()
    box = find_recipe(bigger, [0, 1, 2], TargetRules((("flow_a", 1000.0),)),
                      "victim", 0.6, stats=stats)
    assert box is not None
    assert box.provenance.trees == (0, 1)
    assert stats.trees_skipped == 1
    assert stats.trees_merged == 2


def test_split_vote_fails_witness_validation(two_tree):
    ens, _ = two_tree
    # rules that shut tree 2 out entirely: both its victim leaves need
    # flow_a <= 50 or flow_b <= 60. The lone tree-1 vote splits 50/50 and
    # the tie resolves to the lexically first class, so validation rejects.
    stats = SearchStats()
    rules = TargetRules((("flow_a", 1000.0), ("flow_b", 60.0)))
    box = find_recipe(ens, [0, 1], rules, "victim", 0.5, stats=stats)
    assert box is None
    assert stats.rejected_validation >= 1


def test_unknown_target_class_raises(two_tree):
    ens, _ = two_tree
    with pytest.raises(ValueError, match="unknown target class"):
        find_recipe(ens, [0, 1], TargetRules(()), "toaster", 0.5)


def test_unrealizable_rules_raise():
    schema = default_iot_schema()
    ens = VotingEnsemble(schema, ["a", "b"],
                         [Leaf("a"), Leaf("b")], [0.5, 0.5])
    box = find_recipe(ens, [0, 1], TargetRules((("dns_in_byte", 100.0),)), "a", 0.4)
    assert box is not None
    # a byte floor needing more packets than the scan cap allows
    too_many = float(1518 * 10 ** 6)
    with pytest.raises(ValueError, match="unrealizable"):
        find_recipe(ens, [0, 1], TargetRules((("dns_in_byte", too_many),)),
                    "a", 0.4)


def test_frame_size_prune_blocks_victim_leaf():
    schema = default_iot_schema()
    pkt = schema.index_of("dns_in_pkt")
    byte = schema.index_of("dns_in_byte")
    tree = DecisionNode(pkt, 9.0,
                        Leaf("other"),
                        DecisionNode(byte, 100.0, Leaf("victim"), Leaf("other")))
    ens = VotingEnsemble(schema, ["other", "victim"], [tree], [1.0])
    stats = SearchStats()
    box = find_recipe(ens, [0], TargetRules(()), "victim", 1.0, stats=stats)
    assert box is None
    assert stats.prune_frame >= 1


def test_boundary_prune_blocks_victim_leaf():
    schema = default_iot_schema()
    pkt = schema.index_of("dns_in_pkt")
    byte = schema.index_of("dns_in_byte")
    inner = DecisionNode(byte, 998.0,
                         Leaf("other"),
                         DecisionNode(byte, 1000.0, Leaf("victim"), Leaf("other")))
    tree = DecisionNode(pkt, 10.0,
                        Leaf("other"),
                        DecisionNode(pkt, 15.0, inner, Leaf("other")))
    ens = VotingEnsemble(schema, ["other", "victim"], [tree], [1.0])
    stats = SearchStats()
    box = find_recipe(ens, [0], TargetRules(()), "victim", 1.0, stats=stats)
    assert box is None
    assert stats.prune_boundary >= 1


def test_generate_recipes_dedups_and_counts(two_tree):
    ens, thr = two_tree
    stats = SearchStats()
    rules = TargetRules((("flow_a", 1000.0),))
    boxes = generate_recipes(ens, rules, "victim", thr["victim"].t,
                             n_permutations=20, seed=123, stats=stats)
    assert len(boxes) == 1  # both orders converge on the same box
    assert stats.recipes_found == 20
    assert stats.duplicates == 19
    assert stats.permutations_run == 20
    assert boxes[0].provenance.permutation == 0  # identity order came first
    assert not stats.partial


def test_generate_recipes_budget_marks_partial(two_tree):
    ens, thr = two_tree
    stats = SearchStats()
    boxes = generate_recipes(ens, TargetRules((("flow_a", 1000.0),)), "victim",
                             thr["victim"].t, n_permutations=20, seed=1,
                             time_budget_s=1e-9, stats=stats)
    # the budget applies per permutation: each order is attempted, overruns
    # are dropped, and the run is marked incomplete
    assert stats.partial
    assert stats.permutations_run == 20
    assert stats.recipes_found == 0
    assert boxes == []


def test_find_recipe_deadline_raises(two_tree):
    ens, thr = two_tree
    with pytest.raises(SearchBudgetExceeded):
        find_recipe(ens, [0, 1], TargetRules((("flow_a", 1000.0),)), "victim",
                    thr["victim"].t, deadline=time.monotonic() - 1.0)


def test_project_paired_flow_uses_fewest_equal_frames():
    schema = default_iot_schema()
    ivs = [FULL] * len(schema)
    ivs[schema.index_of("dns_in_pkt")] = Interval(2.0, INF)
    ivs[schema.index_of("dns_in_byte")] = Interval(119.0, 1666.0)
    x = project(tuple(ivs), schema)
    assert x[schema.index_of("dns_in_pkt")] == 3
    assert x[schema.index_of("dns_in_byte")] == 192  # three 64-byte frames


def test_project_rejects_unreachable_pair():
    schema = default_iot_schema()
    ivs = [FULL] * len(schema)
    ivs[schema.index_of("dns_in_pkt")] = Interval(10.0, 15.0)
    ivs[schema.index_of("dns_in_byte")] = Interval(998.0, 1000.0)
    with pytest.raises(ProjectionError):
        project(tuple(ivs), schema)


def test_sample_instances_stay_inside_the_box(two_tree):
    ens, thr = two_tree
    box = find_recipe(ens, [0, 1], TargetRules((("flow_a", 1000.0),)),
                      "victim", thr["victim"].t)
    rng = np.random.default_rng(7)
    pts = sample_instances(box, ens.schema, rng, 100)
    assert pts.shape == (100, 3)
    assert all(box.admits(p) for p in pts)
    labels, scores = ens.predict_batch(pts.astype(float))
    assert all(lab == "victim" for lab in labels)
    assert np.all(scores >= thr["victim"].t)


def test_sample_instances_respect_flow_pairs():
    schema = default_iot_schema()
    ivs = [FULL] * len(schema)
    ivs[schema.index_of("wan_in_pkt")] = Interval(88.0, INF)
    ivs[schema.index_of("wan_in_byte")] = Interval(45568.0, INF)
    from forestaudit.intervals import Provenance, RecipeBox
    box = RecipeBox("cam", tuple(ivs), Provenance(0, ()))
    rng = np.random.default_rng(3)
    pts = sample_instances(box, schema, rng, 60)
    p = pts[:, schema.index_of("wan_in_pkt")]
    b = pts[:, schema.index_of("wan_in_byte")]
    assert all(box.admits(row) for row in pts)
    # bytes always expressible as p equal frames within ethernet bounds
    assert np.all(b >= 64 * p)
    assert np.all(b <= 1518 * p)
    assert np.all(b % np.maximum(p, 1) == 0)


def test_random_tiny_ensembles_agree_with_grid_oracle():
    rng = np.random.default_rng(2024)
    for case in range(30):
        ens = random_tiny_ensemble(rng)
        target = str(rng.choice(ens.classes))
        t_d = float(rng.choice([0.3, 0.5, 0.74, 1.0]))
        n_rules = int(rng.integers(0, 3))
        feats = rng.choice(3, size=n_rules, replace=False)
        rules = TargetRules(tuple(
            (TINY_SCHEMA.names[int(f)], float(rng.integers(0, 9))) for f in feats))
        oracle = adversarial_grid_points(ens, rules.as_intervals(TINY_SCHEMA),
                                         target, t_d)
        found = []
        for order in itertools.permutations(range(len(ens.trees))):
            box = find_recipe(ens, list(order), rules, target, t_d)
            if box is not None:
                found.append(box)
        for box in found:
            x = project(box.intervals, TINY_SCHEMA)
            assert box.admits(x)
            label, score = ens.predict(x.astype(float))
            assert label == target and score >= t_d, (case, x)
        if len(oracle) == 0:
            assert found == [], f"case {case}: recipe without any oracle point"
