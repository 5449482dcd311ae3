"""Leaf-guard patching: bound analysis, guard placement, transparency."""
import numpy as np
import pytest

from forestaudit.attacks import TargetRules
from forestaudit.ensemble import VotingEnsemble, flags_anomaly
from forestaudit.model_io import load_dataset, load_model
from forestaudit.patching import (
    PatchError, PatchRecord, additional_patch, analyze_leaf_bounds,
    audit_patched, compute_class_maxima, compute_leaf_maxima, essential_patch,
)
from forestaudit.schema import count_features_schema
from forestaudit.tree import (GUARD_ADDITIONAL, GUARD_ESSENTIAL, DecisionNode,
                              Leaf, iter_paths)

from conftest import FIXTURE_DIR


@pytest.fixture()
def vulnerable():
    ens, thr = load_model(str(FIXTURE_DIR / "vulnerable_tree_model.json"))
    X, y = load_dataset(str(FIXTURE_DIR / "vulnerable_tree_rows.csv"), ens.schema)
    return ens, thr, X, y


def test_leaf_bound_analysis(vulnerable):
    ens, _, _, _ = vulnerable
    bounds = {b.path: b for b in analyze_leaf_bounds(ens.trees[0], 3)}
    assert bounds["LL"].label == "sensor"
    assert bounds["LL"].bounded == {0, 1}
    assert bounds["LL"].right_only == frozenset()
    assert bounds["LL"].absent == {2}
    assert bounds["LR"].right_only == {1}
    assert bounds["RL"].right_only == {0}
    assert bounds["RL"].bounded == {2}
    assert bounds["RR"].right_only == {0, 2}
    assert bounds["RR"].absent == {1}
    assert bounds["RR"].unbounded == {0, 1, 2}


def test_class_maxima(vulnerable):
    _, _, X, y = vulnerable
    maxima = compute_class_maxima(X, y)
    assert list(maxima["sensor"]) == [90, 30, 55]
    assert list(maxima["bulb"]) == [95, 80, 22]
    assert list(maxima["camera"]) == [220, 35, 65]
    assert list(maxima["hub"]) == [260, 90, 150]
    with pytest.raises(ValueError):
        compute_class_maxima(X, y[:-1])


def test_essential_patch_places_expected_guards(vulnerable):
    ens, _, X, y = vulnerable
    patched, records = essential_patch(ens, compute_class_maxima(X, y))
    assert [(r.leaf, r.feature, r.threshold) for r in records] == [
        ("LR", "flow_b", 80.0),
        ("RL", "flow_a", 220.0),
        ("RR", "flow_a", 260.0),
        ("RR", "flow_c", 150.0),
    ]
    assert all(r.kind == GUARD_ESSENTIAL and r.tree == 0 for r in records)
    assert patched.classes == ens.classes + ("anomalous",)
    assert patched.anomalous_label == "anomalous"
    # the original stays guard-free
    assert all(not leaf.guards for _, _, leaf in iter_paths(ens.trees[0]))
    again, more = essential_patch(patched, compute_class_maxima(X, y))
    assert more == []


def test_patched_model_is_transparent_on_training_rows(vulnerable):
    ens, _, X, y = vulnerable
    patched, _ = essential_patch(ens, compute_class_maxima(X, y))
    for x, label in zip(X.astype(float), y):
        assert patched.predict(x) == ens.predict(x) == (label, 1.0)


def test_fired_guard_drains_the_score(vulnerable):
    ens, thr, X, y = vulnerable
    patched, _ = essential_patch(ens, compute_class_maxima(X, y))
    x = np.array([230.0, 10.0, 60.0])  # camera leaf, beyond its flow_a max
    assert ens.predict(x) == ("camera", 1.0)
    label, score = patched.predict(x)
    assert score == 0.0
    assert label == "bulb"  # lowest index among the drained classes
    assert patched.vote_shares(x)["anomalous"] == 1.0
    assert flags_anomaly(thr, label, score)
    labels, scores = patched.predict_batch(x[None, :])
    assert labels == [label] and scores[0] == 0.0


def test_leaf_maxima_tighten_and_fall_back(vulnerable):
    ens, _, X, y = vulnerable
    maxima = compute_class_maxima(X, y)
    keep = [i for i, lab in enumerate(y) if not (lab == "camera" and X[i][0] == 220)
            and lab != "hub"]
    leaf_maxima = compute_leaf_maxima(ens, X[keep])
    assert list(leaf_maxima[(0, "RL")]) == [150, 10, 50]
    assert (0, "RR") not in leaf_maxima  # no hub row routed
    patched, records = essential_patch(ens, maxima, leaf_maxima=leaf_maxima)
    by_leaf = {(r.leaf, r.feature): r.threshold for r in records}
    assert by_leaf[("RL", "flow_a")] == 150.0   # tightened to what the leaf saw
    assert by_leaf[("RR", "flow_a")] == 260.0   # fallback to class maxima
    assert by_leaf[("RR", "flow_c")] == 150.0


def test_additional_patch_covers_absent_features(vulnerable):
    ens, _, X, y = vulnerable
    maxima = compute_class_maxima(X, y)
    essential, _ = essential_patch(ens, maxima)
    patched, records = additional_patch(essential, maxima, ["flow_a"])
    # camera and hub leaves already hold equal-or-tighter flow_a guards
    assert [(r.leaf, r.feature, r.threshold, r.kind) for r in records] == [
        ("LL", "flow_a", 90.0, GUARD_ADDITIONAL),
        ("LR", "flow_a", 95.0, GUARD_ADDITIONAL),
    ]
    # indices work too, and patch everything when nothing was guarded before
    fresh, fresh_records = additional_patch(ens, maxima, [0])
    assert sorted(r.threshold for r in fresh_records) == [90.0, 95.0, 220.0, 260.0]
    with pytest.raises(KeyError):
        additional_patch(ens, maxima, ["flow_z"])
    with pytest.raises(PatchError):
        additional_patch(ens, maxima, [99])


def test_patching_refuses_a_reserved_class_name():
    schema = count_features_schema(["u"])
    tree = DecisionNode(0, 1.0, Leaf("anomalous"), Leaf("x"))
    ens = VotingEnsemble(schema=schema, classes=("anomalous", "x"),
                         trees=(tree,), weights=(1.0,))
    with pytest.raises(PatchError):
        essential_patch(ens, {"anomalous": np.zeros(1), "x": np.ones(1)})


def test_patched_audit_loses_out_of_band_recipes(vulnerable):
    ens, thr, X, y = vulnerable
    rules = TargetRules((("flow_a", 260.0),))
    before = audit_patched(ens, rules, "camera", thr["camera"].t,
                           n_permutations=2, seed=0)
    assert len(before) == 1  # unpatched: inflate flow_a freely
    maxima = compute_class_maxima(X, y)
    patched, _ = essential_patch(ens, maxima)
    after = audit_patched(patched, rules, "camera", thr["camera"].t,
                          n_permutations=2, seed=0)
    assert after == []
    with pytest.raises(ValueError):
        audit_patched(patched, rules, "anomalous", 0.5, n_permutations=1, seed=0)
