"""Serialization round trips and format validation."""
import json

import numpy as np
import pytest

from forestaudit.ensemble import ClassThresholds, VotingEnsemble
from forestaudit.intervals import FULL, Interval, Provenance, RecipeBox
from forestaudit.model_io import (
    ModelFormatError, load_dataset, load_model, load_recipes, save_dataset,
    save_model, save_recipes,
)
from forestaudit.schema import count_features_schema
from forestaudit.tree import DecisionNode, Leaf

from conftest import FIXTURE_DIR


def test_two_tree_fixture_loads():
    ens, thr = load_model(str(FIXTURE_DIR / "two_tree_model.json"))
    assert ens.classes == ("other", "victim")
    assert len(ens.trees) == 2
    assert thr["victim"].t == 1.0
    label, score = ens.predict(np.array([1001.0, 51.0, 11.0]))
    assert (label, score) == ("victim", 1.0)


def test_model_round_trip_is_exact(tmp_path):
    schema = count_features_schema(["u", "v"])
    tree = DecisionNode(0, 3.7, Leaf("a"), DecisionNode(1, 0.1, Leaf("b"), Leaf("a")))
    ens = VotingEnsemble(schema, ["a", "b"], [tree], [1.0])
    # thresholds with float values that do not round-trip through str()
    thr = {"a": ClassThresholds.from_scores([1 / 3, 2 / 3, 1.0]),
           "b": ClassThresholds(0.1 + 0.2, 0.0, 0.1 + 0.2)}
    path = tmp_path / "m.json"
    save_model(str(path), ens, thr)
    ens2, thr2 = load_model(str(path))
    assert thr2 == thr  # bit-exact floats
    assert tuple(ens2.classes) == tuple(ens.classes)
    assert tuple(ens2.weights) == tuple(ens.weights)
    grid = np.array([[x, y] for x in range(6) for y in range(3)], dtype=float)
    assert ens.predict_batch(grid)[0] == ens2.predict_batch(grid)[0]


def test_model_save_is_deterministic(tmp_path):
    ens, thr = load_model(str(FIXTURE_DIR / "two_tree_model.json"))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_model(str(a), ens, thr)
    save_model(str(b), ens, thr)
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="something-else"),
    lambda d: d.pop("classes"),
    lambda d: d.pop("trees"),
    lambda d: d["trees"].append({"feature": 0}),
    lambda d: d.update(weights=[1.0, 1.0, 1.0]),
])
def test_malformed_model_documents_raise(tmp_path, mutate):
    doc = json.loads((FIXTURE_DIR / "two_tree_model.json").read_text())
    mutate(doc)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises((ModelFormatError, ValueError)):
        load_model(str(bad))


def test_model_file_with_garbage_raises(tmp_path):
    bad = tmp_path / "junk.json"
    bad.write_text("not json {")
    with pytest.raises(ModelFormatError):
        load_model(str(bad))


def test_dataset_round_trip(tmp_path):
    schema = count_features_schema(["u", "v"])
    X = np.array([[1, 2], [30, 40], [0, 0]], dtype=np.int64)
    y = ["cam", "hub", "cam"]
    path = tmp_path / "d.csv"
    save_dataset(str(path), X, y, schema)
    X2, y2 = load_dataset(str(path), schema)
    assert np.array_equal(X, X2)
    assert y2 == y


def test_dataset_header_must_match_schema(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("wrong,header,label\n1,2,cam\n")
    with pytest.raises(ValueError):
        load_dataset(str(path), count_features_schema(["u", "v"]))


def test_dataset_rejects_non_integer_counts(tmp_path):
    schema = count_features_schema(["u", "v"])
    path = tmp_path / "d.csv"
    path.write_text("u,v,label\n1.5,2,cam\n")
    with pytest.raises(ValueError):
        load_dataset(str(path), schema)


def test_recipes_jsonl_round_trip(tmp_path):
    schema = count_features_schema(["u", "v"])
    boxes = [
        RecipeBox("cam", (Interval(5.0, float("inf")), FULL), Provenance(0, (0, 2))),
        RecipeBox("hub", (FULL, Interval(1.0, 9.0)), Provenance(4, (1,))),
    ]
    path = tmp_path / "r.jsonl"
    save_recipes(str(path), boxes, schema)
    back = load_recipes(str(path), schema)
    assert back == boxes
    # stable bytes on re-save
    again = tmp_path / "r2.jsonl"
    save_recipes(str(again), back, schema)
    assert path.read_bytes() == again.read_bytes()


def test_recipes_bad_line_reports_line_number(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text('{"target_class": "cam", "intervals": {}}\nnot json\n')
    with pytest.raises(ValueError, match=":2"):
        load_recipes(str(path), count_features_schema(["u", "v"]))
