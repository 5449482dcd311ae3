"""Model documents, dataset CSVs and recipe JSONL files.

The model document is plain JSON carrying the schema, the trees (nested
left/right objects), per-tree weights, any leaf guards plus the anomaly
sentinel, and the per-class score thresholds. Threshold statistics are
stored as decimal strings so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Iterable

import numpy as np

from .ensemble import ClassThresholds, VotingEnsemble
from .intervals import RecipeBox, box_from_json, box_to_json
from .schema import FeatureDescriptor, FeatureSchema
from .tree import DecisionNode, Guard, Leaf, Node
from .validation import as_count_matrix

FORMAT_NAME = "forestaudit-model"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Malformed model document; the message names the offending field."""


def _need(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{where}: expected an object")
    if key not in obj:
        raise ModelFormatError(f"{where}: missing field {key!r}")
    return obj[key]


# -- trees -------------------------------------------------------------------

def _node_to_dict(node: Node) -> dict:
    if isinstance(node, Leaf):
        out: dict = {"label": node.label}
        if node.guards:
            out["guards"] = [
                {"feature": g.feature, "threshold": g.threshold, "kind": g.kind}
                for g in node.guards
            ]
        return out
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(obj, where: str) -> Node:
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{where}: expected an object")
    if "label" in obj:
        guards = []
        for i, g in enumerate(obj.get("guards", ())):
            gw = f"{where}.guards[{i}]"
            guards.append(Guard(int(_need(g, "feature", gw)),
                                float(_need(g, "threshold", gw)),
                                str(_need(g, "kind", gw))))
        return Leaf(str(obj["label"]), tuple(guards))
    feature = _need(obj, "feature", where)
    threshold = _need(obj, "threshold", where)
    if not isinstance(feature, int):
        raise ModelFormatError(f"{where}: 'feature' must be an integer")
    if not isinstance(threshold, (int, float)):
        raise ModelFormatError(f"{where}: 'threshold' must be a number")
    return DecisionNode(
        feature,
        float(threshold),
        _node_from_dict(_need(obj, "left", where), where + ".left"),
        _node_from_dict(_need(obj, "right", where), where + ".right"),
    )


# -- schemas -----------------------------------------------------------------

def schema_to_dict(schema: FeatureSchema) -> dict:
    return {
        "features": [
            {"name": f.name, "direction": f.direction, "unit": f.unit}
            for f in schema.features
        ],
        "flow_pairs": [list(p) for p in schema.flow_pairs],
        "frame_min": schema.frame_min,
        "frame_max": schema.frame_max,
    }


def schema_from_dict(obj: dict, where: str = "schema") -> FeatureSchema:
    feats = []
    for i, f in enumerate(_need(obj, "features", where)):
        fw = f"{where}.features[{i}]"
        feats.append(FeatureDescriptor(str(_need(f, "name", fw)),
                                       str(_need(f, "direction", fw)),
                                       str(_need(f, "unit", fw))))
    pairs = tuple(tuple(int(v) for v in p) for p in obj.get("flow_pairs", ()))
    try:
        return FeatureSchema(tuple(feats), pairs,
                             int(obj.get("frame_min", 64)),
                             int(obj.get("frame_max", 1518)))
    except ValueError as exc:
        raise ModelFormatError(f"{where}: {exc}") from exc


# -- model documents -----------------------------------------------------------

def model_to_document(ensemble: VotingEnsemble,
                      thresholds: dict[str, ClassThresholds]) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "schema": schema_to_dict(ensemble.schema),
        "classes": list(ensemble.classes),
        "weights": list(ensemble.weights),
        "anomalous_label": ensemble.anomalous_label,
        "trees": [_node_to_dict(t) for t in ensemble.trees],
        "thresholds": {
            c: {"mu": repr(t.mu), "sigma": repr(t.sigma), "t": repr(t.t)}
            for c, t in thresholds.items()
        },
    }


def document_to_model(doc: dict) -> tuple[VotingEnsemble, dict[str, ClassThresholds]]:
    if not isinstance(doc, dict):
        raise ModelFormatError("document: expected a JSON object")
    fmt = doc.get("format")
    if fmt != FORMAT_NAME:
        raise ModelFormatError(f"document: unknown format {fmt!r}")
    schema = schema_from_dict(_need(doc, "schema", "document"))
    classes = tuple(str(c) for c in _need(doc, "classes", "document"))
    trees = tuple(
        _node_from_dict(t, f"trees[{i}]")
        for i, t in enumerate(_need(doc, "trees", "document"))
    )
    weights = tuple(float(w) for w in _need(doc, "weights", "document"))
    thresholds = {}
    for c, stats in _need(doc, "thresholds", "document").items():
        where = f"thresholds[{c!r}]"
        thresholds[c] = ClassThresholds(float(_need(stats, "mu", where)),
                                        float(_need(stats, "sigma", where)),
                                        float(_need(stats, "t", where)))
    anomalous = doc.get("anomalous_label")
    try:
        ensemble = VotingEnsemble(schema=schema, classes=classes, trees=trees,
                                  weights=weights,
                                  anomalous_label=None if anomalous is None else str(anomalous))
    except ValueError as exc:
        raise ModelFormatError(f"document: {exc}") from exc
    return ensemble, thresholds


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_model(path: str, ensemble: VotingEnsemble,
               thresholds: dict[str, ClassThresholds]) -> None:
    doc = model_to_document(ensemble, thresholds)
    _write_atomic(path, json.dumps(doc, indent=2) + "\n")


def load_model(path: str) -> tuple[VotingEnsemble, dict[str, ClassThresholds]]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return document_to_model(doc)


# -- datasets ------------------------------------------------------------------

LABEL_COLUMN = "label"


def save_dataset(path: str, X, y, schema: FeatureSchema) -> None:
    X = as_count_matrix(X, len(schema))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(schema.names) + [LABEL_COLUMN])
        for row, label in zip(X, y):
            writer.writerow([int(v) for v in row] + [label])


def load_dataset(path: str, schema: FeatureSchema) -> tuple[np.ndarray, list[str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty dataset") from None
        expected = list(schema.names) + [LABEL_COLUMN]
        if header != expected:
            raise ValueError(
                f"{path}: dataset columns {header} do not match schema "
                f"columns {expected}")
        rows = []
        labels = []
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ValueError(f"{path}:{ln}: expected {len(expected)} columns")
            try:
                rows.append([int(v) for v in row[:-1]])
            except ValueError:
                raise ValueError(f"{path}:{ln}: counts must be integers") from None
            labels.append(row[-1])
    if not rows:
        raise ValueError(f"{path}: dataset has no rows")
    return as_count_matrix(np.array(rows), len(schema)), labels


# -- recipes -------------------------------------------------------------------

def save_recipes(path: str, recipes: Iterable[RecipeBox], schema: FeatureSchema) -> None:
    lines = [json.dumps(box_to_json(r, schema), separators=(",", ":"), sort_keys=True)
             for r in recipes]
    _write_atomic(path, "".join(line + "\n" for line in lines))


def load_recipes(path: str, schema: FeatureSchema) -> list[RecipeBox]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(box_from_json(json.loads(line), schema))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{ln}: bad recipe line ({exc})") from exc
    return out
