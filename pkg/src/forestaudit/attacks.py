"""Volumetric attack profiles and the audit target rules they induce.

A profile lists the telemetry features an attack inflates along with the
on-the-wire size of one attack packet, plus the impact (attack packets per
inference epoch). The target rules demand that an epoch carrying the
attack exceeds ``impact - 1`` packets (respectively ``impact*size - 1``
bytes) on every affected feature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .intervals import FULL, Interval, Provenance, RecipeBox
from .schema import DIRECTION_OUT, FeatureSchema, UNIT_BYTE, UNIT_PKT

SYN_ACK_FRAME_BYTES = 74
SSDP_RESPONSE_FRAME_BYTES = 300

IMPACT_LOW = "low"
IMPACT_MEDIUM = "medium"
IMPACT_HIGH = "high"


def classify_impact(packets_per_epoch: int) -> str:
    """Impact band of an attack rate: low < 200 <= medium <= 700 < high."""
    if packets_per_epoch < 200:
        return IMPACT_LOW
    if packets_per_epoch <= 700:
        return IMPACT_MEDIUM
    return IMPACT_HIGH


@dataclass(frozen=True)
class AttackProfile:
    """An attack template: affected features with per-packet byte sizes."""

    name: str
    features: tuple[tuple[str, int], ...]
    impact: int

    def __post_init__(self) -> None:
        if self.impact < 1:
            raise ValueError("impact must be at least one packet per epoch")
        if not self.features:
            raise ValueError("attack profile affects no features")
        names = [f for f, _ in self.features]
        if len(set(names)) != len(names):
            raise ValueError("attack profile lists a feature twice")
        for f, size in self.features:
            if size < 1:
                raise ValueError(f"feature {f!r}: per-packet size must be positive")

    def with_impact(self, impact: int) -> "AttackProfile":
        return AttackProfile(self.name, self.features, impact)


def syn_reflection(impact: int, frame_bytes: int = SYN_ACK_FRAME_BYTES) -> AttackProfile:
    """TCP SYN reflection off the victim: inbound SYNs plus reflected
    SYN-ACKs, both counted on the WAN flows."""
    return AttackProfile(
        "syn_reflection",
        (("wan_in_pkt", frame_bytes), ("wan_in_byte", frame_bytes),
         ("wan_out_pkt", frame_bytes), ("wan_out_byte", frame_bytes)),
        impact,
    )


def ssdp_reflection(impact: int,
                    frame_bytes: int = SSDP_RESPONSE_FRAME_BYTES) -> AttackProfile:
    """SSDP reflection: amplified responses on the outgoing SSDP flow.
    Response size varies by device firmware, hence configurable."""
    return AttackProfile(
        "ssdp_reflection",
        (("ssdp_out_pkt", frame_bytes), ("ssdp_out_byte", frame_bytes)),
        impact,
    )


BUILTIN_PROFILES = {
    "syn_reflection": syn_reflection,
    "ssdp_reflection": ssdp_reflection,
}


def profile_from_dict(obj: dict, impact: int) -> AttackProfile:
    name = obj.get("name")
    if not name:
        raise ValueError("attack profile file: missing 'name'")
    raw = obj.get("features")
    if not isinstance(raw, list) or not raw:
        raise ValueError("attack profile file: 'features' must be a non-empty list")
    feats = []
    for i, entry in enumerate(raw):
        if "feature" not in entry or "frame_bytes" not in entry:
            raise ValueError(
                f"attack profile file: features[{i}] needs 'feature' and 'frame_bytes'")
        feats.append((str(entry["feature"]), int(entry["frame_bytes"])))
    return AttackProfile(str(name), tuple(feats), impact)


def load_profile(path: str, impact: int) -> AttackProfile:
    with open(path, "r", encoding="utf-8") as fh:
        return profile_from_dict(json.load(fh), impact)


@dataclass(frozen=True)
class TargetRules:
    """Strict per-feature lower bounds a successful attack epoch must exceed."""

    lower_bounds: tuple[tuple[str, float], ...]

    def as_intervals(self, schema: FeatureSchema) -> tuple[Interval, ...]:
        out = [FULL] * len(schema)
        for name, bound in self.lower_bounds:
            out[schema.index_of(name)] = Interval(bound, float("inf"))
        return tuple(out)

    def as_box(self, schema: FeatureSchema, target_class: str) -> RecipeBox:
        return RecipeBox(target_class, self.as_intervals(schema),
                         Provenance(permutation=-1, trees=()))


def build_target_rules(profile: AttackProfile, schema: FeatureSchema) -> TargetRules:
    """Lower bounds guaranteeing the attack volume fits inside the epoch."""
    bounds = []
    for name, size in profile.features:
        idx = schema.index_of(name)
        unit = schema.features[idx].unit
        if unit == UNIT_BYTE and not (schema.frame_min <= size <= schema.frame_max):
            raise ValueError(
                f"feature {name!r}: per-packet size {size} outside frame bounds "
                f"[{schema.frame_min}, {schema.frame_max}]")
        if unit == UNIT_PKT:
            bounds.append((name, float(profile.impact - 1)))
        else:
            bounds.append((name, float(profile.impact * size - 1)))
    return TargetRules(tuple(bounds))


def attack_delta(profile: AttackProfile, schema: FeatureSchema) -> np.ndarray:
    """Exact per-feature counts the attack itself adds to one epoch."""
    delta = np.zeros(len(schema), dtype=np.int64)
    for name, size in profile.features:
        idx = schema.index_of(name)
        if schema.features[idx].unit == UNIT_PKT:
            delta[idx] += profile.impact
        else:
            delta[idx] += profile.impact * size
    return delta


def delivered_pkt_indices(profile: AttackProfile, schema: FeatureSchema) -> tuple[int, ...]:
    """Indices of outgoing pkt features carrying attack traffic: the packets
    that actually reach the remote target of a reflection."""
    out = []
    for name, _ in profile.features:
        idx = schema.index_of(name)
        feat = schema.features[idx]
        if feat.unit == UNIT_PKT and feat.direction == DIRECTION_OUT:
            out.append(idx)
    return tuple(out)
