"""Attack profiles, target rules, and epoch deltas."""
import json

import numpy as np
import pytest

from forestaudit.attacks import (
    AttackProfile, BUILTIN_PROFILES, SSDP_RESPONSE_FRAME_BYTES,
    SYN_ACK_FRAME_BYTES, attack_delta, build_target_rules, classify_impact,
    delivered_pkt_indices, load_profile, profile_from_dict, ssdp_reflection,
    syn_reflection,
)
from forestaudit.intervals import POS_INF
from forestaudit.schema import default_iot_schema

SCHEMA = default_iot_schema()


def test_impact_bands():
    assert classify_impact(1) == "low"
    assert classify_impact(199) == "low"
    assert classify_impact(200) == "medium"
    assert classify_impact(700) == "medium"
    assert classify_impact(701) == "high"


def test_syn_reflection_touches_both_wan_flows():
    prof = syn_reflection(1000)
    assert dict(prof.features) == {
        "wan_in_pkt": 74, "wan_in_byte": 74,
        "wan_out_pkt": 74, "wan_out_byte": 74}
    assert prof.impact == 1000
    assert prof.with_impact(50).impact == 50
    assert prof.with_impact(50).features == prof.features


def test_ssdp_reflection_is_outgoing_only():
    prof = ssdp_reflection(300)
    assert dict(prof.features) == {"ssdp_out_pkt": 300, "ssdp_out_byte": 300}
    assert SSDP_RESPONSE_FRAME_BYTES == 300 and SYN_ACK_FRAME_BYTES == 74


def test_profile_validation():
    with pytest.raises(ValueError):
        AttackProfile("x", (("wan_in_pkt", 74),), 0)
    with pytest.raises(ValueError):
        AttackProfile("x", (), 10)
    with pytest.raises(ValueError):
        AttackProfile("x", (("a", 74), ("a", 74)), 10)
    with pytest.raises(ValueError):
        AttackProfile("x", (("a", 0),), 10)


def test_target_rules_lower_bounds():
    rules = build_target_rules(syn_reflection(1000), SCHEMA)
    bounds = dict(rules.lower_bounds)
    assert bounds["wan_in_pkt"] == 999.0
    assert bounds["wan_in_byte"] == 1000 * 74 - 1
    ivs = rules.as_intervals(SCHEMA)
    idx = SCHEMA.index_of("wan_out_pkt")
    assert (ivs[idx].lo, ivs[idx].hi) == (999.0, POS_INF)
    # untouched features stay unconstrained
    assert ivs[SCHEMA.index_of("dns_in_pkt")].is_full()


def test_target_rules_reject_impossible_frame_size():
    tiny = AttackProfile("x", (("wan_in_pkt", 30), ("wan_in_byte", 30)), 10)
    with pytest.raises(ValueError, match="frame bounds"):
        build_target_rules(tiny, SCHEMA)
    huge = AttackProfile("x", (("wan_in_byte", 2000),), 10)
    with pytest.raises(ValueError, match="frame bounds"):
        build_target_rules(huge, SCHEMA)


def test_attack_delta_vector():
    delta = attack_delta(ssdp_reflection(250), SCHEMA)
    want = np.zeros(len(SCHEMA), dtype=np.int64)
    want[SCHEMA.index_of("ssdp_out_pkt")] = 250
    want[SCHEMA.index_of("ssdp_out_byte")] = 250 * 300
    assert np.array_equal(delta, want)


def test_delivered_packets_are_outgoing():
    syn = syn_reflection(10)
    got = {SCHEMA.features[i].name for i in delivered_pkt_indices(syn, SCHEMA)}
    assert got == {"wan_out_pkt"}
    ssdp = ssdp_reflection(10)
    got = {SCHEMA.features[i].name for i in delivered_pkt_indices(ssdp, SCHEMA)}
    assert got == {"ssdp_out_pkt"}


def test_builtin_registry():
    assert set(BUILTIN_PROFILES) == {"syn_reflection", "ssdp_reflection"}
    assert BUILTIN_PROFILES["syn_reflection"](42).impact == 42


def test_profile_json_round_trip(tmp_path):
    doc = {"name": "dns_flood",
           "features": [{"feature": "dns_in_pkt", "frame_bytes": 80},
                        {"feature": "dns_in_byte", "frame_bytes": 80}]}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    prof = load_profile(str(path), 500)
    assert prof.name == "dns_flood"
    assert prof.impact == 500
    assert prof.features == (("dns_in_pkt", 80), ("dns_in_byte", 80))


@pytest.mark.parametrize("doc", [
    {},
    {"name": "x"},
    {"name": "x", "features": []},
    {"name": "x", "features": [{"feature": "a"}]},
])
def test_profile_dict_validation(doc):
    with pytest.raises(ValueError):
        profile_from_dict(doc, 10)
