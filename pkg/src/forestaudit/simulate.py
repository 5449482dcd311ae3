"""Epoch-based online attack simulation against a deployed ensemble.

The defender aggregates traffic counts on a fixed epoch grid (default one
minute) and flags an epoch whose predicted-class score falls below the
class threshold. The attacker watches the victim's counters on its own
clock, offset ``shift_s`` seconds ahead of the defender's grid: at the end
of each of its windows it picks the feasible recipe reachable with the
fewest injected packets, then emits the attack plus the steering overhead
with timestamps uniform over that window. With a zero shift the two grids
coincide and the planned epoch vector is realised exactly; with a non-zero
shift the defender bins the same packets differently, which is what makes
clock misalignment degrade the attack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackProfile, attack_delta
from .ensemble import ClassThresholds, VotingEnsemble, flags_anomaly
from .intervals import DEFAULT_P_CAP, RecipeBox, min_injection
from .schema import DIRECTION_OUT, FeatureSchema, UNIT_PKT

MODE_ADVERSARIAL = "adversarial"
MODE_NON_ADVERSARIAL = "non_adversarial"
MODE_BENIGN = "benign"
MODES = (MODE_ADVERSARIAL, MODE_NON_ADVERSARIAL, MODE_BENIGN)

# Header fields the attacker forges per injected flow so the traffic is
# attributed to the victim: GW = gateway, VIC = victim, * = free choice.
SPOOF_METADATA: dict[str, dict[str, str]] = {
    "dns_in": {"src_mac": "GW", "dst_mac": "VIC", "src_ip": "*",
               "dst_ip": "VIC", "src_port": "53", "dst_port": "*"},
    "dns_out": {"src_mac": "VIC", "dst_mac": "GW", "src_ip": "VIC",
                "dst_ip": "*", "src_port": "*", "dst_port": "53"},
    "ntp_in": {"src_mac": "GW", "dst_mac": "VIC", "src_ip": "*",
               "dst_ip": "VIC", "src_port": "123", "dst_port": "*"},
    "ntp_out": {"src_mac": "VIC", "dst_mac": "GW", "src_ip": "VIC",
                "dst_ip": "*", "src_port": "*", "dst_port": "123"},
    "ssdp_out": {"src_mac": "VIC", "dst_mac": "*", "src_ip": "VIC",
                 "dst_ip": "*", "src_port": "*", "dst_port": "1900"},
    "lan_in": {"src_mac": "*", "dst_mac": "VIC", "src_ip": "LAN_IP",
               "dst_ip": "VIC", "src_port": "*", "dst_port": "*"},
    "wan_in": {"src_mac": "GW", "dst_mac": "VIC", "src_ip": "WAN_IP",
               "dst_ip": "VIC", "src_port": "*", "dst_port": "*"},
    "wan_out": {"src_mac": "VIC", "dst_mac": "GW", "src_ip": "VIC",
                "dst_ip": "WAN_IP", "src_port": "*", "dst_port": "*"},
}

_WILDCARD_SPOOF = {"src_mac": "*", "dst_mac": "*", "src_ip": "*",
                   "dst_ip": "*", "src_port": "*", "dst_port": "*"}


class NoFeasibleRecipe(LookupError):
    """No recipe can be reached from the current counters by adding traffic."""


@dataclass(frozen=True, eq=False)
class TelemetryEpoch:
    """Counts accumulated over one inference window."""

    index: int
    start_s: float
    window_s: float
    counts: np.ndarray

    def __post_init__(self) -> None:
        if self.window_s <= 0:
            raise ValueError("window must be positive")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1:
            raise ValueError("epoch counts must be a vector")
        if counts.size and counts.min() < 0:
            raise ValueError("epoch counts must be non-negative")
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class FlowInjection:
    """Equal-size frames the attacker injects on one flow."""

    flow: str
    pkt_feature: str
    byte_feature: str
    packets: int
    frame_bytes: int
    spoof: dict[str, str]


@dataclass(frozen=True)
class InjectionPlan:
    """Overhead traffic steering an epoch into a recipe box."""

    injections: tuple[FlowInjection, ...]
    extra_counts: tuple[tuple[str, int], ...]
    overhead_packets: int
    overhead_bytes: int
    corrective_icmp: bool


def feasible_recipes(recipes, counts, delta) -> list[RecipeBox]:
    """Recipes still reachable once the attack lands on top of ``counts``.

    A recipe survives when, for every feature, counts+delta does not
    already exceed the upper bound and some admissible value at or above
    counts+delta exists — traffic can only be added, never removed.
    """
    counts = np.asarray(counts)
    delta = np.asarray(delta)
    keep = []
    for recipe in recipes:
        ok = True
        for iv, base, d in zip(recipe.intervals, counts, delta):
            total = int(base) + int(d)
            if total > iv.hi or not iv.admits_integer():
                ok = False
                break
        if ok:
            keep.append(recipe)
    return keep


def plan_injection(recipe: RecipeBox, counts, delta, schema: FeatureSchema,
                   p_cap: int = DEFAULT_P_CAP) -> tuple[np.ndarray, InjectionPlan] | None:
    """Cheapest overhead landing counts+delta inside the recipe box.

    Returns (final epoch vector, plan), or None when some flow pair cannot
    be completed with equal-size frames.
    """
    final = np.asarray(counts, dtype=np.int64) + np.asarray(delta, dtype=np.int64)
    injections = []
    extras = []
    pkts = 0
    bytes_ = 0
    done = set()
    for pkt_i, byte_i in schema.flow_pairs:
        got = min_injection(recipe.intervals[pkt_i], recipe.intervals[byte_i],
                            int(final[pkt_i]), int(final[byte_i]),
                            schema.frame_min, schema.frame_max, p_cap)
        if got is None:
            return None
        o, size = got
        if o:
            final[pkt_i] += o
            final[byte_i] += o * size
            flow = schema.flow_name((pkt_i, byte_i))
            injections.append(FlowInjection(
                flow=flow,
                pkt_feature=schema.features[pkt_i].name,
                byte_feature=schema.features[byte_i].name,
                packets=o, frame_bytes=size,
                spoof=SPOOF_METADATA.get(flow, dict(_WILDCARD_SPOOF))))
            pkts += o
            bytes_ += o * size
        done.update((pkt_i, byte_i))
    for i in range(len(schema)):
        if i in done:
            continue
        iv = recipe.intervals[i]
        low = iv.lowest_admissible()
        if low is None or final[i] > iv.highest_admissible():
            return None
        bump = max(low - int(final[i]), 0)
        if bump:
            final[i] += bump
            extras.append((schema.features[i].name, bump))
            if schema.features[i].unit == UNIT_PKT:
                pkts += bump
            else:
                bytes_ += bump
    corrective = any(inj.spoof.get("src_mac") == "VIC" for inj in injections)
    plan = InjectionPlan(tuple(injections), tuple(extras), pkts, bytes_, corrective)
    return final, plan


def select_closest(candidates, counts, delta, schema: FeatureSchema,
                   p_cap: int = DEFAULT_P_CAP) -> tuple[RecipeBox, np.ndarray, InjectionPlan]:
    """The candidate reachable with the fewest overhead packets.

    Ties fall to fewer overhead bytes, then to candidate order. Candidates
    whose flow pairs cannot be completed with equal-size frames are
    skipped; raises NoFeasibleRecipe when nothing remains.
    """
    best = None
    best_key = None
    for pos, recipe in enumerate(candidates):
        planned = plan_injection(recipe, counts, delta, schema, p_cap)
        if planned is None:
            continue
        final, plan = planned
        key = (plan.overhead_packets, plan.overhead_bytes, pos)
        if best_key is None or key < best_key:
            best = (recipe, final, plan)
            best_key = key
    if best is None:
        raise NoFeasibleRecipe("no recipe is reachable from the current counters")
    return best


@dataclass(frozen=True)
class TimingConfig:
    """When and how the attacker acts during an episode."""

    mode: str = MODE_ADVERSARIAL
    shift_s: float = 0.0
    attack_epochs: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.shift_s < 0:
            raise ValueError("shift must be non-negative")


@dataclass(frozen=True, eq=False)
class EpochOutcome:
    """What the defender saw and decided for one epoch."""

    epoch: int
    mode: str
    counts: np.ndarray
    label: str
    score: float
    threshold: float
    detected: bool
    attack_pkts: int
    overhead_pkts: int
    recipe_selected: bool
    feasible_count: int
    plan: InjectionPlan | None


class _Events:
    """Append-only packet event buffer: timestamp, features, size, kind."""

    BENIGN, OVERHEAD, ATTACK_LOCAL, ATTACK_DELIVERED = 0, 1, 2, 3

    def __init__(self) -> None:
        self.ts: list[np.ndarray] = []
        self.pkt: list[np.ndarray] = []
        self.byte: list[np.ndarray] = []
        self.size: list[np.ndarray] = []
        self.kind: list[np.ndarray] = []

    def add(self, ts, pkt_idx, byte_idx, sizes, kind: int) -> None:
        n = len(ts)
        if n == 0:
            return
        self.ts.append(np.asarray(ts, dtype=float))
        self.pkt.append(np.full(n, pkt_idx, dtype=np.int64)
                        if np.isscalar(pkt_idx) else np.asarray(pkt_idx, dtype=np.int64))
        self.byte.append(np.full(n, byte_idx, dtype=np.int64)
                         if np.isscalar(byte_idx) else np.asarray(byte_idx, dtype=np.int64))
        self.size.append(np.full(n, sizes, dtype=np.int64)
                         if np.isscalar(sizes) else np.asarray(sizes, dtype=np.int64))
        self.kind.append(np.full(n, kind, dtype=np.int64))

    def arrays(self):
        if not self.ts:
            z = np.zeros(0)
            zi = np.zeros(0, dtype=np.int64)
            return z, zi, zi, zi, zi
        return (np.concatenate(self.ts), np.concatenate(self.pkt),
                np.concatenate(self.byte), np.concatenate(self.size),
                np.concatenate(self.kind))


def _split_frames(total_bytes: int, packets: int) -> np.ndarray:
    """Spread a byte count over packets as evenly as integer sizes allow."""
    base, rem = divmod(int(total_bytes), int(packets))
    sizes = np.full(packets, base, dtype=np.int64)
    sizes[:rem] += 1
    return sizes


def _benign_events(epoch: TelemetryEpoch, schema: FeatureSchema, seed: int) -> _Events:
    rng = np.random.default_rng([seed, epoch.index, 0])
    events = _Events()
    lo, hi = epoch.start_s, epoch.start_s + epoch.window_s
    for pkt_i, byte_i in schema.flow_pairs:
        p = int(epoch.counts[pkt_i])
        b = int(epoch.counts[byte_i])
        if p == 0:
            if b != 0:
                raise ValueError(
                    f"epoch {epoch.index}: flow "
                    f"{schema.flow_name((pkt_i, byte_i))!r} has bytes without packets")
            continue
        events.add(rng.uniform(lo, hi, p), pkt_i, byte_i, _split_frames(b, p),
                   _Events.BENIGN)
    for i in schema.unpaired_indices():
        c = int(epoch.counts[i])
        if c:
            events.add(rng.uniform(lo, hi, c), i, -1, 0, _Events.BENIGN)
    return events


def _attack_events(profile: AttackProfile, schema: FeatureSchema,
                   rng: np.random.Generator, lo: float, hi: float) -> _Events:
    events = _Events()
    by_pair: dict[tuple[int, int], int] = {}
    lone: list[tuple[int, int]] = []
    for name, size in profile.features:
        idx = schema.index_of(name)
        pair = schema.pair_of(idx)
        if pair is None:
            if schema.features[idx].unit == UNIT_PKT:
                lone.append((idx, size))
            continue
        by_pair[pair] = size
    for (pkt_i, byte_i), size in sorted(by_pair.items()):
        delivered = schema.features[pkt_i].direction == DIRECTION_OUT
        kind = _Events.ATTACK_DELIVERED if delivered else _Events.ATTACK_LOCAL
        events.add(rng.uniform(lo, hi, profile.impact), pkt_i, byte_i, size, kind)
    for idx, _ in lone:
        events.add(rng.uniform(lo, hi, profile.impact), idx, -1, 0,
                   _Events.ATTACK_LOCAL)
    return events


def _overhead_events(plan: InjectionPlan, schema: FeatureSchema,
                     rng: np.random.Generator, lo: float, hi: float) -> _Events:
    events = _Events()
    for inj in plan.injections:
        pkt_i = schema.index_of(inj.pkt_feature)
        byte_i = schema.index_of(inj.byte_feature)
        events.add(rng.uniform(lo, hi, inj.packets), pkt_i, byte_i,
                   inj.frame_bytes, _Events.OVERHEAD)
    for name, bump in plan.extra_counts:
        idx = schema.index_of(name)
        events.add(rng.uniform(lo, hi, bump), idx, -1, 0, _Events.OVERHEAD)
    return events


def _accumulate(vector: np.ndarray, ts, pkt, byte, size, mask) -> None:
    np.add.at(vector, pkt[mask], 1)
    paired = mask & (byte >= 0)
    np.add.at(vector, byte[paired], size[paired])


def run_episode(ensemble: VotingEnsemble, thresholds: dict[str, ClassThresholds],
                recipes, trace, profile: AttackProfile, timing: TimingConfig,
                seed: int, p_cap: int = DEFAULT_P_CAP) -> list[EpochOutcome]:
    """Replay a benign trace with the attacker in the loop.

    The benign packet stream is derived only from (trace, seed), so runs
    with different timing configurations see identical organic traffic.
    Returns one outcome per trace epoch.
    """
    schema = ensemble.schema
    n = len(trace)
    if n == 0:
        raise ValueError("trace is empty")
    window = trace[0].window_s
    for k, epoch in enumerate(trace):
        if epoch.index != k or epoch.window_s != window:
            raise ValueError("trace epochs must be consecutive with a fixed window")
        if abs(epoch.start_s - k * window) > 1e-9:
            raise ValueError("trace epochs must start on the epoch grid")
    if not 0 <= timing.shift_s < window:
        raise ValueError("shift must lie in [0, window)")
    bad = [k for k in timing.attack_epochs if not 0 <= k < n]
    if bad:
        raise ValueError(f"attack epochs out of range: {sorted(bad)}")

    benign = [_benign_events(epoch, schema, seed) for epoch in trace]
    delta = attack_delta(profile, schema)

    attacker = _Events()
    window_info: dict[int, tuple[bool, int, InjectionPlan | None]] = {}
    if timing.mode != MODE_BENIGN:
        for k in sorted(timing.attack_epochs):
            w_lo = k * window - timing.shift_s
            w_hi = (k + 1) * window - timing.shift_s
            rng = np.random.default_rng([seed, k, 1])
            emit_lo, emit_hi = max(w_lo, 0.0), w_hi
            if timing.mode == MODE_NON_ADVERSARIAL:
                ev = _attack_events(profile, schema, rng, emit_lo, emit_hi)
                attacker.ts += ev.ts; attacker.pkt += ev.pkt
                attacker.byte += ev.byte; attacker.size += ev.size
                attacker.kind += ev.kind
                window_info[k] = (False, 0, None)
                continue
            observed = np.zeros(len(schema), dtype=np.int64)
            for src in (k - 1, k):
                if 0 <= src < n:
                    ts, pkt, byte, size, _ = benign[src].arrays()
                    mask = (ts >= w_lo) & (ts < w_hi)
                    _accumulate(observed, ts, pkt, byte, size, mask)
            candidates = feasible_recipes(recipes, observed, delta)
            try:
                _, _, plan = select_closest(candidates, observed, delta, schema, p_cap)
            except NoFeasibleRecipe:
                window_info[k] = (False, len(candidates), None)
                continue
            ev = _attack_events(profile, schema, rng, emit_lo, emit_hi)
            ov = _overhead_events(plan, schema, rng, emit_lo, emit_hi)
            for part in (ev, ov):
                attacker.ts += part.ts; attacker.pkt += part.pkt
                attacker.byte += part.byte; attacker.size += part.size
                attacker.kind += part.kind
            window_info[k] = (True, len(candidates), plan)

    # Bin everything on the defender's grid.
    totals = np.zeros((n, len(schema)), dtype=np.int64)
    attack_pkts = np.zeros(n, dtype=np.int64)
    overhead_pkts = np.zeros(n, dtype=np.int64)
    for k in range(n):
        ts, pkt, byte, size, _ = benign[k].arrays()
        _accumulate(totals[k], ts, pkt, byte, size, np.ones(len(ts), dtype=bool))
    ts, pkt, byte, size, kind = attacker.arrays()
    if len(ts):
        bins = np.floor_divide(ts, window).astype(np.int64)
        keep = (bins >= 0) & (bins < n)
        for k in np.unique(bins[keep]):
            mask = keep & (bins == k)
            _accumulate(totals[k], ts, pkt, byte, size, mask)
            attack_pkts[k] = int((mask & (kind == _Events.ATTACK_DELIVERED)).sum())
            overhead_pkts[k] = int((mask & (kind == _Events.OVERHEAD)).sum())

    outcomes = []
    for k in range(n):
        label, score = ensemble.predict(totals[k])
        selected, feasible_n, plan = window_info.get(k, (False, 0, None))
        outcomes.append(EpochOutcome(
            epoch=k, mode=timing.mode, counts=totals[k], label=label,
            score=score, threshold=thresholds[label].t,
            detected=flags_anomaly(thresholds, label, score),
            attack_pkts=int(attack_pkts[k]), overhead_pkts=int(overhead_pkts[k]),
            recipe_selected=selected, feasible_count=feasible_n, plan=plan))
    return outcomes
