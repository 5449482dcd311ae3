"""Interval algebra over integer traffic counts.

Intervals are half-open on the left: ``(lo, hi]`` with ``lo`` exclusive and
``hi`` inclusive, over non-negative integer counts. An interval (or a merge
of intervals) that admits no non-negative integer is *inconsistent*, which
is an ordinary value here (``None``), never an exception.

Packet/byte flow pairs add two coupled realizability checks:

* frame-size consistency: some integer packet count ``p`` and byte count
  ``b`` in the respective intervals satisfy ``p*frame_min <= b <= p*frame_max``
  (``p == 0`` forces ``b == 0``);
* boundary consistency: additionally ``b`` must be writable as ``p`` equal
  frames of one integer size ``s`` in ``[frame_min, frame_max]``, i.e.
  ``b == p*s``. This is the check that rejects byte windows too narrow to
  hit with whole frames.

Boundary consistency implies frame-size consistency; the cheaper frame-size
check runs first so rejections can be attributed to the right rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DEFAULT_P_CAP = 10**6

NEG_INF = float("-inf")
POS_INF = float("inf")


@dataclass(frozen=True)
class Interval:
    """Half-open count interval ``(lo, hi]``; infinities mark missing bounds."""

    lo: float = NEG_INF
    hi: float = POS_INF

    def contains(self, value: float) -> bool:
        return self.lo < value <= self.hi

    def lowest_admissible(self) -> int | None:
        """Smallest non-negative integer in the interval, or None."""
        if self.lo == NEG_INF:
            low = 0
        else:
            low = max(math.floor(self.lo) + 1, 0)
        if low > self.hi:
            return None
        return low

    def admits_integer(self) -> bool:
        return self.lowest_admissible() is not None

    def highest_admissible(self) -> float:
        """Largest admissible integer, or +inf when unbounded above."""
        if self.hi == POS_INF:
            return POS_INF
        return math.floor(self.hi)

    def is_full(self) -> bool:
        return self.lo == NEG_INF and self.hi == POS_INF


FULL = Interval()


def merge(a: Interval, b: Interval) -> Interval | None:
    """Intersection of two count intervals; None when no integer survives."""
    out = Interval(max(a.lo, b.lo), min(a.hi, b.hi))
    if not out.admits_integer():
        return None
    return out


def single_feature_consistent(iv: Interval) -> bool:
    """True when the interval admits at least one non-negative integer."""
    return iv.admits_integer()


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def frame_size_consistent(pkt: Interval, byte: Interval,
                          frame_min: int, frame_max: int) -> bool:
    """Existence of integer (p, b) with p*frame_min <= b <= p*frame_max."""
    p1 = pkt.lowest_admissible()
    b1 = byte.lowest_admissible()
    if p1 is None or b1 is None:
        return False
    p2 = pkt.highest_admissible()
    b2 = byte.highest_admissible()
    if p1 == 0 and b1 == 0:
        return True
    p_lo = max(p1, 1)
    if p_lo > p2:
        return False
    if frame_max > frame_min:
        # Consecutive byte bands [p*frame_min, p*frame_max] overlap once
        # p >= frame_min/(frame_max - frame_min); below that, test bands
        # one at a time.
        p_star = _ceil_div(frame_min, frame_max - frame_min)
        p_small_end = min(p2, p_star - 1)
        p = p_lo
        while p <= p_small_end:
            if max(b1, frame_min * p) <= min(b2, frame_max * p):
                return True
            p += 1
        a = max(p_lo, p_star)
        if a <= p2:
            hi_band = POS_INF if p2 == POS_INF else frame_max * int(p2)
            if max(b1, frame_min * a) <= min(b2, hi_band):
                return True
        return False
    # Degenerate single frame size: b must be exactly frame_min * p.
    f = frame_min
    lo_p = max(p_lo, _ceil_div(b1, f))
    hi_p = p2 if b2 == POS_INF else min(p2, int(b2) // f)
    return lo_p <= hi_p


def boundary_consistent(pkt: Interval, byte: Interval,
                        frame_min: int, frame_max: int,
                        p_cap: int = DEFAULT_P_CAP) -> bool:
    """Existence of integer p and single frame size s with p*s in the byte
    interval, s in [frame_min, frame_max]. Exhaustive over p up to p_cap."""
    p1 = pkt.lowest_admissible()
    b1 = byte.lowest_admissible()
    if p1 is None or b1 is None:
        return False
    p2 = pkt.highest_admissible()
    b2 = byte.highest_admissible()
    if p1 == 0 and b1 == 0:
        return True
    p_lo = max(p1, 1)
    if b2 == POS_INF:
        p_need = max(p_lo, _ceil_div(b1, frame_max))
        return p_need <= min(p2, p_cap)
    p_hi = min(p2, int(b2) // frame_min, p_cap)
    p = p_lo
    while p <= p_hi:
        s_lo = max(frame_min, _ceil_div(b1, p))
        s_hi = min(frame_max, int(b2) // p)
        if s_lo <= s_hi:
            return True
        p += 1
    return False


def pair_consistent(pkt: Interval, byte: Interval, frame_min: int,
                    frame_max: int, p_cap: int = DEFAULT_P_CAP) -> bool:
    return (frame_size_consistent(pkt, byte, frame_min, frame_max)
            and boundary_consistent(pkt, byte, frame_min, frame_max, p_cap))


def min_injection(pkt: Interval, byte: Interval, base_pkt: int, base_byte: int,
                  frame_min: int, frame_max: int,
                  p_cap: int = DEFAULT_P_CAP) -> tuple[int, int] | None:
    """Smallest traffic addition steering a flow pair into its intervals.

    Starting from observed counts (base_pkt, base_byte), find the fewest
    extra packets ``o`` (ties: fewest bytes) such that injecting ``o``
    equal frames of some integer size ``s`` lands both final counts inside
    their intervals. Returns (o, s), with s == 0 when o == 0, or None when
    no addition can reach the box (counts only ever grow).
    """
    p1 = pkt.lowest_admissible()
    b1 = byte.lowest_admissible()
    if p1 is None or b1 is None:
        return None
    p2 = pkt.highest_admissible()
    b2 = byte.highest_admissible()
    if base_pkt > p2 or base_byte > b2:
        return None
    if base_pkt >= p1 and b1 <= base_byte:
        return (0, 0)
    o = max(p1 - base_pkt, 1)
    need = max(b1 - base_byte, 0)
    if b2 == POS_INF:
        o = max(o, _ceil_div(need, frame_max))
        if base_pkt + o > p2 or o > p_cap:
            return None
        return (o, max(frame_min, _ceil_div(need, o)))
    o_max = p2 - base_pkt
    o_max = min(o_max, (int(b2) - base_byte) // frame_min, p_cap)
    while o <= o_max:
        s_lo = max(frame_min, _ceil_div(need, o))
        s_hi = min(frame_max, (int(b2) - base_byte) // o)
        if s_lo <= s_hi:
            return (o, s_lo)
        o += 1
    return None


@dataclass(frozen=True)
class Provenance:
    """Where a recipe came from: permutation index and contributing trees."""

    permutation: int
    trees: tuple[int, ...]


@dataclass(frozen=True)
class RecipeBox:
    """A per-feature interval box that steers an ensemble to target_class."""

    target_class: str
    intervals: tuple[Interval, ...]
    provenance: Provenance

    def signature(self) -> tuple:
        """Equality key for deduplication: class and exact interval bounds."""
        return (self.target_class,
                tuple((iv.lo, iv.hi) for iv in self.intervals))

    def admits(self, x) -> bool:
        return all(iv.contains(v) for iv, v in zip(self.intervals, x))


def box_consistent(intervals, schema, p_cap: int = DEFAULT_P_CAP) -> str | None:
    """None when the whole box is realizable, else the failing check name."""
    for i, iv in enumerate(intervals):
        if not iv.admits_integer():
            return f"feature {schema.features[i].name!r} admits no count"
    for pkt_i, byte_i in schema.flow_pairs:
        if not frame_size_consistent(intervals[pkt_i], intervals[byte_i],
                                     schema.frame_min, schema.frame_max):
            return f"flow {schema.flow_name((pkt_i, byte_i))!r} fails frame-size check"
        if not boundary_consistent(intervals[pkt_i], intervals[byte_i],
                                   schema.frame_min, schema.frame_max, p_cap):
            return f"flow {schema.flow_name((pkt_i, byte_i))!r} fails boundary check"
    return None


def _bound_to_json(value: float) -> float | None:
    if value == NEG_INF or value == POS_INF:
        return None
    return value


def box_to_json(box: RecipeBox, schema) -> dict:
    intervals = {}
    for name, iv in zip(schema.names, box.intervals):
        if iv.is_full():
            continue
        intervals[name] = {"gt": _bound_to_json(iv.lo), "le": _bound_to_json(iv.hi)}
    return {
        "target_class": box.target_class,
        "intervals": intervals,
        "provenance": {"permutation": box.provenance.permutation,
                       "trees": list(box.provenance.trees)},
    }


def box_from_json(obj: dict, schema) -> RecipeBox:
    intervals = [FULL] * len(schema)
    for name, bounds in obj.get("intervals", {}).items():
        idx = schema.index_of(name)
        lo = bounds.get("gt")
        hi = bounds.get("le")
        intervals[idx] = Interval(NEG_INF if lo is None else float(lo),
                                  POS_INF if hi is None else float(hi))
    prov = obj.get("provenance", {})
    return RecipeBox(
        target_class=obj["target_class"],
        intervals=tuple(intervals),
        provenance=Provenance(int(prov.get("permutation", 0)),
                              tuple(int(t) for t in prov.get("trees", ()))),
    )
