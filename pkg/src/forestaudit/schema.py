"""Flow feature schemas for per-epoch traffic telemetry vectors.

A schema names the features of the telemetry vector, pairs packet-count
features with their byte-count twins, and carries the frame-size bounds
used for realizability reasoning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DIRECTION_IN = "in"
DIRECTION_OUT = "out"
UNIT_PKT = "pkt"
UNIT_BYTE = "byte"

DEFAULT_FRAME_MIN = 64
DEFAULT_FRAME_MAX = 1518


@dataclass(frozen=True)
class FeatureDescriptor:
    """One telemetry feature: a directed flow counted in packets or bytes."""

    name: str
    direction: str
    unit: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("feature name must be non-empty")
        if self.direction not in (DIRECTION_IN, DIRECTION_OUT):
            raise ValueError(f"feature {self.name!r}: direction must be 'in' or 'out'")
        if self.unit not in (UNIT_PKT, UNIT_BYTE):
            raise ValueError(f"feature {self.name!r}: unit must be 'pkt' or 'byte'")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list plus packet/byte flow pairing and frame bounds.

    ``flow_pairs`` holds (pkt_index, byte_index) tuples. Every byte feature
    must belong to exactly one pair (a byte count is meaningless without its
    packet count); a pkt feature may be unpaired.
    """

    features: tuple[FeatureDescriptor, ...]
    flow_pairs: tuple[tuple[int, int], ...] = ()
    frame_min: int = DEFAULT_FRAME_MIN
    frame_max: int = DEFAULT_FRAME_MAX
    _index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self) -> None:
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if not (0 < self.frame_min <= self.frame_max):
            raise ValueError("frame bounds must satisfy 0 < frame_min <= frame_max")
        if int(self.frame_min) != self.frame_min or int(self.frame_max) != self.frame_max:
            raise ValueError("frame bounds must be integers")
        n = len(self.features)
        seen_pkt: set[int] = set()
        seen_byte: set[int] = set()
        for pkt_i, byte_i in self.flow_pairs:
            if not (0 <= pkt_i < n and 0 <= byte_i < n):
                raise ValueError(f"flow pair ({pkt_i}, {byte_i}) out of range")
            if self.features[pkt_i].unit != UNIT_PKT:
                raise ValueError(f"pair member {names[pkt_i]!r} is not a pkt feature")
            if self.features[byte_i].unit != UNIT_BYTE:
                raise ValueError(f"pair member {names[byte_i]!r} is not a byte feature")
            if pkt_i in seen_pkt:
                raise ValueError(f"pkt feature {names[pkt_i]!r} appears in two pairs")
            if byte_i in seen_byte:
                raise ValueError(f"byte feature {names[byte_i]!r} appears in two pairs")
            seen_pkt.add(pkt_i)
            seen_byte.add(byte_i)
        for i, feat in enumerate(self.features):
            if feat.unit == UNIT_BYTE and i not in seen_byte:
                raise ValueError(f"byte feature {feat.name!r} is not in any flow pair")
        object.__setattr__(self, "_index", {name: i for i, name in enumerate(names)})

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown feature {name!r}") from None

    def pair_of(self, index: int) -> tuple[int, int] | None:
        """Return the (pkt, byte) pair containing ``index``, if any."""
        for pkt_i, byte_i in self.flow_pairs:
            if index == pkt_i or index == byte_i:
                return (pkt_i, byte_i)
        return None

    def unpaired_indices(self) -> tuple[int, ...]:
        paired = {i for pair in self.flow_pairs for i in pair}
        return tuple(i for i in range(len(self.features)) if i not in paired)

    def flow_name(self, pair: tuple[int, int]) -> str:
        """Flow label for a pair, derived from the pkt feature name."""
        name = self.features[pair[0]].name
        return name[: -len("_pkt")] if name.endswith("_pkt") else name


# The eight directed flows tracked for consumer IoT devices, packets and
# bytes each: DNS both ways, NTP both ways, outgoing SSDP, incoming LAN,
# and WAN both ways.
_IOT_FLOWS = (
    ("dns_in", DIRECTION_IN),
    ("dns_out", DIRECTION_OUT),
    ("ntp_in", DIRECTION_IN),
    ("ntp_out", DIRECTION_OUT),
    ("ssdp_out", DIRECTION_OUT),
    ("lan_in", DIRECTION_IN),
    ("wan_in", DIRECTION_IN),
    ("wan_out", DIRECTION_OUT),
)


def default_iot_schema(frame_min: int = DEFAULT_FRAME_MIN,
                       frame_max: int = DEFAULT_FRAME_MAX) -> FeatureSchema:
    """The 16-feature IoT flow schema (8 flows x {pkt, byte})."""
    features = []
    pairs = []
    for flow, direction in _IOT_FLOWS:
        pkt_i = len(features)
        features.append(FeatureDescriptor(f"{flow}_pkt", direction, UNIT_PKT))
        features.append(FeatureDescriptor(f"{flow}_byte", direction, UNIT_BYTE))
        pairs.append((pkt_i, pkt_i + 1))
    return FeatureSchema(tuple(features), tuple(pairs), frame_min, frame_max)


def count_features_schema(names: tuple[str, ...] | list[str]) -> FeatureSchema:
    """A pairless schema of pure packet-count features (handy for tests/demos)."""
    feats = tuple(FeatureDescriptor(n, DIRECTION_IN, UNIT_PKT) for n in names)
    return FeatureSchema(feats, ())
