"""Synthetic benign IoT traffic for training and simulation.

Each device class occupies one integer packet band per flow, with gaps
between the bands of different classes so that decision splits land in the
gaps rather than inside a class's own range. Bursty flows add a second
"spike" band above the everyday one. One epoch per flow is pinned to the
configured maxima, which keeps the observed per-class maxima equal to the
configured ones and incidentally guarantees every tree a leaf around the
class's top corner. Bytes are packets times one shared per-epoch frame
size, so every epoch is realizable with equal-size frames.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .model_io import save_dataset
from .schema import FeatureSchema, default_iot_schema
from .simulate import TelemetryEpoch

DEFAULT_WINDOW_S = 60.0

# Frame sizes are drawn uniformly from [0.9, 1.1] x frame_mean.
_FRAME_SPREAD = 0.1


@dataclass(frozen=True)
class FlowProfile:
    """Per-epoch packet and byte behaviour of one flow for one class.

    pkt_lo..pkt_hi is the everyday band (uniform integers). With
    probability spike_prob an epoch jumps into spike_lo..spike_hi instead.
    The flow's configured maximum is the top of whichever band is higher.
    """

    pkt_lo: int
    pkt_hi: int
    frame_mean: float
    spike_prob: float = 0.0
    spike_lo: int = 0
    spike_hi: int = 0

    def __post_init__(self) -> None:
        if min(self.pkt_lo, self.pkt_hi, self.spike_lo, self.spike_hi) < 0:
            raise ValueError("packet bounds must be non-negative")
        if self.pkt_lo > self.pkt_hi:
            raise ValueError("packet band is empty")
        if not 0 <= self.spike_prob <= 1:
            raise ValueError("spike probability must lie in [0, 1]")
        if self.spike_prob > 0:
            if not self.pkt_hi < self.spike_lo <= self.spike_hi:
                raise ValueError("spike band must sit strictly above the "
                                 "everyday band")
        elif self.spike_lo or self.spike_hi:
            raise ValueError("spike band set but spike probability is zero")
        if self.pkt_max == 0:
            if self.frame_mean:
                raise ValueError("a silent flow must be all zeros")
        elif self.frame_mean <= 0:
            raise ValueError("active flows need a positive frame mean")

    @property
    def pkt_max(self) -> int:
        return self.spike_hi if self.spike_prob > 0 else self.pkt_hi


def _frame_bounds(prof: FlowProfile, fmin: int, fmax: int) -> tuple[int, int]:
    lo = max(fmin, int(round(prof.frame_mean * (1 - _FRAME_SPREAD))))
    hi = min(fmax, int(round(prof.frame_mean * (1 + _FRAME_SPREAD))))
    return lo, hi


@dataclass(frozen=True)
class BenignTraceModel:
    """Flow profiles per device class over a shared feature schema."""

    schema: FeatureSchema
    classes: dict[str, dict[str, FlowProfile]]
    window_s: float = DEFAULT_WINDOW_S

    def __post_init__(self) -> None:
        if self.window_s <= 0:
            raise ValueError("window must be positive")
        if not self.classes:
            raise ValueError("at least one class is required")
        flows = {self.schema.flow_name(pair) for pair in self.schema.flow_pairs}
        fmin, fmax = self.schema.frame_min, self.schema.frame_max
        for label, profiles in self.classes.items():
            unknown = set(profiles) - flows
            if unknown:
                raise ValueError(f"class {label!r} configures unknown flows "
                                 f"{sorted(unknown)}")
            for flow, prof in profiles.items():
                if prof.pkt_max == 0:
                    continue
                if not fmin <= prof.frame_mean <= fmax:
                    raise ValueError(
                        f"class {label!r} flow {flow!r}: frame mean outside "
                        f"{fmin}..{fmax}")
                f_lo, f_hi = _frame_bounds(prof, fmin, fmax)
                if f_lo > f_hi:
                    raise ValueError(
                        f"class {label!r} flow {flow!r}: frame band collapsed "
                        f"by schema bounds")

    def labels(self) -> list[str]:
        return sorted(self.classes)


def configured_maxima(model: BenignTraceModel, label: str) -> np.ndarray:
    """Per-feature epoch maxima a class can reach under its profile."""
    profiles = model.classes[label]
    out = np.zeros(len(model.schema), dtype=np.int64)
    fmin, fmax = model.schema.frame_min, model.schema.frame_max
    for pair in model.schema.flow_pairs:
        prof = profiles.get(model.schema.flow_name(pair))
        if prof is None or prof.pkt_max == 0:
            continue
        _, f_hi = _frame_bounds(prof, fmin, fmax)
        out[pair[0]] = prof.pkt_max
        out[pair[1]] = prof.pkt_max * f_hi
    return out


def _sample_flow(prof: FlowProfile, n: int, fmin: int, fmax: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, int]:
    """Epoch (packet, byte) samples for one flow, plus the pin epoch.

    Bytes are packets times a per-epoch frame size drawn from the flow's
    frame band. The returned pin index (first spike epoch, or epoch 0 for
    spike-free flows) is where the caller writes the configured maxima so
    the empirical per-class maxima match configured_maxima exactly.
    """
    if prof.pkt_max == 0:
        z = np.zeros(n, dtype=np.int64)
        return z, z.copy(), 0
    pkts = rng.integers(prof.pkt_lo, prof.pkt_hi + 1, n)
    pin_at = 0
    if prof.spike_prob > 0:
        spiking = rng.random(n) < prof.spike_prob
        if not spiking.any():
            spiking[rng.integers(n)] = True
        idx = np.flatnonzero(spiking)
        pkts[idx] = rng.integers(prof.spike_lo, prof.spike_hi + 1, idx.size)
        pin_at = int(idx[0])
    f_lo, f_hi = _frame_bounds(prof, fmin, fmax)
    frames = rng.integers(f_lo, f_hi + 1, n)
    return pkts.astype(np.int64), (pkts * frames).astype(np.int64), pin_at


def generate_benign_trace(model: BenignTraceModel, label: str, n_epochs: int,
                          seed: int) -> list[TelemetryEpoch]:
    """Deterministic epoch trace for one device class."""
    if n_epochs <= 0:
        raise ValueError("need at least one epoch")
    if label not in model.classes:
        raise KeyError(f"unknown class {label!r}")
    schema = model.schema
    profiles = model.classes[label]
    class_id = model.labels().index(label)
    rng = np.random.default_rng([seed, class_id])
    counts = np.zeros((n_epochs, len(schema)), dtype=np.int64)
    for pair in schema.flow_pairs:
        prof = profiles.get(schema.flow_name(pair))
        if prof is None:
            continue
        pkts, bytes_, pin_at = _sample_flow(prof, n_epochs, schema.frame_min,
                                            schema.frame_max, rng)
        counts[:, pair[0]] = pkts
        counts[:, pair[1]] = bytes_
        if prof.pkt_max > 0:
            _, f_hi = _frame_bounds(prof, schema.frame_min, schema.frame_max)
            counts[pin_at, pair[0]] = prof.pkt_max
            counts[pin_at, pair[1]] = prof.pkt_max * f_hi
    return [TelemetryEpoch(index=k, start_s=k * model.window_s,
                           window_s=model.window_s, counts=counts[k])
            for k in range(n_epochs)]


def trace_to_dataset(traces: dict[str, list[TelemetryEpoch]]) -> tuple[np.ndarray, list[str]]:
    """Stack per-class traces into a labelled count matrix."""
    rows = []
    labels = []
    for label in sorted(traces):
        for epoch in traces[label]:
            rows.append(epoch.counts)
            labels.append(label)
    if not rows:
        raise ValueError("no epochs supplied")
    return np.vstack(rows), labels


def build_corpus(model: BenignTraceModel, epochs_per_class: int,
                 seed: int) -> tuple[np.ndarray, list[str]]:
    traces = {label: generate_benign_trace(model, label, epochs_per_class, seed)
              for label in model.labels()}
    return trace_to_dataset(traces)


def _fp(lo: int, hi: int, frame: float) -> FlowProfile:
    return FlowProfile(pkt_lo=lo, pkt_hi=hi, frame_mean=frame)


def _fps(lo: int, hi: int, frame: float, prob: float, s_lo: int,
         s_hi: int) -> FlowProfile:
    return FlowProfile(pkt_lo=lo, pkt_hi=hi, frame_mean=frame,
                       spike_prob=prob, spike_lo=s_lo, spike_hi=s_hi)


_SILENT = FlowProfile(0, 0, 0.0)

# Shared frame means per flow; keeping them equal across classes makes the
# byte-feature band order track the packet-feature band order.
_F_DNS_IN, _F_DNS_OUT, _F_NTP, _F_SSDP = 300.0, 95.0, 90.0, 330.0
_F_LAN, _F_WAN_IN, _F_WAN_OUT = 200.0, 800.0, 900.0


def default_trace_model() -> BenignTraceModel:
    """Nine consumer-device classes over the default flow schema.

    Rates are per one-minute epoch. Bands of different classes keep gaps on
    the features that tell them apart, so trees split in the gaps and each
    class's own range stays unsliced; byte gaps survive the 0.9-1.1 frame
    spread because adjacent band ratios stay above 1.23. The doorbell's
    WAN-out spikes make it the bursty class of the set, and the speaker and
    stick bands brush the bottom of the doorbell's everyday band.
    """
    classes = {
        "camera": {
            "dns_in": _fp(26, 44, _F_DNS_IN),
            "dns_out": _fp(26, 44, _F_DNS_OUT),
            "ntp_in": _fp(0, 4, _F_NTP),
            "ntp_out": _fp(0, 4, _F_NTP),
            "ssdp_out": _fp(1, 6, _F_SSDP),
            "lan_in": _fp(46, 80, _F_LAN),
            "wan_in": _fp(760, 1200, _F_WAN_IN),
            "wan_out": _fp(320, 520, _F_WAN_OUT),
        },
        "speaker": {
            "dns_in": _fp(26, 44, _F_DNS_IN),
            "dns_out": _fp(26, 44, _F_DNS_OUT),
            "ntp_in": _fp(0, 4, _F_NTP),
            "ntp_out": _fp(0, 4, _F_NTP),
            "ssdp_out": _fp(1, 6, _F_SSDP),
            "lan_in": _fp(18, 34, _F_LAN),
            "wan_in": _fp(300, 380, _F_WAN_IN),
            "wan_out": _fp(24, 34, _F_WAN_OUT),
        },
        "tv_stick": {
            "dns_in": _fp(26, 44, _F_DNS_IN),
            "dns_out": _fp(26, 44, _F_DNS_OUT),
            "ntp_in": _fp(0, 4, _F_NTP),
            "ntp_out": _fp(0, 4, _F_NTP),
            "ssdp_out": _fp(1, 6, _F_SSDP),
            "lan_in": _fp(18, 34, _F_LAN),
            "wan_in": _fp(480, 620, _F_WAN_IN),
            "wan_out": _fp(24, 34, _F_WAN_OUT),
        },
        "doorbell": {
            "dns_in": _fp(26, 44, _F_DNS_IN),
            "dns_out": _fp(26, 44, _F_DNS_OUT),
            "ntp_in": _fp(0, 4, _F_NTP),
            "ntp_out": _fp(0, 4, _F_NTP),
            "ssdp_out": _fp(1, 6, _F_SSDP),
            "lan_in": _fp(18, 34, _F_LAN),
            "wan_in": _fp(16, 40, _F_WAN_IN),
            "wan_out": _fps(44, 96, _F_WAN_OUT, 0.45, 150, 260),
        },  # WAN-out spikes stay under the camera band, which starts at 320
        "hub": {
            "dns_in": _fp(26, 44, _F_DNS_IN),
            "dns_out": _fp(26, 44, _F_DNS_OUT),
            "ntp_in": _fp(0, 4, _F_NTP),
            "ntp_out": _fp(0, 4, _F_NTP),
            "ssdp_out": _fp(26, 48, _F_SSDP),
            "lan_in": _fp(46, 80, _F_LAN),
            "wan_in": _fp(16, 40, _F_WAN_IN),
            "wan_out": _fp(2, 18, _F_WAN_OUT),
        },
        "thermostat": {
            "dns_in": _fp(26, 44, _F_DNS_IN),
            "dns_out": _fp(26, 44, _F_DNS_OUT),
            "ntp_in": _fp(0, 4, _F_NTP),
            "ntp_out": _fp(0, 4, _F_NTP),
            "ssdp_out": _fp(1, 6, _F_SSDP),
            "lan_in": _fp(18, 34, _F_LAN),
            "wan_in": _fp(0, 10, _F_WAN_IN),
            "wan_out": _fp(2, 18, _F_WAN_OUT),
        },
        "bulb": {
            "dns_in": _fp(13, 20, _F_DNS_IN),
            "dns_out": _fp(13, 20, _F_DNS_OUT),
            "ntp_in": _fp(0, 4, _F_NTP),
            "ntp_out": _fp(0, 4, _F_NTP),
            "ssdp_out": _fp(1, 6, _F_SSDP),
            "lan_in": _fp(2, 10, _F_LAN),
            "wan_in": _fp(0, 10, _F_WAN_IN),
            "wan_out": _fp(2, 18, _F_WAN_OUT),
        },
        "plug": {
            "dns_in": _fp(5, 10, _F_DNS_IN),
            "dns_out": _fp(5, 10, _F_DNS_OUT),
            "ntp_in": _fp(0, 4, _F_NTP),
            "ntp_out": _fp(0, 4, _F_NTP),
            "ssdp_out": _SILENT,
            "lan_in": _fp(2, 10, _F_LAN),
            "wan_in": _fp(0, 10, _F_WAN_IN),
            "wan_out": _fp(2, 18, _F_WAN_OUT),
        },
        "sensor": {
            "dns_in": _fp(0, 3, _F_DNS_IN),
            "dns_out": _fp(0, 3, _F_DNS_OUT),
            "ntp_in": _fp(0, 4, _F_NTP),
            "ntp_out": _fp(0, 4, _F_NTP),
            "ssdp_out": _SILENT,
            "lan_in": _fp(2, 10, _F_LAN),
            "wan_in": _fp(0, 10, _F_WAN_IN),
            "wan_out": _fp(2, 18, _F_WAN_OUT),
        },
    }
    return BenignTraceModel(schema=default_iot_schema(), classes=classes)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m forestaudit.datasets",
        description="Emit a synthetic labelled IoT traffic dataset as CSV.")
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--epochs-per-class", type=int, default=240)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    model = default_trace_model()
    X, y = build_corpus(model, args.epochs_per_class, args.seed)
    save_dataset(args.out, X, y, model.schema)
    print(f"wrote {len(y)} rows x {X.shape[1]} features to {args.out}",
          file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
