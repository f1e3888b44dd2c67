"""Seeded simulator of the sender -> server -> receiver delivery pipeline.

Replays the measurement send schedule (bursts of short messages at a fixed
interval, one long message after a longer wait) against configurable latency
distributions and emits both the packet events an on-device capture would
see and the ground-truth RTTs behind them.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .seeds import sub_rng
from .traces import IN, OUT, MessengerProfile, NotificationRtts, PacketEvent, load_profiles

_ID_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


class ScenarioError(ValueError):
    """Invalid scenario configuration; message names the offending field."""


@dataclass(frozen=True)
class LatencyProfile:
    """One-way latency distribution; samples are strictly positive seconds.

    kinds: lognormal(mu, sigma), normal(mean, std) truncated at 0,
    shifted_exponential(offset, rate).
    """

    kind: str
    params: tuple[float, ...]

    @staticmethod
    def lognormal(mu: float, sigma: float) -> "LatencyProfile":
        return LatencyProfile("lognormal", (mu, sigma))

    @staticmethod
    def normal(mean: float, std: float) -> "LatencyProfile":
        return LatencyProfile("normal", (mean, std))

    @staticmethod
    def shifted_exponential(offset: float, rate: float) -> "LatencyProfile":
        return LatencyProfile("shifted_exponential", (offset, rate))

    def validate(self, where: str) -> None:
        if self.kind == "lognormal":
            _mu, sigma = self.params
            if sigma <= 0:
                raise ScenarioError(f"{where}.sigma: must be > 0")
        elif self.kind == "normal":
            mean, std = self.params
            if mean <= 0:
                raise ScenarioError(f"{where}.mean: must be > 0")
            if std <= 0:
                raise ScenarioError(f"{where}.std: must be > 0")
        elif self.kind == "shifted_exponential":
            offset, rate = self.params
            if offset < 0:
                raise ScenarioError(f"{where}.offset: must be >= 0")
            if rate <= 0:
                raise ScenarioError(f"{where}.rate: must be > 0")
        else:
            raise ScenarioError(f"{where}.kind: unknown distribution {self.kind!r}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "lognormal":
            return float(rng.lognormal(*self.params))
        if self.kind == "normal":
            mean, std = self.params
            x = float(rng.normal(mean, std))
            while x <= 0.0:
                x = float(rng.normal(mean, std))
            return x
        offset, rate = self.params
        return offset + float(rng.exponential(1.0 / rate))


@dataclass(frozen=True)
class ReceiverSpec:
    id: str
    location_label: str
    network_type: str  # "wifi" | "cellular"
    uplink: LatencyProfile
    processing_delay: LatencyProfile


@dataclass
class ScenarioConfig:
    messenger: MessengerProfile
    sender_to_server: LatencyProfile
    server_processing: LatencyProfile
    receivers: list[ReceiverSpec]
    iterations: int
    messages_per_iteration: int = 5
    short_interval: float = 10.0
    long_interval: float = 20.0
    delivery_delay_max: float = 0.0
    rng_seed: int = 0
    start_epoch: float = 0.0
    hourly_factors: list[float] | None = None  # 24 multiplicative bins, None = flat

    def validate(self) -> None:
        if self.iterations < 1:
            raise ScenarioError("iterations: must be >= 1")
        if self.messages_per_iteration < 1:
            raise ScenarioError("messages_per_iteration: must be >= 1")
        if self.short_interval <= 0:
            raise ScenarioError("short_interval: must be > 0")
        if self.long_interval <= 0:
            raise ScenarioError("long_interval: must be > 0")
        if self.delivery_delay_max < 0:
            raise ScenarioError("delivery_delay_max: must be >= 0")
        if not self.receivers:
            raise ScenarioError("receivers: must not be empty")
        self.sender_to_server.validate("sender_to_server")
        self.server_processing.validate("server_processing")
        seen = set()
        for i, r in enumerate(self.receivers):
            if not _ID_RE.match(r.id):
                raise ScenarioError(f"receivers[{i}].id: not a safe identifier: {r.id!r}")
            if r.id in seen:
                raise ScenarioError(f"receivers[{i}].id: duplicate id {r.id!r}")
            seen.add(r.id)
            if not r.location_label:
                raise ScenarioError(f"receivers[{i}].location_label: must not be empty")
            if r.network_type not in ("wifi", "cellular"):
                raise ScenarioError(f"receivers[{i}].network_type: must be wifi or cellular")
            r.uplink.validate(f"receivers[{i}].uplink")
            r.processing_delay.validate(f"receivers[{i}].processing_delay")
        if self.hourly_factors is not None:
            if len(self.hourly_factors) != 24:
                raise ScenarioError("hourly_factors: need exactly 24 values")
            if any(f <= 0 for f in self.hourly_factors):
                raise ScenarioError("hourly_factors: all values must be > 0")
        # outbound message lengths are drawn from 90..600 minus the
        # notification ranges; that set must not be empty
        ranges = [self.messenger.delivery_note_len]
        if self.messenger.confirmation_mode == "dual":
            ranges.append(self.messenger.server_note_len)
        if all(any(lo <= n <= hi for lo, hi in ranges) for n in range(90, 601)):
            raise ScenarioError("messenger: notification length ranges leave no "
                                "room for outbound message lengths in 90..600")

    def send_offsets(self) -> list[float]:
        """Send times within one iteration: short gaps, then one long gap."""
        n = self.messages_per_iteration
        if n == 1:
            return [0.0]
        offs = [i * self.short_interval for i in range(n - 1)]
        offs.append((n - 2) * self.short_interval + self.long_interval)
        return offs

    def iteration_period(self) -> float:
        # tail gap of short+long keeps inter-iteration gaps strictly larger
        # than any in-schedule gap, so iterations can be re-identified later
        return self.send_offsets()[-1] + self.long_interval + self.short_interval


@dataclass
class TruthEntry:
    iteration: int
    msg_idx: int
    rtts: NotificationRtts


@dataclass
class ReceiverRun:
    receiver: ReceiverSpec
    trace: list[PacketEvent]
    truth: list[TruthEntry] = field(default_factory=list)


def _peer_address(profile: MessengerProfile) -> str:
    if profile.server_address_filter:
        return profile.server_address_filter[0] + "10"
    return f"{profile.name}.invalid"


def _draw_outbound_len(rng: np.random.Generator, profile: MessengerProfile) -> int:
    ranges = [profile.delivery_note_len]
    if profile.confirmation_mode == "dual":
        ranges.append(profile.server_note_len)
    while True:
        n = int(rng.integers(90, 601))
        if not any(lo <= n <= hi for lo, hi in ranges):
            return n


def run_scenario(cfg: ScenarioConfig) -> dict[str, ReceiverRun]:
    """Simulate all iterations for every receiver.

    Each message yields an outbound packet at its send time, a server
    confirmation after the sender-server leg, and a delivery confirmation
    after the additional receiver leg plus the optional uniform random
    countermeasure delay (which only ever moves the delivery confirmation).
    Fully deterministic for a given rng_seed; each (receiver, iteration)
    pair draws from its own derived RNG stream so runs parallelize safely.
    """
    cfg.validate()
    peer = _peer_address(cfg.messenger)
    dual = cfg.messenger.confirmation_mode == "dual"
    offsets = cfg.send_offsets()
    period = cfg.iteration_period()
    factors = cfg.hourly_factors

    runs: dict[str, ReceiverRun] = {}
    for r_idx, receiver in enumerate(cfg.receivers):
        raw_events: list[tuple[float, str, int]] = []  # (t, dir, len)
        truth: list[TruthEntry] = []
        for it in range(cfg.iterations):
            rng = sub_rng(cfg.rng_seed, r_idx, it)
            base = it * period
            for msg_idx, off in enumerate(offsets):
                send_t = base + off
                d1 = cfg.sender_to_server.sample(rng) + cfg.server_processing.sample(rng)
                d2 = receiver.uplink.sample(rng) + receiver.processing_delay.sample(rng)
                u = float(rng.uniform(0.0, cfg.delivery_delay_max))
                if factors is not None:
                    hour = int((cfg.start_epoch + send_t) // 3600.0) % 24
                    d1 *= factors[hour]
                    d2 *= factors[hour]
                out_len = _draw_outbound_len(rng, cfg.messenger)

                rtt_sm = d1
                rtt_mr = d2 + u
                rtt_sr = rtt_sm + rtt_mr
                raw_events.append((send_t, OUT, out_len))
                if dual:
                    sn_len = int(rng.integers(cfg.messenger.server_note_len[0],
                                              cfg.messenger.server_note_len[1] + 1))
                    dn_len = int(rng.integers(cfg.messenger.delivery_note_len[0],
                                              cfg.messenger.delivery_note_len[1] + 1))
                    raw_events.append((send_t + rtt_sm, IN, sn_len))
                    raw_events.append((send_t + rtt_sr, IN, dn_len))
                    rec = NotificationRtts(message_t=send_t, rtt_sr=rtt_sr,
                                           rtt_sm=rtt_sm, rtt_mr=rtt_mr)
                else:
                    dn_len = int(rng.integers(cfg.messenger.delivery_note_len[0],
                                              cfg.messenger.delivery_note_len[1] + 1))
                    raw_events.append((send_t + rtt_sr, IN, dn_len))
                    rec = NotificationRtts(message_t=send_t, rtt_sr=rtt_sr)
                truth.append(TruthEntry(iteration=it, msg_idx=msg_idx, rtts=rec))

        raw_events.sort(key=lambda e: e[0])
        trace = [PacketEvent(index=i, t=t, direction=d, length=ln, peer=peer)
                 for i, (t, d, ln) in enumerate(raw_events)]
        runs[receiver.id] = ReceiverRun(receiver=receiver, trace=trace, truth=truth)
    return runs


def emit_trace(trace: list[PacketEvent], path) -> None:
    """Write a trace as JSONL, one event per line, full float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for ev in trace:
            fh.write(json.dumps({"idx": ev.index, "t": ev.t, "dir": ev.direction,
                                 "len": ev.length, "peer": ev.peer}) + "\n")


def write_truth_csv(runs: dict[str, ReceiverRun], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["receiver", "iteration", "msg_idx", "rtt_sm", "rtt_sr"])
        for rid, run in runs.items():
            for entry in run.truth:
                sm = "" if entry.rtts.rtt_sm is None else repr(entry.rtts.rtt_sm)
                w.writerow([rid, entry.iteration, entry.msg_idx, sm, repr(entry.rtts.rtt_sr)])


# ---------------------------------------------------------------------------
# JSON scenario configs

def _latency_from_json(obj, where: str) -> LatencyProfile:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ScenarioError(f"{where}: expected an object with a 'kind' field")
    kind = obj["kind"]
    try:
        if kind == "lognormal":
            prof = LatencyProfile.lognormal(float(obj["mu"]), float(obj["sigma"]))
        elif kind == "normal":
            prof = LatencyProfile.normal(float(obj["mean"]), float(obj["std"]))
        elif kind == "shifted_exponential":
            prof = LatencyProfile.shifted_exponential(float(obj["offset"]), float(obj["rate"]))
        else:
            raise ScenarioError(f"{where}.kind: unknown distribution {kind!r}")
    except KeyError as exc:
        raise ScenarioError(f"{where}: missing parameter {exc.args[0]!r} for {kind}") from None
    prof.validate(where)
    return prof


def scenario_from_json(obj: dict, profiles: dict[str, MessengerProfile] | None = None) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed JSON document."""
    if profiles is None:
        profiles = load_profiles(obj.get("profiles_file"))
    try:
        name = obj["messenger"]
    except KeyError:
        raise ScenarioError("messenger: missing") from None
    if name not in profiles:
        raise ScenarioError(f"messenger: unknown profile {name!r}")
    try:
        receivers = [
            ReceiverSpec(
                id=str(r["id"]),
                location_label=str(r["location_label"]),
                network_type=str(r["network_type"]),
                uplink=_latency_from_json(r["uplink"], f"receivers[{i}].uplink"),
                processing_delay=_latency_from_json(r["processing_delay"],
                                                    f"receivers[{i}].processing_delay"),
            )
            for i, r in enumerate(obj.get("receivers", []))
        ]
        cfg = ScenarioConfig(
            messenger=profiles[name],
            sender_to_server=_latency_from_json(obj["sender_to_server"], "sender_to_server"),
            server_processing=_latency_from_json(obj["server_processing"], "server_processing"),
            receivers=receivers,
            iterations=int(obj["iterations"]),
            messages_per_iteration=int(obj.get("messages_per_iteration", 5)),
            short_interval=float(obj.get("short_interval", 10.0)),
            long_interval=float(obj.get("long_interval", 20.0)),
            delivery_delay_max=float(obj.get("delivery_delay_max", 0.0)),
            rng_seed=int(obj.get("rng_seed", 0)),
            start_epoch=float(obj.get("start_epoch", 0.0)),
            hourly_factors=list(obj["hourly_factors"]) if obj.get("hourly_factors") else None,
        )
    except KeyError as exc:
        raise ScenarioError(f"{exc.args[0]}: missing") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    cfg.validate()
    return cfg


def load_scenario(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON: {exc}") from None
    return scenario_from_json(obj)
