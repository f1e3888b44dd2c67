"""Packet-trace parsing and notification RTT extraction.

Works on application-agnostic packet event streams (JSONL exports of a
capture, one event per line). Notification packets are identified purely
by direction and TCP payload length ranges, so no decryption is needed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

OUT = "out"
IN = "in"

MESSAGE_CANDIDATE = "message_candidate"
SERVER_NOTE = "server_note"
DELIVERY_NOTE = "delivery_note"
OTHER = "other"

# A server confirmation left unpaired for this long is treated as lost;
# legitimate gaps are bounded by the 10 s / 20 s send schedule.
ORPHAN_TIMEOUT_S = 30.0


class TraceParseError(ValueError):
    pass


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class PacketEvent:
    index: int
    t: float
    direction: str  # "in" | "out"
    length: int
    peer: str


@dataclass(frozen=True)
class MessengerProfile:
    """Per-messenger identification rules for notification packets."""

    name: str
    server_note_len: tuple[int, int]  # inclusive byte range
    delivery_note_len: tuple[int, int]
    confirmation_mode: str = "dual"  # "dual" | "single"
    server_address_filter: tuple[str, ...] = ()

    def __post_init__(self):
        if self.confirmation_mode not in ("dual", "single"):
            raise ProfileError(f"{self.name}: unknown confirmation_mode {self.confirmation_mode!r}")
        for label, rng in (("server_note_len", self.server_note_len),
                           ("delivery_note_len", self.delivery_note_len)):
            if rng[0] > rng[1]:
                raise ProfileError(f"{self.name}: empty {label} range {rng}")
        if self.confirmation_mode == "dual":
            lo1, hi1 = self.server_note_len
            lo2, hi2 = self.delivery_note_len
            if lo1 <= hi2 and lo2 <= hi1:
                raise ProfileError(f"{self.name}: server and delivery length ranges overlap")


@dataclass(frozen=True)
class NotificationRtts:
    """The matched timings of one message (all in seconds).

    rtt_sm and rtt_mr are None for single-confirmation traffic, where the
    server and delivery confirmations collapse into one packet.
    """

    message_t: float
    rtt_sr: float
    rtt_sm: float | None = None
    rtt_mr: float | None = None


@dataclass
class MatchResult:
    records: list[NotificationRtts]
    orphan_server_notes: int = 0
    orphan_delivery_notes: int = 0
    ambiguous_pairs: int = 0

    @property
    def orphans(self) -> int:
        return self.orphan_server_notes + self.orphan_delivery_notes


def filter_messenger_traffic(trace: list[PacketEvent], profile: MessengerProfile) -> list[PacketEvent]:
    """Keep only events whose peer matches one of the profile's address prefixes.

    An empty filter keeps everything (the caller already isolated the traffic).
    """
    if not profile.server_address_filter:
        return list(trace)
    return [ev for ev in trace
            if any(ev.peer.startswith(p) for p in profile.server_address_filter)]


def _in_range(length: int, rng: tuple[int, int]) -> bool:
    return rng[0] <= length <= rng[1]


def classify_packet(p: PacketEvent, profile: MessengerProfile) -> str:
    if p.direction == OUT:
        return MESSAGE_CANDIDATE
    if profile.confirmation_mode == "single":
        return DELIVERY_NOTE if _in_range(p.length, profile.delivery_note_len) else OTHER
    if _in_range(p.length, profile.server_note_len):
        return SERVER_NOTE
    if _in_range(p.length, profile.delivery_note_len):
        return DELIVERY_NOTE
    return OTHER


def match_sequences(trace: list[PacketEvent], profile: MessengerProfile,
                    orphan_timeout: float = ORPHAN_TIMEOUT_S) -> MatchResult:
    """Pair server/delivery confirmations and compute per-message RTTs.

    Dual mode: a delivery confirmation is paired with the nearest preceding
    unpaired server confirmation n1, and the message m is the latest outbound
    packet sent before n1 arrived. The pair is discarded as ambiguous when
    another server confirmation arrived between n1 and the delivery packet,
    because the confirmations then belong to different in-flight messages.
    Single mode: every delivery confirmation is matched with the latest
    preceding outbound packet and only the sender-receiver RTT is known.

    Unmatchable confirmations are dropped and counted, never fatal.
    """
    result = MatchResult(records=[])
    last_out_t: float | None = None
    last_server_note_t: float | None = None
    pending: list[tuple[float, float | None]] = []  # (t_n1, matched message t)

    for ev in trace:
        kind = classify_packet(ev, profile)
        if kind == MESSAGE_CANDIDATE:
            last_out_t = ev.t
            continue
        if kind == SERVER_NOTE:
            pending.append((ev.t, last_out_t))
            last_server_note_t = ev.t
            continue
        if kind != DELIVERY_NOTE:
            continue

        if profile.confirmation_mode == "single":
            if last_out_t is None or ev.t <= last_out_t:
                result.orphan_delivery_notes += 1
            else:
                result.records.append(NotificationRtts(message_t=last_out_t, rtt_sr=ev.t - last_out_t))
            continue

        while pending and ev.t - pending[0][0] > orphan_timeout:
            pending.pop(0)
            result.orphan_server_notes += 1
        if not pending:
            result.orphan_delivery_notes += 1
            continue
        t_n1, m_t = pending.pop()
        if m_t is None:
            # confirmation arrived before any message was observed
            result.orphan_server_notes += 1
            result.orphan_delivery_notes += 1
            continue
        if last_server_note_t is not None and last_server_note_t > t_n1:
            result.ambiguous_pairs += 1
            continue
        rtt_sm = t_n1 - m_t
        rtt_sr = ev.t - m_t
        if rtt_sm <= 0.0 or rtt_sr <= rtt_sm:
            result.ambiguous_pairs += 1
            continue
        result.records.append(NotificationRtts(
            message_t=m_t, rtt_sr=rtt_sr, rtt_sm=rtt_sm, rtt_mr=rtt_sr - rtt_sm))

    result.orphan_server_notes += len(pending)
    return result


def parse_trace_jsonl(path) -> list[PacketEvent]:
    """Parse a packet trace (one JSON object per line: idx, t, dir, len, peer)."""
    events = []
    prev_t = None
    prev_idx = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                ev = PacketEvent(index=int(obj["idx"]), t=float(obj["t"]),
                                 direction=str(obj["dir"]), length=int(obj["len"]),
                                 peer=str(obj["peer"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TraceParseError(f"{path}:{lineno}: bad packet event: {exc}") from None
            if ev.direction not in (IN, OUT):
                raise TraceParseError(f"{path}:{lineno}: dir must be 'in' or 'out', got {ev.direction!r}")
            if ev.t < 0 or ev.length <= 0:
                raise TraceParseError(f"{path}:{lineno}: t must be >= 0 and len > 0")
            if prev_t is not None and (ev.t < prev_t or ev.index <= prev_idx):
                raise TraceParseError(f"{path}:{lineno}: events out of order (t or idx not increasing)")
            prev_t, prev_idx = ev.t, ev.index
            events.append(ev)
    return events


def extract_trace_file(path, profile: MessengerProfile,
                       orphan_timeout: float = ORPHAN_TIMEOUT_S) -> MatchResult:
    return match_sequences(filter_messenger_traffic(parse_trace_jsonl(path), profile),
                           profile, orphan_timeout=orphan_timeout)


# ---------------------------------------------------------------------------
# profiles

def load_profiles(path=None) -> dict[str, MessengerProfile]:
    """Load messenger profiles from JSON; defaults to the bundled table."""
    if path is None:
        from importlib import resources
        fh = resources.files("notilab.data").joinpath("profiles.json").open("r", encoding="utf-8")
    else:
        fh = open(path, encoding="utf-8")
    with fh:
        raw = json.load(fh)
    profiles = {}
    for name, entry in raw.items():
        profiles[name] = MessengerProfile(
            name=name,
            server_note_len=tuple(entry["server_note_len"]),
            delivery_note_len=tuple(entry["delivery_note_len"]),
            confirmation_mode=entry.get("confirmation_mode", "dual"),
            server_address_filter=tuple(entry.get("server_address_filter", ())),
        )
    return profiles


# ---------------------------------------------------------------------------
# record CSV round trip (trace_id,message_t,rtt_sm,rtt_sr,rtt_mr)

def _fmt(x: float | None) -> str:
    return "" if x is None else repr(x)


def write_records_csv(path, rows: list[tuple[str, NotificationRtts]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["trace_id", "message_t", "rtt_sm", "rtt_sr", "rtt_mr"])
        for trace_id, r in rows:
            w.writerow([trace_id, repr(r.message_t), _fmt(r.rtt_sm), repr(r.rtt_sr), _fmt(r.rtt_mr)])


def read_records_csv(path) -> list[tuple[str, NotificationRtts]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = NotificationRtts(
                    message_t=float(row["message_t"]),
                    rtt_sr=float(row["rtt_sr"]),
                    rtt_sm=float(row["rtt_sm"]) if row["rtt_sm"] else None,
                    rtt_mr=float(row["rtt_mr"]) if row["rtt_mr"] else None,
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise TraceParseError(f"{path}:{lineno}: bad record row: {exc}") from None
            rows.append((row["trace_id"], rec))
    return rows


def shift_delivery(record: NotificationRtts, delay: float) -> NotificationRtts:
    """Return a copy with the delivery confirmation delayed by `delay` seconds."""
    if delay == 0.0:
        return record
    new_sr = record.rtt_sr + delay
    new_mr = None if record.rtt_sm is None else new_sr - record.rtt_sm
    return replace(record, rtt_sr=new_sr, rtt_mr=new_mr)
