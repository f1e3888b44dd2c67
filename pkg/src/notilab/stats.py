"""Descriptive statistics over extracted timings."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .geo import GeoPoint, ServerRecord, great_circle_distance
from .traces import NotificationRtts


@dataclass
class DistributionSummary:
    label: str
    count: int
    min: float | None = None
    q1: float | None = None
    median: float | None = None
    q3: float | None = None
    max: float | None = None
    mean: float | None = None
    std: float | None = None


def summarize_values(label: str, values) -> DistributionSummary:
    vals = np.sort(np.asarray(values, dtype=float))  # makes summaries order-invariant
    if vals.size == 0:
        raise ValueError(f"group {label!r} is empty")
    q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])  # linear interpolation
    return DistributionSummary(label=label, count=int(vals.size),
                               min=float(q[0]), q1=float(q[1]), median=float(q[2]),
                               q3=float(q[3]), max=float(q[4]),
                               mean=float(vals.mean()), std=float(vals.std()))


def resolve_feature(records: list[NotificationRtts], feature: str = "auto") -> str:
    """Settle on one RTT feature; auto prefers rtt_mr, falls back to rtt_sr."""
    has_mr = {r.rtt_mr is not None for r in records}
    if feature == "auto":
        if has_mr == {True}:
            return "rtt_mr"
        if has_mr == {False}:
            return "rtt_sr"
        raise ValueError("mixed records: some have rtt_mr and some do not")
    if feature == "rtt_mr" and False in has_mr:
        raise ValueError("feature rtt_mr requested but some records lack it")
    if feature not in ("rtt_mr", "rtt_sr"):
        raise ValueError(f"unknown feature {feature!r}")
    return feature


def feature_values(records: list[NotificationRtts], feature: str = "auto") -> list[float]:
    feature = resolve_feature(records, feature)
    return [getattr(r, feature) for r in records]


def summarize(groups: dict[str, list[float]]) -> list[DistributionSummary]:
    """One summary per label, labels sorted."""
    return [summarize_values(label, groups[label]) for label in sorted(groups)]


@dataclass
class DistanceRow:
    server: ServerRecord
    label: str
    dist_sm_km: float
    dist_mr_km: float
    summary: DistributionSummary


def distance_timing_table(groups: dict[str, list[float]], servers: list[ServerRecord],
                          sender_location: GeoPoint,
                          receiver_locations: dict[str, GeoPoint]) -> list[DistanceRow]:
    """Join per-class timing summaries with great-circle distances.

    One row per (server, class); fails loudly when a class has no location.
    """
    rows = []
    for label in sorted(groups):
        if label not in receiver_locations:
            raise ValueError(f"no location known for receiver class {label!r}")
    for server in servers:
        dist_sm = great_circle_distance(sender_location, server.location)
        for label in sorted(groups):
            dist_mr = great_circle_distance(server.location, receiver_locations[label])
            rows.append(DistanceRow(server=server, label=label,
                                    dist_sm_km=dist_sm, dist_mr_km=dist_mr,
                                    summary=summarize_values(label, groups[label])))
    return rows


def hour_of_day_breakdown(entries: list[tuple[float, float, str]]
                          ) -> dict[str, list[DistributionSummary]]:
    """Bucket (absolute unix timestamp, value, label) entries by local hour.

    Every label gets all 24 buckets; empty ones carry count 0 and no stats.
    """
    buckets: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for ts, value, label in entries:
        hour = int(ts // 3600.0) % 24
        buckets[label][hour].append(value)
    out = {}
    for label in sorted(buckets):
        out[label] = [
            summarize_values(label, buckets[label][h]) if buckets[label][h]
            else DistributionSummary(label=label, count=0)
            for h in range(24)
        ]
    return out


# ---------------------------------------------------------------------------
# CSV writers

_STAT_FIELDS = ["count", "min", "q1", "median", "q3", "max", "mean", "std"]


def _stat_cells(s: DistributionSummary) -> list:
    return [s.count] + ["" if getattr(s, f) is None else repr(getattr(s, f))
                        for f in _STAT_FIELDS[1:]]


def write_summary_csv(path, summaries: list[DistributionSummary]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + _STAT_FIELDS)
        for s in summaries:
            w.writerow([s.label] + _stat_cells(s))


def write_hourly_csv(path, breakdown: dict[str, list[DistributionSummary]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "hour"] + _STAT_FIELDS)
        for label in sorted(breakdown):
            for hour, s in enumerate(breakdown[label]):
                w.writerow([label, hour] + _stat_cells(s))


def write_distance_csv(path, rows: list[DistanceRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["messenger", "address", "label", "dist_sm_km", "dist_mr_km"] + _STAT_FIELDS)
        for r in rows:
            w.writerow([r.server.messenger, r.server.address, r.label,
                        repr(r.dist_sm_km), repr(r.dist_mr_km)] + _stat_cells(r.summary))
