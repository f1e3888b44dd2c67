"""Labeled timing-sequence datasets: grouping, balancing, folding, scaling."""

from __future__ import annotations

import csv
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .traces import NotificationRtts

N_FOLDS = 5

# within one iteration consecutive sends are at most long_interval apart;
# the simulator's inter-iteration tail is short+long, so 25 s splits cleanly
DEFAULT_ITERATION_GAP_S = 25.0


@dataclass(frozen=True)
class TimingSequenceSample:
    values: tuple[float, ...]
    label: str
    source: tuple[str, int]  # (receiver id, iteration index)


@dataclass
class RecordGroup:
    receiver: str
    iteration: int
    records: list[NotificationRtts]


@dataclass
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # positions with zero training variance, left unscaled


@dataclass
class FoldedDataset:
    samples: list[TimingSequenceSample]
    folds: np.ndarray
    n_folds: int = N_FOLDS
    feature_stats: dict[int, FeatureStats] = field(default_factory=dict)

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.folds == fold)
        train = np.flatnonzero(self.folds != fold)
        return train, test

    def matrix(self) -> np.ndarray:
        return np.array([s.values for s in self.samples], dtype=float)

    def labels(self) -> list[str]:
        return [s.label for s in self.samples]


def group_records(rows: list[tuple[str, NotificationRtts]],
                  iteration_gap: float = DEFAULT_ITERATION_GAP_S) -> list[RecordGroup]:
    """Split each trace's records into measurement iterations.

    A gap between consecutive send times larger than `iteration_gap`
    starts a new iteration; within an iteration the schedule never pauses
    longer than the long interval.
    """
    by_trace: dict[str, list[NotificationRtts]] = defaultdict(list)
    for trace_id, rec in rows:
        by_trace[trace_id].append(rec)
    groups = []
    for trace_id in sorted(by_trace):
        recs = sorted(by_trace[trace_id], key=lambda r: r.message_t)
        iteration = 0
        current: list[NotificationRtts] = []
        prev_t = None
        for rec in recs:
            if prev_t is not None and rec.message_t - prev_t > iteration_gap:
                groups.append(RecordGroup(trace_id, iteration, current))
                iteration += 1
                current = []
            current.append(rec)
            prev_t = rec.message_t
        if current:
            groups.append(RecordGroup(trace_id, iteration, current))
    return groups


def _pick_feature(groups: list[RecordGroup], feature: str) -> str:
    has_mr = {rec.rtt_mr is not None for g in groups for rec in g.records}
    if feature == "auto":
        if has_mr == {True}:
            return "rtt_mr"
        if has_mr == {False}:
            return "rtt_sr"
        raise ValueError("mixed records: some have rtt_mr and some do not; "
                         "extract single- and dual-confirmation traffic separately")
    if feature == "rtt_mr" and False in has_mr:
        raise ValueError("feature rtt_mr requested but some records lack it")
    if feature not in ("rtt_mr", "rtt_sr"):
        raise ValueError(f"unknown feature {feature!r}")
    return feature


def build_sequences(groups: list[RecordGroup], n: int, feature: str = "auto",
                    labels: dict[str, str] | None = None
                    ) -> tuple[list[TimingSequenceSample], int]:
    """One sample per iteration: the first n per-message feature values.

    Iterations with fewer than n matched messages are skipped; the skip
    count is returned alongside the samples. Labels default to receiver ids.
    """
    if not 1 <= n <= 5:
        raise ValueError(f"sequence length n must be in 1..5, got {n}")
    if not groups:
        return [], 0
    feature = _pick_feature(groups, feature)
    samples = []
    skipped = 0
    for g in groups:
        if len(g.records) < n:
            skipped += 1
            continue
        vals = tuple(getattr(rec, feature) for rec in g.records[:n])
        label = labels[g.receiver] if labels is not None else g.receiver
        samples.append(TimingSequenceSample(values=vals, label=label,
                                            source=(g.receiver, g.iteration)))
    return samples, skipped


def balance_classes(samples: list[TimingSequenceSample], seed: int) -> list[TimingSequenceSample]:
    """Downsample every class to the size of the smallest one, without replacement."""
    if not samples:
        raise ValueError("cannot balance an empty sample set")
    counts = Counter(s.label for s in samples)
    k = min(counts.values())
    rng = seeds.sub_rng(seed, seeds.BALANCE)
    by_label: dict[str, list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        by_label[s.label].append(i)
    kept: list[int] = []
    for label in sorted(by_label):
        idx = by_label[label]
        chosen = rng.choice(len(idx), size=k, replace=False)
        kept.extend(idx[j] for j in sorted(chosen))
    return [samples[i] for i in kept]


def make_folds(samples: list[TimingSequenceSample], seed: int) -> FoldedDataset:
    """Stratified split into 5 folds; per class, fold sizes differ by at most 1."""
    counts = Counter(s.label for s in samples)
    for label, c in sorted(counts.items()):
        if c < N_FOLDS:
            raise ValueError(f"class {label!r} has only {c} samples, need >= {N_FOLDS}")
    rng = seeds.sub_rng(seed, seeds.FOLDS)
    folds = np.empty(len(samples), dtype=int)
    by_label: dict[str, list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        by_label[s.label].append(i)
    for label in sorted(by_label):
        idx = np.array(by_label[label])
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            folds[i] = pos % N_FOLDS
    return FoldedDataset(samples=list(samples), folds=folds)


def normalize(train: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray, FeatureStats]:
    """Standardize each sequence position using training statistics only."""
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    constant = std == 0.0
    if constant.any():
        warnings.warn(f"{int(constant.sum())} constant feature position(s) left unscaled")
    stats = FeatureStats(mean=mean, std=std, constant=constant)
    return apply_stats(train, stats), apply_stats(test, stats), stats


def apply_stats(x: np.ndarray, stats: FeatureStats) -> np.ndarray:
    out = np.array(x, dtype=float)
    ok = ~stats.constant
    out[..., ok] = (out[..., ok] - stats.mean[ok]) / stats.std[ok]
    return out


def normalize_fold(folded: FoldedDataset, fold: int) -> tuple[np.ndarray, np.ndarray, FeatureStats]:
    train_idx, test_idx = folded.split(fold)
    x = folded.matrix()
    train_z, test_z, stats = normalize(x[train_idx], x[test_idx])
    folded.feature_stats[fold] = stats
    return train_z, test_z, stats


# ---------------------------------------------------------------------------
# dataset CSV (label,source,v1..v5) and fold file (sample_index,fold)

def write_dataset_csv(path, samples: list[TimingSequenceSample]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "source", "v1", "v2", "v3", "v4", "v5"])
        for s in samples:
            vals = [repr(v) for v in s.values] + [""] * (5 - len(s.values))
            w.writerow([s.label, f"{s.source[0]}:{s.source[1]}"] + vals)


def read_dataset_csv(path) -> list[TimingSequenceSample]:
    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                receiver, _, it = row["source"].rpartition(":")
                vals = tuple(float(row[f"v{i}"]) for i in range(1, 6) if row[f"v{i}"] != "")
                samples.append(TimingSequenceSample(values=vals, label=row["label"],
                                                    source=(receiver, int(it))))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad dataset row: {exc}") from None
    return samples


def write_folds_csv(path, folded: FoldedDataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "fold"])
        for i, f in enumerate(folded.folds):
            w.writerow([i, int(f)])


def read_folds_csv(path, samples: list[TimingSequenceSample]) -> FoldedDataset:
    folds = np.empty(len(samples), dtype=int)
    seen = 0
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            idx = int(row["sample_index"])
            if not 0 <= idx < len(samples):
                raise ValueError(f"{path}: fold file covers sample {idx}, "
                                 f"dataset has only {len(samples)}")
            folds[idx] = int(row["fold"])
            seen += 1
    if seen != len(samples):
        raise ValueError(f"{path}: fold file covers {seen} samples, dataset has {len(samples)}")
    return FoldedDataset(samples=list(samples), folds=folds)
