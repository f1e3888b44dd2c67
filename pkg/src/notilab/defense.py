"""Random-delay countermeasure evaluation.

Delays are injected into already-extracted RTT records (the confirmation
leg only), then the whole classification pipeline is re-run per maximum
delay to trace how accuracy decays toward random guessing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import seeds
from .classifier import CnnConfig, EvalReport, cross_validate
from .dataset import RecordGroup, balance_classes, build_sequences, make_folds
from .traces import NotificationRtts, shift_delivery


@dataclass
class DelaySweepResult:
    points: list[tuple[int, float]]  # (max delay in whole seconds, overall accuracy)
    chance_level: float


def perturb(records: list[NotificationRtts], d_max: float, seed: int) -> list[NotificationRtts]:
    """Add an independent Uniform(0, d_max) delay to each delivery confirmation.

    Only rtt_sr moves (rtt_mr is recomputed from it); the server leg is
    untouched. d_max = 0 reproduces the input exactly.
    """
    if d_max < 0:
        raise ValueError("d_max must be >= 0")
    rng = seeds.sub_rng(seed, seeds.PERTURB)
    return _perturb_with_rng(records, d_max, rng)


def _perturb_with_rng(records, d_max, rng) -> list[NotificationRtts]:
    return [shift_delivery(r, float(rng.uniform(0.0, d_max))) for r in records]


def evaluate_records(groups: list[RecordGroup], n: int, feature: str,
                     labels: dict[str, str] | None, cfg: CnnConfig, seed: int) -> EvalReport:
    """records -> sequences -> balance -> folds -> cross-validated report."""
    samples, _ = build_sequences(groups, n, feature, labels)
    balanced = balance_classes(samples, seed)
    folded = make_folds(balanced, seed)
    return cross_validate(folded, cfg)


def sweep(groups: list[RecordGroup], n: int, feature: str,
          labels: dict[str, str] | None, cfg: CnnConfig, seed: int,
          d_range=range(0, 21)) -> DelaySweepResult:
    """Re-run the classification once per maximum delay value.

    The perturbation RNG is derived from (seed, d) so each point is
    reproducible on its own; everything downstream reuses the same seed,
    which makes the d=0 point identical to the unperturbed evaluation.
    """
    points = []
    n_classes = None
    for d in d_range:
        rng = seeds.sub_rng(seed, seeds.PERTURB, int(d))
        pert = [RecordGroup(g.receiver, g.iteration, _perturb_with_rng(g.records, float(d), rng))
                for g in groups]
        report = evaluate_records(pert, n, feature, labels, cfg, seed)
        n_classes = len(report.classes)
        points.append((int(d), report.overall_accuracy))
    return DelaySweepResult(points=points, chance_level=1.0 / n_classes)


def trend_slope(points: list[tuple[int, float]]) -> float:
    """Least-squares slope of accuracy over max delay."""
    xs = np.array([p[0] for p in points], dtype=float)
    ys = np.array([p[1] for p in points], dtype=float)
    return float(np.polyfit(xs, ys, 1)[0])


def write_sweep_csv(path, result: DelaySweepResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["max_delay_s", "overall_accuracy", "chance_level"])
        for d, acc in result.points:
            w.writerow([d, repr(acc), repr(result.chance_level)])
