#!/usr/bin/env python3
"""Receiver-location separability experiment.

Simulates three receiver locations with distinct latency means, extracts
notification RTTs from the emitted traces, and reports cross-validated
accuracy of the CNN and the centroid baseline for sequence lengths 1..5,
plus an accuracy-vs-sample-size convergence curve.
"""

import argparse
import csv
import json
from pathlib import Path

from notilab.classifier import CnnConfig, centroid_cross_validate, convergence_curve, cross_validate
from notilab.dataset import balance_classes, build_sequences, group_records, make_folds
from notilab.netsim import LatencyProfile, ReceiverSpec, ScenarioConfig, run_scenario
from notilab.traces import load_profiles, match_sequences


def build_scenario(means, iterations, seed, messenger):
    receivers = [
        ReceiverSpec(id=f"r{i}", location_label=f"loc{i}",
                     network_type="wifi" if i % 2 == 0 else "cellular",
                     uplink=LatencyProfile.normal(m, 0.02),
                     processing_delay=LatencyProfile.normal(0.002, 0.0005))
        for i, m in enumerate(means)
    ]
    return ScenarioConfig(
        messenger=load_profiles()[messenger],
        sender_to_server=LatencyProfile.lognormal(-3.2, 0.25),
        server_processing=LatencyProfile.shifted_exponential(0.002, 500.0),
        receivers=receivers, iterations=iterations, rng_seed=seed)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--means", type=float, nargs="+", default=[0.03, 0.13, 0.23],
                    help="receiver uplink means in seconds, one per location")
    ap.add_argument("--iterations", type=int, default=150)
    ap.add_argument("--messenger", default="signal")
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="out/separability")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    print(f"simulating {len(args.means)} locations x {args.iterations} iterations ...")
    cfg = build_scenario(args.means, args.iterations, args.seed, args.messenger)
    runs = run_scenario(cfg)
    rows = []
    for rid, run in runs.items():
        rows.extend((rid, rec) for rec in match_sequences(run.trace, cfg.messenger).records)
    labels = {rid: run.receiver.location_label for rid, run in runs.items()}
    groups = group_records(rows)

    cnn_cfg = CnnConfig(epochs=args.epochs, seed=args.seed)
    by_length = []
    print(f"{'n':>3} {'cnn':>8} {'centroid':>9}")
    for n in range(1, 6):
        samples, _ = build_sequences(groups, n=n, labels=labels)
        folded = make_folds(balance_classes(samples, args.seed), seed=args.seed)
        cnn_acc = cross_validate(folded, cnn_cfg).overall_accuracy
        cen_acc = centroid_cross_validate(folded).overall_accuracy
        by_length.append({"n": n, "cnn": cnn_acc, "centroid": cen_acc})
        print(f"{n:>3} {cnn_acc:>8.3f} {cen_acc:>9.3f}")

    samples, _ = build_sequences(groups, n=5, labels=labels)
    sizes = range(10, min(args.iterations, 300) + 1, 10)
    curve = convergence_curve(samples, cnn_cfg, sizes=sizes, seed=args.seed)
    print("convergence (samples/class -> accuracy):")
    for size, acc in curve:
        print(f"  {size:>4} {acc:.3f}")

    with open(out / "accuracy_by_length.json", "w") as fh:
        json.dump(by_length, fh, indent=2)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["samples_per_class", "overall_accuracy"])
        w.writerows(curve)
    print(f"results written to {out}")


if __name__ == "__main__":
    main()
