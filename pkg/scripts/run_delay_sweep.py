#!/usr/bin/env python3
"""Random-delay countermeasure sweep.

Simulates separable receiver locations, then re-runs the classification
while the simulated server delays every delivery confirmation by a uniform
random amount, with the maximum delay swept from 0 to 20 seconds. The
resulting curve shows how quickly the side channel degrades to guessing.
"""

import argparse
from pathlib import Path

from run_separability_experiment import build_scenario

from notilab.classifier import CnnConfig
from notilab.dataset import group_records
from notilab.defense import sweep, trend_slope, write_sweep_csv
from notilab.netsim import run_scenario
from notilab.traces import match_sequences


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--means", type=float, nargs="+", default=[0.03, 0.13, 0.23])
    ap.add_argument("--iterations", type=int, default=150)
    ap.add_argument("--messenger", default="signal")
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--d-max", type=int, default=20)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="out/delay_sweep.csv")
    args = ap.parse_args()

    cfg = build_scenario(args.means, args.iterations, args.seed, args.messenger)
    runs = run_scenario(cfg)
    rows = []
    for rid, run in runs.items():
        rows.extend((rid, rec) for rec in match_sequences(run.trace, cfg.messenger).records)
    labels = {rid: run.receiver.location_label for rid, run in runs.items()}

    result = sweep(group_records(rows), 5, "auto", labels,
                   CnnConfig(epochs=args.epochs, seed=args.seed), seed=args.seed,
                   d_range=range(0, args.d_max + 1))

    print(f"{'d_max[s]':>8} {'accuracy':>9}   chance={result.chance_level:.3f}")
    reached = None
    for d, acc in result.points:
        marker = ""
        if reached is None and acc <= result.chance_level + 0.05:
            reached = d
            marker = "  <- within 5 pp of guessing"
        print(f"{d:>8} {acc:>9.3f}{marker}")
    print(f"least-squares slope {trend_slope(result.points):+.4f} per second of max delay")
    if reached is not None:
        print(f"accuracy reaches chance level at a maximum delay of ~{reached} s")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out, result)
    print(f"curve written to {out}")


if __name__ == "__main__":
    main()
