"""Pipeline driver: simulate, extract, dataset, classify, sweep, stats.

Every subcommand takes --config/--seed/--out, writes its artifacts plus a
run manifest, and keeps all randomness derived from the single seed.
Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .classifier import CnnConfig, centroid_cross_validate, cross_validate
from .dataset import (balance_classes, build_sequences, group_records, make_folds,
                      read_dataset_csv, read_folds_csv, write_dataset_csv, write_folds_csv,
                      DEFAULT_ITERATION_GAP_S)
from .defense import sweep as run_sweep, write_sweep_csv
from .geo import GeoPoint, ServerTableError, load_server_table, resolve_location_code
from .netsim import ScenarioError, emit_trace, load_scenario, run_scenario, write_truth_csv
from .stats import (distance_timing_table, feature_values, hour_of_day_breakdown,
                    resolve_feature, summarize_values, write_distance_csv,
                    write_hourly_csv, write_summary_csv)
from .traces import (ProfileError, TraceParseError, extract_trace_file, load_profiles,
                     read_records_csv, write_records_csv)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: top-level JSON object expected")
    return obj


def _require(cfg: dict, args, flag: str, key: str):
    val = getattr(args, flag, None)
    if val is None:
        val = cfg.get(key)
    if val is None:
        raise UsageError(f"missing --{flag.replace('_', '-')} (or config key {key!r})")
    return val


def _load_label_map(path, key: str) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    out = {}
    for rid, val in obj.items():
        if isinstance(val, str):
            out[rid] = val
        elif key in val:
            out[rid] = str(val[key])
        else:
            raise UsageError(f"labels file: receiver {rid!r} has no key {key!r}")
    return out


def _manifest(path, subcommand: str, args, inputs, outputs, started: float) -> None:
    doc = {
        "subcommand": subcommand,
        "config": getattr(args, "config", None),
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "started_unix": started,
        "finished_unix": time.time(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _seed(args, cfg: dict, default: int = 0) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", default))


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    started = time.time()
    if not args.config:
        raise UsageError("simulate needs --config with a scenario JSON")
    scenario = load_scenario(args.config)
    if args.seed is not None:
        scenario.rng_seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = run_scenario(scenario)
    outputs = []
    for rid, run in runs.items():
        trace_path = out / f"{rid}.jsonl"
        emit_trace(run.trace, trace_path)
        outputs.append(trace_path)
    truth_path = out / "truth.csv"
    write_truth_csv(runs, truth_path)
    outputs.append(truth_path)
    labels_path = out / "labels.json"
    with open(labels_path, "w", encoding="utf-8") as fh:
        json.dump({rid: {"receiver": rid,
                         "location": run.receiver.location_label,
                         "network": run.receiver.network_type}
                   for rid, run in runs.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(labels_path)
    _manifest(out / "manifest.json", "simulate", args, [args.config], outputs, started)
    n_events = sum(len(r.trace) for r in runs.values())
    print(f"simulated {len(runs)} receiver trace(s), {n_events} packet events -> {out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    started = time.time()
    cfg = _load_config(args)
    traces_dir = Path(_require(cfg, args, "traces", "traces_dir"))
    profile_name = _require(cfg, args, "profile", "profile")
    profiles = load_profiles(cfg.get("profiles_file"))
    if profile_name not in profiles:
        raise UsageError(f"unknown profile {profile_name!r}; known: {', '.join(sorted(profiles))}")
    profile = profiles[profile_name]
    if not traces_dir.is_dir():
        raise UsageError(f"traces directory not found: {traces_dir}")
    files = sorted(traces_dir.glob("*.jsonl"))
    if not files:
        print(f"warning: no .jsonl traces in {traces_dir}", file=sys.stderr)
    rows = []
    for f in files:
        res = extract_trace_file(f, profile)
        rows.extend((f.stem, rec) for rec in res.records)
        if res.orphans or res.ambiguous_pairs:
            print(f"{f.stem}: {res.orphan_server_notes} orphaned server note(s), "
                  f"{res.orphan_delivery_notes} orphaned delivery note(s), "
                  f"{res.ambiguous_pairs} ambiguous pair(s)", file=sys.stderr)
    out = Path(args.out)
    write_records_csv(out, rows)
    _manifest(out.with_suffix(out.suffix + ".manifest.json"), "extract", args,
              files, [out], started)
    print(f"extracted {len(rows)} notification RTT record(s) from {len(files)} trace(s) -> {out}")
    return EXIT_OK


def _grouped_records(cfg: dict, args):
    records_path = Path(_require(cfg, args, "records", "records"))
    if not records_path.exists():
        raise UsageError(f"records file not found: {records_path}")
    rows = read_records_csv(records_path)
    gap = float(getattr(args, "gap", None) or cfg.get("iteration_gap", DEFAULT_ITERATION_GAP_S))
    groups = group_records(rows, iteration_gap=gap)
    label_key = getattr(args, "label_key", None) or cfg.get("label_key", "receiver")
    labels_path = getattr(args, "labels", None) or cfg.get("labels")
    label_map = _load_label_map(labels_path, label_key) if labels_path else None
    return records_path, rows, groups, label_map


def cmd_dataset(args) -> int:
    started = time.time()
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    records_path, _, groups, label_map = _grouped_records(cfg, args)
    n = int(args.n if args.n is not None else cfg.get("n", 5))
    feature = args.feature or cfg.get("feature", "auto")
    samples, skipped = build_sequences(groups, n, feature, label_map)
    if skipped:
        print(f"skipped {skipped} iteration(s) with fewer than {n} matched messages",
              file=sys.stderr)
    if not samples:
        raise UsageError("no usable timing sequences in the input records")
    balanced = balance_classes(samples, seed)
    folded = make_folds(balanced, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset_path = out / "dataset.csv"
    folds_path = out / "folds.csv"
    write_dataset_csv(dataset_path, balanced)
    write_folds_csv(folds_path, folded)
    _manifest(out / "manifest.json", "dataset", args, [records_path],
              [dataset_path, folds_path], started)
    print(f"built {len(balanced)} balanced samples "
          f"({len(set(s.label for s in balanced))} classes, n={n}) -> {out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    started = time.time()
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    dataset_path = Path(_require(cfg, args, "dataset", "dataset"))
    if not dataset_path.exists():
        raise UsageError(f"dataset file not found: {dataset_path}")
    samples = read_dataset_csv(dataset_path)
    if not samples:
        raise UsageError("dataset is empty")
    folds_path = getattr(args, "folds", None) or cfg.get("folds")
    if folds_path:
        folded = read_folds_csv(folds_path, samples)
    else:
        folded = make_folds(balance_classes(samples, seed), seed)
    cnn_cfg = CnnConfig.from_json(cfg.get("cnn", {}), seed=seed)
    report = cross_validate(folded, cnn_cfg)
    doc = {
        "seed": seed,
        "cnn_config": asdict(cnn_cfg),
        "report": report.to_dict(),
    }
    if cfg.get("with_baseline", True):
        doc["centroid_baseline"] = centroid_cross_validate(folded).to_dict()
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    inputs = [dataset_path] + ([folds_path] if folds_path else [])
    _manifest(out.with_suffix(out.suffix + ".manifest.json"), "classify", args,
              inputs, [out], started)
    print(f"cross-validated accuracy {report.overall_accuracy:.3f} "
          f"over {report.n_samples} samples -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    started = time.time()
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    records_path, _, groups, label_map = _grouped_records(cfg, args)
    n = int(args.n if args.n is not None else cfg.get("n", 5))
    feature = args.feature or cfg.get("feature", "auto")
    d_min = int(cfg.get("d_min", 0))
    d_max = int(args.d_max if args.d_max is not None else cfg.get("d_max", 20))
    if d_min < 0 or d_max < d_min:
        raise UsageError("delay range must satisfy 0 <= d_min <= d_max")
    cnn_cfg = CnnConfig.from_json(cfg.get("cnn", {}), seed=seed)
    result = run_sweep(groups, n, feature, label_map, cnn_cfg, seed,
                       d_range=range(d_min, d_max + 1))
    out = Path(args.out)
    write_sweep_csv(out, result)
    _manifest(out.with_suffix(out.suffix + ".manifest.json"), "sweep", args,
              [records_path], [out], started)
    for d, acc in result.points:
        print(f"max_delay={d:2d}s accuracy={acc:.3f}")
    print(f"chance level {result.chance_level:.3f} -> {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    started = time.time()
    cfg = _load_config(args)
    records_path = Path(_require(cfg, args, "records", "records"))
    if not records_path.exists():
        raise UsageError(f"records file not found: {records_path}")
    rows = read_records_csv(records_path)
    if not rows:
        raise UsageError(f"no records in {records_path}")
    label_key = getattr(args, "label_key", None) or cfg.get("label_key", "receiver")
    labels_path = getattr(args, "labels", None) or cfg.get("labels")
    label_map = _load_label_map(labels_path, label_key) if labels_path else {}
    feature = args.feature or cfg.get("feature", "auto")
    resolve_feature([rec for _, rec in rows], feature)

    by_label: dict[str, list] = {}
    for trace_id, rec in rows:
        by_label.setdefault(label_map.get(trace_id, trace_id), []).append(rec)

    report_kind = args.report or cfg.get("report", "summary")
    out = Path(args.out)
    if report_kind == "summary":
        summaries = [summarize_values(label, feature_values(recs, feature))
                     for label, recs in sorted(by_label.items())]
        write_summary_csv(out, summaries)
    elif report_kind == "hours":
        epoch = float(cfg.get("epoch", 0.0))
        entries = []
        for label, recs in by_label.items():
            vals = feature_values(recs, feature)
            entries.extend((epoch + rec.message_t, v, label) for rec, v in zip(recs, vals))
        write_hourly_csv(out, hour_of_day_breakdown(entries))
    elif report_kind == "distance":
        servers_path = cfg.get("servers")
        if not servers_path:
            raise UsageError("distance report needs config key 'servers' (server table CSV)")
        servers = load_server_table(servers_path)
        try:
            sender = GeoPoint(*[float(x) for x in cfg["sender"]])
        except KeyError:
            raise UsageError("distance report needs config key 'sender' ([lat, lon])") from None
        locs = {}
        for label, val in cfg.get("receiver_locations", {}).items():
            if isinstance(val, str):
                pt = resolve_location_code(val)
                if pt is None:
                    raise UsageError(f"receiver_locations[{label!r}]: unresolvable code {val!r}")
                locs[label] = pt
            else:
                locs[label] = GeoPoint(float(val[0]), float(val[1]))
        groups = {label: feature_values(recs, feature) for label, recs in by_label.items()}
        write_distance_csv(out, distance_timing_table(groups, servers, sender, locs))
    else:
        raise UsageError(f"unknown stats report {report_kind!r} (summary, hours, distance)")
    _manifest(out.with_suffix(out.suffix + ".manifest.json"), "stats", args,
              [records_path], [out], started)
    print(f"wrote {report_kind} statistics for {len(by_label)} class(es) -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="notilab",
        description="Delivery-notification timing lab: simulate traffic, extract "
                    "RTTs, classify receivers, evaluate the random-delay defense.")
    parser.add_argument("--version", action="version", version=f"notilab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config for this subcommand")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", required=True, help="output file or directory")

    p = sub.add_parser("simulate", help="run a delivery pipeline scenario")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="extract notification RTTs from trace JSONL files")
    common(p)
    p.add_argument("--traces", help="directory with *.jsonl packet traces")
    p.add_argument("--profile", help="messenger profile name")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("dataset", help="build a balanced, folded timing-sequence dataset")
    common(p)
    p.add_argument("--records", help="records CSV from extract")
    p.add_argument("--labels", help="labels JSON (receiver id -> label or label dict)")
    p.add_argument("--label-key", dest="label_key", help="receiver | location | network")
    p.add_argument("--n", type=int, default=None, help="sequence length 1..5")
    p.add_argument("--feature", help="rtt_mr | rtt_sr | auto")
    p.add_argument("--gap", type=float, default=None, help="iteration split gap in seconds")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("classify", help="train the CNN with 5-fold cross-validation")
    common(p)
    p.add_argument("--dataset", help="dataset CSV")
    p.add_argument("--folds", help="fold assignment CSV")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sweep", help="random-delay countermeasure sweep")
    common(p)
    p.add_argument("--records", help="records CSV from extract")
    p.add_argument("--labels", help="labels JSON")
    p.add_argument("--label-key", dest="label_key")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--feature")
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--d-max", dest="d_max", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="descriptive statistics over extracted records")
    common(p)
    p.add_argument("--records", help="records CSV from extract")
    p.add_argument("--labels", help="labels JSON")
    p.add_argument("--label-key", dest="label_key")
    p.add_argument("--feature")
    p.add_argument("--report", choices=["summary", "hours", "distance"], default=None)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScenarioError, ProfileError, TraceParseError,
            ServerTableError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
