"""Command-line interface: synth, encode, run, bench, times.

Exit codes: 0 success, 2 usage error, 1 runtime error. All file outputs
are written atomically (temp file + rename) so error paths never leave
partial files behind. The seed falls back to the HAGIL_SEED environment
variable when --seed is not given.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import SynthConfig, load_dataset, save_dataset, synth_gestures
from .features import ENCODINGS, encode_batch
from .harness import (
    Scenario,
    _atomic_write,
    aggregate,
    emit_metrics,
    run_all,
    stage_timings,
    training_time_comparison,
)
from .net import MlpModel
from .strategies import STRATEGIES


def _seed_default():
    env = os.environ.get("HAGIL_SEED")
    return int(env) if env else 0


def _check_overwrite(paths, force):
    existing = [p for p in paths if os.path.exists(p)]
    if existing and not force:
        raise FileExistsError(
            f"refusing to overwrite {existing[0]} (use --force)"
        )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gestil",
        description="Incremental hand-gesture learning from 21-point landmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic landmark JSONL file")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--samples-per-class", type=int, default=30)
    p.add_argument("--jitter-std", type=float, default=0.02)
    p.add_argument("--subjects", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("encode", help="convert landmark files to a feature CSV")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--encoding", choices=sorted(ENCODINGS), default="combined")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("run", help="execute an incremental-learning scenario")
    _add_scenario_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true")
    p.add_argument("--parallel", type=int, default=1)

    p = sub.add_parser("bench", help="strategy x m x epochs comparison grid")
    _add_scenario_flags(p, grid=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true")
    p.add_argument("--parallel", type=int, default=1)

    p = sub.add_parser("times", help="per-stage latency and training-time report")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--skip-training", action="store_true",
                   help="only measure encode/inference latency")
    p.add_argument("--out", help="optional JSON output file")
    p.add_argument("--force", action="store_true")
    return parser


def _add_scenario_flags(p, grid=False):
    p.add_argument("--scenario", help="scenario JSON file (flags override it)")
    p.add_argument("--data", help="landmark JSONL path")
    p.add_argument("--synth-classes", type=int)
    p.add_argument("--synth-samples", type=int)
    p.add_argument("--synth-jitter", type=float)
    p.add_argument("--synth-subjects", type=int)
    p.add_argument("--encoding", choices=sorted(ENCODINGS))
    p.add_argument("--n-init", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-nem", action="store_true",
                   help="disable the nearest-mean classifier (icarl)")
    p.add_argument("--no-kdl", action="store_true",
                   help="disable the distillation loss (icarl)")
    if grid:
        p.add_argument("--strategies", default="icarl,il2m,lwf,joint",
                       help="comma-separated strategy list")
        p.add_argument("--m-values", default="5",
                       help="comma-separated exemplar counts")
        p.add_argument("--epoch-values", default="15",
                       help="comma-separated incremental epoch counts")
    else:
        p.add_argument("--strategy", choices=STRATEGIES)
        p.add_argument("--m", type=int)
        p.add_argument("--epochs-init", type=int)
        p.add_argument("--epochs-inc", type=int)


def _scenario_from_args(args, **extra):
    overrides = {
        "data": args.data,
        "encoding": args.encoding,
        "n_init": args.n_init,
        "runs": args.runs,
        "seed": args.seed if args.seed is not None else _seed_default(),
    }
    overrides.update(extra)
    if args.no_nem:
        overrides["use_nem"] = False
    if args.no_kdl:
        overrides["use_kdl"] = False
    if args.synth_classes is not None:
        overrides["synth"] = SynthConfig(
            n_classes=args.synth_classes,
            samples_per_class=args.synth_samples or 30,
            jitter_std=args.synth_jitter if args.synth_jitter is not None else 0.02,
            n_subjects=args.synth_subjects or 3,
            seed=overrides["seed"],
        )
    if args.scenario:
        return Scenario.from_json(args.scenario, **overrides)
    return Scenario(**{k: v for k, v in overrides.items() if v is not None})


def cmd_synth(args):
    cfg = SynthConfig(
        n_classes=args.classes,
        samples_per_class=args.samples_per_class,
        jitter_std=args.jitter_std,
        n_subjects=args.subjects,
        seed=args.seed if args.seed is not None else _seed_default(),
    )
    _check_overwrite([args.out], args.force)
    save_dataset(synth_gestures(cfg), args.out)
    print(f"wrote {cfg.n_classes * cfg.samples_per_class} records to {args.out}")
    return 0


def cmd_encode(args):
    _check_overwrite([args.out], args.force)
    lines = None
    for path in args.data:
        ds = load_dataset(path)
        feats = encode_batch(ds.frames, args.encoding)
        if lines is None:
            header = ["label", "subject"] + [f"v{i}" for i in range(feats.shape[1])]
            lines = [",".join(header)]
        for frame, row in zip(ds.frames, feats):
            lines.append(
                ",".join([frame.label, frame.subject]
                         + [format(v, ".10g") for v in row])
            )
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(lines) - 1} feature rows to {args.out}")
    return 0


def cmd_run(args):
    extra = {
        "strategy": args.strategy,
        "m": args.m,
        "epochs_init": args.epochs_init,
        "epochs_inc": args.epochs_inc,
    }
    scenario = _scenario_from_args(args, **{k: v for k, v in extra.items()
                                            if v is not None})
    _check_overwrite(
        [os.path.join(args.out, f) for f in ("runs.csv", "summary.csv",
                                             "summary.json")],
        args.force,
    )
    results = run_all(scenario, parallel=args.parallel)
    summary = aggregate(results)
    paths = emit_metrics(results, summary, args.out)
    print(f"final accuracy: {summary.final_mean:.4f} +- {summary.final_std:.4f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_bench(args):
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    m_values = [int(v) for v in args.m_values.split(",")]
    epoch_values = [int(v) for v in args.epoch_values.split(",")]
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    for strategy in strategies:
        for m in m_values:
            for epochs in epoch_values:
                scenario = _scenario_from_args(
                    args, strategy=strategy, m=m, epochs_inc=epochs
                )
                cell = os.path.join(args.out, f"{strategy}_m{m}_e{epochs}")
                _check_overwrite(
                    [os.path.join(cell, "runs.csv")], args.force
                )
                results = run_all(scenario, parallel=args.parallel)
                summary = aggregate(results)
                emit_metrics(results, summary, cell)
                print(
                    f"{strategy:8s} m={m:<3d} epochs={epochs:<3d} "
                    f"final {summary.final_mean:.4f} +- {summary.final_std:.4f}"
                )
    return 0


def cmd_times(args):
    seed = args.seed if args.seed is not None else _seed_default()
    n = max(args.samples, 1)
    per_class = max(1, (n + 9) // 10)
    ds = synth_gestures(
        SynthConfig(n_classes=10, samples_per_class=per_class, seed=seed)
    )
    frames = ds.frames[:n]
    model = MlpModel(670, n_classes=10, seed=seed)
    report = {"stages": stage_timings(frames, model, "combined")}
    if not args.skip_training:
        report["training"] = training_time_comparison(seed=seed)
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        _check_overwrite([args.out], args.force)
        _atomic_write(args.out, text + "\n")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "encode": cmd_encode,
    "run": cmd_run,
    "bench": cmd_bench,
    "times": cmd_times,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, FileExistsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
