"""Seeded incremental-learning scenarios, metrics, aggregation and timing.

A scenario fixes the data source, the strategy and its knobs, and a base
seed; run k derives its own seed as base + k, shuffles the class arrival
order with it, and is therefore individually reproducible.
"""
from __future__ import annotations

import dataclasses
import json
import os
import statistics
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import (
    GestureDataset,
    SubjectSplit,
    SynthConfig,
    default_split,
    load_dataset,
    split_by_subject,
    synth_gestures,
)
from .features import encode, encode_batch
from .net import TrainConfig
from .strategies import Learner


@dataclass
class Scenario:
    """Everything needed to reproduce one benchmark configuration."""

    data: str | None = None              # landmark JSONL path
    synth: SynthConfig | None = None     # used when no data path is given
    split: dict | None = None            # subject -> train/val/test
    encoding: str = "combined"
    strategy: str = "icarl"
    use_nem: bool = True
    use_kdl: bool = True
    n_init: int = 2
    classes_per_task: int = 1
    epochs_init: int = 50
    epochs_inc: int = 15
    m: int = 5
    selection: str = "herding"
    hidden: tuple = (256, 128)
    dropout_p: float = 0.35
    batch_size: int = 32
    runs: int = 10
    seed: int = 0
    measure_time: bool = True

    def __post_init__(self):
        if self.n_init < 2:
            raise ValueError("n_init must be >= 2")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.data is None and self.synth is None:
            raise ValueError("scenario needs a data path or a synth config")
        if isinstance(self.synth, dict):
            self.synth = SynthConfig(**self.synth)
        self.hidden = tuple(self.hidden)

    @classmethod
    def from_json(cls, path, **overrides):
        """Scenario from a JSON document; keyword overrides win."""
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)


@dataclass
class TaskRecord:
    task: int
    classes_learned: int
    task_acc: float
    per_class_acc: dict
    train_seconds: float


@dataclass
class RunResult:
    run: int
    seed: int
    class_order: list
    tasks: list
    final_avg_acc: float


@dataclass
class Summary:
    """Across-run mean +- sample standard deviation, per task and final."""

    runs: int
    tasks: list  # dicts: task, classes_learned, mean_acc, std_acc
    final_mean: float
    final_std: float

    def to_dict(self):
        return {
            "runs": self.runs,
            "tasks": self.tasks,
            "final_mean": self.final_mean,
            "final_std": self.final_std,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["runs"], d["tasks"], d["final_mean"], d["final_std"])


def _load_scenario_dataset(scenario) -> GestureDataset:
    if scenario.data is not None:
        return load_dataset(scenario.data)
    return synth_gestures(scenario.synth)


def run_scenario(scenario: Scenario, run_index: int) -> RunResult:
    """Execute one seeded run: initial task, then one class per increment,
    evaluating on the seen-class test pool after every task."""
    dataset = _load_scenario_dataset(scenario)
    names = dataset.class_names()
    if len(names) < scenario.n_init + 1:
        raise ValueError(
            f"need at least {scenario.n_init + 1} classes, got {len(names)}"
        )
    split = (
        SubjectSplit(scenario.split) if scenario.split else default_split(dataset)
    )
    train_ds, _, test_ds = split_by_subject(dataset, split)

    run_seed = scenario.seed + run_index
    order_rng = np.random.default_rng(run_seed)
    order = [names[i] for i in order_rng.permutation(len(names))]

    train_feats = {}
    test_feats = {}
    for name in names:
        frames = train_ds.frames_of(name)
        if not frames:
            raise ValueError(f"class {name!r} has no training frames")
        train_feats[name] = encode_batch(frames, scenario.encoding)
        test_feats[name] = encode_batch(
            test_ds.frames_of(name), scenario.encoding
        )

    learner = Learner(
        scenario.strategy,
        encoding=scenario.encoding,
        hidden=scenario.hidden,
        dropout_p=scenario.dropout_p,
        m=scenario.m,
        selection=scenario.selection,
        init_config=TrainConfig(
            epochs=scenario.epochs_init, batch_size=scenario.batch_size
        ),
        inc_config=TrainConfig(
            epochs=scenario.epochs_inc, batch_size=scenario.batch_size
        ),
        use_nem=scenario.use_nem,
        use_kdl=scenario.use_kdl,
        seed=run_seed,
    )

    tasks = []

    def clock(fn):
        if scenario.measure_time:
            t0 = time.perf_counter()
            fn()
            return time.perf_counter() - t0
        fn()
        return 0.0

    init_names = order[: scenario.n_init]
    secs = clock(
        lambda: learner.learn_initial([(n, train_feats[n]) for n in init_names])
    )
    tasks.append(_evaluate(learner, test_feats, task=0, train_seconds=secs))

    rest = order[scenario.n_init :]
    step = scenario.classes_per_task
    for t, lo in enumerate(range(0, len(rest), step), start=1):
        group = rest[lo : lo + step]

        def increments(group=group):
            for n in group:
                learner.learn_increment(n, train_feats[n])

        secs = clock(increments)
        tasks.append(_evaluate(learner, test_feats, task=t, train_seconds=secs))

    final = float(np.mean([t.task_acc for t in tasks]))
    return RunResult(run_index, run_seed, order, tasks, final)


def _evaluate(learner, test_feats, task, train_seconds):
    """Pooled (micro) accuracy over the seen classes' test samples, plus a
    per-class table (None and a warning when a class has no test data)."""
    Xs, ys = [], []
    per_class = {}
    for cid, name in enumerate(learner.seen):
        feats = test_feats[name]
        if len(feats) == 0:
            warnings.warn(f"class {name!r} has no test samples; skipped")
            per_class[name] = None
            continue
        Xs.append(feats)
        ys.append(np.full(len(feats), cid, dtype=np.int64))
    if not Xs:
        return TaskRecord(task, len(learner.seen), 0.0, per_class, train_seconds)
    X = np.concatenate(Xs)
    y = np.concatenate(ys)
    preds, _ = learner.classify_batch(X)
    acc = float((preds == y).mean())
    for cid, name in enumerate(learner.seen):
        if per_class.get(name, "") is None:
            continue
        mask = y == cid
        per_class[name] = float((preds[mask] == y[mask]).mean())
    return TaskRecord(task, len(learner.seen), acc, per_class, train_seconds)


def run_all(scenario: Scenario, parallel: int = 1):
    """All runs of a scenario, sorted by run index."""
    indices = list(range(scenario.runs))
    if parallel > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(run_scenario, [scenario] * len(indices), indices))
    else:
        results = [run_scenario(scenario, i) for i in indices]
    return sorted(results, key=lambda r: r.run)


def aggregate(results) -> Summary:
    """Per-task mean and sample std (divisor n-1; 0 for a single run)."""
    if not results:
        raise ValueError("no results to aggregate")
    shape = [(t.task, t.classes_learned) for t in results[0].tasks]
    for r in results[1:]:
        if [(t.task, t.classes_learned) for t in r.tasks] != shape:
            raise ValueError("runs have mismatched task structure")

    def mean_std(values):
        if len(values) == 1:
            return float(values[0]), 0.0
        return float(statistics.mean(values)), float(statistics.stdev(values))

    tasks = []
    for k, (task, classes_learned) in enumerate(shape):
        m, s = mean_std([r.tasks[k].task_acc for r in results])
        tasks.append(
            {"task": task, "classes_learned": classes_learned,
             "mean_acc": m, "std_acc": s}
        )
    fm, fs = mean_std([r.final_avg_acc for r in results])
    return Summary(len(results), tasks, fm, fs)


def _fmt(x):
    return format(float(x), ".10g")


def _atomic_write(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit_metrics(results, summary, out_dir, formats=("csv", "json")):
    """Write runs.csv, summary.csv and summary.json; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        lines = ["run,task,classes_learned,task_acc,train_seconds"]
        for r in sorted(results, key=lambda r: r.run):
            for t in r.tasks:
                lines.append(
                    f"{r.run},{t.task},{t.classes_learned},"
                    f"{_fmt(t.task_acc)},{_fmt(t.train_seconds)}"
                )
        path = os.path.join(out_dir, "runs.csv")
        _atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)

        lines = ["task,classes_learned,mean_acc,std_acc"]
        for t in summary.tasks:
            lines.append(
                f"{t['task']},{t['classes_learned']},"
                f"{_fmt(t['mean_acc'])},{_fmt(t['std_acc'])}"
            )
        path = os.path.join(out_dir, "summary.csv")
        _atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)
    if "json" in formats:
        path = os.path.join(out_dir, "summary.json")
        _atomic_write(path, json.dumps(summary.to_dict(), indent=2) + "\n")
        written.append(path)
    return written


# -- timing ------------------------------------------------------------------


def stage_timings(frames, model, encoding="combined"):
    """Median and p95 wall-clock seconds per pipeline stage (encode, then
    eval-mode inference), one warm-up sample excluded."""
    frames = list(frames)
    if not frames:
        raise ValueError("empty sample stream")
    model.eval()
    # warm-up pass
    feat = encode(frames[0], encoding)
    model.forward(feat[None, :])

    enc_times, inf_times = [], []
    for f in frames:
        t0 = time.perf_counter()
        feat = encode(f, encoding)
        t1 = time.perf_counter()
        model.forward(feat[None, :])
        t2 = time.perf_counter()
        enc_times.append(t1 - t0)
        inf_times.append(t2 - t1)

    def stats(ts):
        a = np.sort(ts)
        return {
            "median_s": float(np.median(a)),
            "p95_s": float(a[min(len(a) - 1, int(0.95 * len(a)))]),
        }

    return {"samples": len(frames), "encode": stats(enc_times),
            "inference": stats(inf_times)}


def training_time_comparison(n_classes=28, samples_per_class=200, m=5,
                             epochs=15, epochs_init=3, seed=0,
                             encoding="combined"):
    """Wall time to learn one more class: rehearsal (m exemplars per old
    class) vs joint retraining on everything. Both learners are pre-trained
    on n_classes - 1 classes, then the last increment is timed."""
    cfg = SynthConfig(n_classes=n_classes, samples_per_class=samples_per_class,
                      jitter_std=0.02, n_subjects=3, seed=seed)
    dataset = synth_gestures(cfg)
    # no held-out split here: only training cost is measured
    names = dataset.class_names()
    feats = {n: encode_batch(dataset.frames_of(n), encoding) for n in names}

    out = {}
    for strategy in ("icarl", "joint"):
        learner = Learner(
            strategy, m=m, seed=seed,
            init_config=TrainConfig(epochs=epochs_init),
            inc_config=TrainConfig(epochs=epochs),
        )
        learner.learn_initial([(n, feats[n]) for n in names[:-1]])
        t0 = time.perf_counter()
        learner.learn_increment(names[-1], feats[names[-1]])
        out[strategy] = time.perf_counter() - t0
    out["ratio"] = out["icarl"] / out["joint"]
    return out
