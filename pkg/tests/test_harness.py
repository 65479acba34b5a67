import json
import math

import numpy as np
import pytest

from gestil.data import SynthConfig, synth_gestures
from gestil.harness import (
    RunResult,
    Scenario,
    Summary,
    TaskRecord,
    aggregate,
    emit_metrics,
    run_all,
    run_scenario,
    stage_timings,
)
from gestil.net import MlpModel


def tiny_scenario(**kw):
    kw.setdefault("synth", SynthConfig(4, 9, seed=0))
    kw.setdefault("strategy", "finetune")
    kw.setdefault("encoding", "wristdiff")
    kw.setdefault("hidden", (16, 8))
    kw.setdefault("epochs_init", 3)
    kw.setdefault("epochs_inc", 2)
    kw.setdefault("runs", 2)
    kw.setdefault("measure_time", False)
    return Scenario(**kw)


def fake_result(run, accs):
    tasks = [
        TaskRecord(t, 2 + t, a, {}, 0.0) for t, a in enumerate(accs)
    ]
    return RunResult(run, run, [], tasks, float(np.mean(accs)))


class TestScenario:
    def test_needs_data_source(self):
        with pytest.raises(ValueError, match="data path or a synth"):
            Scenario()

    def test_n_init_floor(self):
        with pytest.raises(ValueError, match="n_init"):
            tiny_scenario(n_init=1)

    def test_from_json_with_overrides(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({
            "synth": {"n_classes": 4, "samples_per_class": 9},
            "strategy": "icarl", "runs": 5,
        }))
        s = Scenario.from_json(p, runs=2, strategy="lwf")
        assert s.runs == 2
        assert s.strategy == "lwf"
        assert s.synth.n_classes == 4


class TestRunScenario:
    def test_task_structure_and_bounds(self):
        r = run_scenario(tiny_scenario(), 0)
        # 4 classes, 2 initial, then one per task
        assert [t.classes_learned for t in r.tasks] == [2, 3, 4]
        assert all(0.0 <= t.task_acc <= 1.0 for t in r.tasks)
        assert r.final_avg_acc == pytest.approx(
            np.mean([t.task_acc for t in r.tasks])
        )

    def test_run_seed_offsets_base(self):
        s = tiny_scenario()
        assert run_scenario(s, 0).seed == s.seed
        assert run_scenario(s, 3).seed == s.seed + 3

    def test_reproducible(self):
        s = tiny_scenario()
        a, b = run_scenario(s, 1), run_scenario(s, 1)
        assert a.class_order == b.class_order
        assert [t.task_acc for t in a.tasks] == [t.task_acc for t in b.tasks]

    def test_runs_differ_in_class_order(self):
        s = tiny_scenario(runs=6)
        orders = {tuple(run_scenario(s, i).class_order) for i in range(6)}
        assert len(orders) > 1

    def test_too_few_classes(self):
        s = tiny_scenario(synth=SynthConfig(3, 9, seed=0), n_init=3)
        with pytest.raises(ValueError, match="at least 4 classes"):
            run_scenario(s, 0)

    def test_measured_time_positive(self):
        r = run_scenario(tiny_scenario(measure_time=True), 0)
        assert all(t.train_seconds > 0 for t in r.tasks)
        r = run_scenario(tiny_scenario(), 0)
        assert all(t.train_seconds == 0.0 for t in r.tasks)


class TestAggregate:
    def test_two_run_mean_and_std(self):
        results = [fake_result(0, [0.90]), fake_result(1, [0.94])]
        s = aggregate(results)
        assert s.tasks[0]["mean_acc"] == pytest.approx(0.92)
        # sample std with divisor n-1: sqrt(2 * 0.02^2 / 1)
        assert s.tasks[0]["std_acc"] == pytest.approx(0.02 * math.sqrt(2))
        assert s.final_mean == pytest.approx(0.92)

    def test_single_run_std_zero(self):
        s = aggregate([fake_result(0, [0.7, 0.8])])
        assert all(t["std_acc"] == 0.0 for t in s.tasks)
        assert s.final_std == 0.0

    def test_mismatched_structure_rejected(self):
        with pytest.raises(ValueError, match="mismatched"):
            aggregate([fake_result(0, [0.9]), fake_result(1, [0.9, 0.8])])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])


class TestEmitMetrics:
    def run_and_emit(self, out_dir):
        s = tiny_scenario()
        results = run_all(s)
        summary = aggregate(results)
        emit_metrics(results, summary, out_dir)
        return results, summary

    def test_row_counts(self, tmp_path):
        results, summary = self.run_and_emit(tmp_path)
        runs_lines = (tmp_path / "runs.csv").read_text().splitlines()
        # 2 runs x 3 tasks plus the header
        assert runs_lines[0] == "run,task,classes_learned,task_acc,train_seconds"
        assert len(runs_lines) == 1 + 2 * 3
        summary_lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert summary_lines[0] == "task,classes_learned,mean_acc,std_acc"
        assert len(summary_lines) == 1 + 3

    def test_summary_json_round_trip(self, tmp_path):
        _, summary = self.run_and_emit(tmp_path)
        doc = json.loads((tmp_path / "summary.json").read_text())
        assert Summary.from_dict(doc).to_dict() == summary.to_dict()

    def test_csv_values_match_results(self, tmp_path):
        results, _ = self.run_and_emit(tmp_path)
        rows = (tmp_path / "runs.csv").read_text().splitlines()[1:]
        for r in results:
            for t in r.tasks:
                expected = (
                    f"{r.run},{t.task},{t.classes_learned},"
                    f"{format(t.task_acc, '.10g')},0"
                )
                assert expected in rows

    def test_byte_identical_across_executions(self, tmp_path):
        self.run_and_emit(tmp_path / "a")
        self.run_and_emit(tmp_path / "b")
        for name in ("runs.csv", "summary.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()


class TestStageTimings:
    def test_report_shape(self):
        ds = synth_gestures(SynthConfig(2, 10, seed=0))
        model = MlpModel(40, hidden=(16,), n_classes=2, seed=0)
        rep = stage_timings(ds.frames, model, "wristdiff")
        assert rep["samples"] == 20
        for stage in ("encode", "inference"):
            assert rep[stage]["median_s"] > 0
            assert rep[stage]["p95_s"] >= rep[stage]["median_s"]

    def test_empty_stream_rejected(self):
        model = MlpModel(40, hidden=(16,), n_classes=2, seed=0)
        with pytest.raises(ValueError):
            stage_timings([], model, "wristdiff")
