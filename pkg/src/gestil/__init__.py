"""Class-incremental learning of static hand gestures from hand landmarks."""

from .data import (
    GestureDataset,
    HandFrame,
    SubjectSplit,
    SynthConfig,
    load_dataset,
    save_dataset,
    split_by_subject,
    synth_gestures,
)
from .features import ENCODINGS, encode, encode_batch, encoding_dim
from .harness import (
    RunResult,
    Scenario,
    Summary,
    aggregate,
    emit_metrics,
    run_all,
    run_scenario,
    stage_timings,
    training_time_comparison,
)
from .net import MlpModel, TrainConfig, grad_check, loss_distill, train_epochs
from .rehearsal import ExemplarMemory, herd_select
from .strategies import Il2mStats, Learner, il2m_rectify

__all__ = [
    "ENCODINGS",
    "ExemplarMemory",
    "GestureDataset",
    "HandFrame",
    "Il2mStats",
    "Learner",
    "MlpModel",
    "RunResult",
    "Scenario",
    "SubjectSplit",
    "Summary",
    "SynthConfig",
    "TrainConfig",
    "aggregate",
    "emit_metrics",
    "encode",
    "encode_batch",
    "encoding_dim",
    "grad_check",
    "herd_select",
    "il2m_rectify",
    "load_dataset",
    "loss_distill",
    "run_all",
    "run_scenario",
    "save_dataset",
    "split_by_subject",
    "stage_timings",
    "synth_gestures",
    "train_epochs",
    "training_time_comparison",
]
