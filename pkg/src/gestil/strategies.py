"""Incremental learning strategies behind one learner interface.

joint     - upper baseline, retains all data and keeps training on it.
finetune  - no memory, no distillation (catastrophic forgetting baseline).
lwf       - no memory, temperature-2 softmax distillation on old classes.
icarl     - exemplar rehearsal + sigmoid-BCE distillation + nearest-mean
            classification in embedding space (ablation flags can disable
            the distillation term and/or the nearest-mean classifier).
il2m      - exemplar rehearsal + score rectification from stored per-class
            prediction statistics.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .net import MlpModel, TrainConfig, softmax, train_epochs
from .rehearsal import ExemplarMemory

STRATEGIES = ("joint", "finetune", "lwf", "icarl", "il2m")

_MU_FLOOR = 1e-6  # clamp for rectification denominators


@dataclass
class Il2mStats:
    """Prediction statistics backing IL2M score rectification."""

    mu_init: dict = field(default_factory=dict)   # class -> mean true-class prob at intro
    mu_cur: dict = field(default_factory=dict)    # class -> same, on exemplars, latest task
    conf: dict = field(default_factory=dict)      # task -> mean top-1 prob on new data
    intro_task: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mu_init": {str(k): v for k, v in self.mu_init.items()},
            "mu_cur": {str(k): v for k, v in self.mu_cur.items()},
            "conf": {str(k): v for k, v in self.conf.items()},
            "intro_task": {str(k): v for k, v in self.intro_task.items()},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            mu_init={int(k): float(v) for k, v in d["mu_init"].items()},
            mu_cur={int(k): float(v) for k, v in d["mu_cur"].items()},
            conf={int(k): float(v) for k, v in d["conf"].items()},
            intro_task={int(k): int(v) for k, v in d["intro_task"].items()},
        )


def il2m_rectify(scores, stats, current_task):
    """Rectify a softmax score vector per the IL2M rule.

    Only applies when the raw argmax is a class introduced in the current
    task; old-class scores are then scaled by
    (mu_init/mu_cur) * (conf(t)/conf(intro_task)). No renormalization.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if abs(scores.sum() - 1.0) > 1e-6:
        raise ValueError("scores must sum to 1")
    for c in range(len(scores)):
        if c not in stats.intro_task or c not in stats.mu_init:
            raise ValueError(f"missing statistics for class {c}")
    pred = int(np.argmax(scores))
    if stats.intro_task[pred] != current_task:
        return scores.copy()
    out = scores.copy()
    conf_t = max(stats.conf[current_task], _MU_FLOOR)
    for c in range(len(scores)):
        intro = stats.intro_task[c]
        if intro == current_task:
            continue
        mu_i = max(stats.mu_init[c], _MU_FLOOR)
        mu_c = max(stats.mu_cur.get(c, mu_i), _MU_FLOOR)
        conf_i = max(stats.conf[intro], _MU_FLOOR)
        out[c] *= (mu_i / mu_c) * (conf_t / conf_i)
    return out


class Learner:
    """One persistent model trained across tasks under a chosen strategy."""

    def __init__(self, strategy, encoding="combined", hidden=(256, 128),
                 dropout_p=0.35, m=5, selection="herding",
                 init_config=None, inc_config=None,
                 use_nem=True, use_kdl=True, joint_from_scratch=False,
                 seed=0):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        self.strategy = strategy
        self.encoding = encoding
        self.hidden = tuple(hidden)
        self.dropout_p = dropout_p
        self.seed = int(seed)
        self.use_nem = use_nem
        self.use_kdl = use_kdl
        self.joint_from_scratch = joint_from_scratch
        self.init_config = init_config or TrainConfig(epochs=50)
        self.inc_config = inc_config or TrainConfig(epochs=15)

        self.model: MlpModel | None = None
        self.teacher: MlpModel | None = None
        self.memory = (
            ExemplarMemory(m, selection=selection)
            if strategy in ("icarl", "il2m")
            else None
        )
        self.il2m = Il2mStats() if strategy == "il2m" else None
        self.seen: list[str] = []            # class name -> column index
        self.reports = []
        self._task = -1
        self._joint_data: dict[int, np.ndarray] = {}
        self._rng = np.random.default_rng([self.seed, 0x9E3779B9])

    # -- helpers -----------------------------------------------------------

    @property
    def initialized(self):
        return self.model is not None

    def _task_seed(self, task):
        return int(np.random.SeedSequence([self.seed, task]).generate_state(1)[0])

    def _train(self, X, y, config, task, teacher=None, old_count=0,
               distill_form="sigmoid_bce", distill_weight=None):
        cfg = dataclasses.replace(config, seed=self._task_seed(task))
        if distill_weight is not None:
            cfg = dataclasses.replace(cfg, distill_weight=distill_weight)
        report = train_epochs(
            self.model, X, y, cfg,
            teacher=teacher, old_class_count=old_count, distill_form=distill_form,
        )
        self.reports.append(report)
        return report

    def _mean_true_prob(self, X, class_id):
        probs = softmax(self.model.forward(np.asarray(X, dtype=np.float64)))
        return float(probs[:, class_id].mean())

    def _mean_top_prob(self, X):
        probs = softmax(self.model.forward(np.asarray(X, dtype=np.float64)))
        return float(probs.max(axis=1).mean())

    # -- task API ----------------------------------------------------------

    def learn_initial(self, class_data):
        """Train on the first batch of classes.

        class_data: ordered sequence of (class_name, feature_matrix).
        """
        if self.initialized:
            raise ValueError("learner already initialized")
        class_data = list(class_data)
        if len(class_data) < 2:
            raise ValueError("initial task needs at least 2 classes")
        for name, X in class_data:
            if len(X) == 0:
                raise ValueError(f"class {name!r} has no training data")
        self._task = 0
        self.seen = [name for name, _ in class_data]
        dim = np.asarray(class_data[0][1]).shape[1]
        self.model = MlpModel(
            dim, hidden=self.hidden, n_classes=len(class_data),
            dropout_p=self.dropout_p, seed=self.seed,
        )
        X = np.concatenate([np.asarray(x, dtype=np.float64) for _, x in class_data])
        y = np.concatenate(
            [np.full(len(x), i, dtype=np.int64) for i, (_, x) in enumerate(class_data)]
        )
        self._train(X, y, self.init_config, task=0)

        if self.memory is not None:
            for i, (_, Xc) in enumerate(class_data):
                self.memory.update(i, Xc, self.model, rng=self._rng)
        if self.il2m is not None:
            for i, (_, Xc) in enumerate(class_data):
                self.il2m.mu_init[i] = self._mean_true_prob(Xc, i)
                self.il2m.mu_cur[i] = self.il2m.mu_init[i]
                self.il2m.intro_task[i] = 0
            self.il2m.conf[0] = self._mean_top_prob(X)
        if self.strategy in ("lwf", "icarl"):
            self.teacher = self.model.copy().eval()
        if self.strategy == "joint":
            for i, (_, Xc) in enumerate(class_data):
                self._joint_data[i] = np.asarray(Xc, dtype=np.float64)
        return self

    def learn_increment(self, name, features):
        """Learn one new class; dispatches on the strategy."""
        if not self.initialized:
            raise ValueError("learner not initialized")
        if name in self.seen:
            raise ValueError(f"class {name!r} already learned")
        X_new = np.asarray(features, dtype=np.float64)
        if len(X_new) == 0:
            raise ValueError(f"class {name!r} has no training data")
        self._task += 1
        task = self._task
        old_count = len(self.seen)
        new_id = old_count
        self.seen.append(name)
        self.model.expand_head(1, self._rng)

        if self.strategy == "finetune":
            y = np.full(len(X_new), new_id, dtype=np.int64)
            self._train(X_new, y, self.inc_config, task)

        elif self.strategy == "lwf":
            y = np.full(len(X_new), new_id, dtype=np.int64)
            self._train(X_new, y, self.inc_config, task,
                        teacher=self.teacher, old_count=old_count,
                        distill_form="softmax_t2")
            self.teacher = self.model.copy().eval()

        elif self.strategy == "icarl":
            X, y = self._with_exemplars(X_new, new_id)
            weight = None if self.use_kdl else 0.0
            self._train(X, y, self.inc_config, task,
                        teacher=self.teacher, old_count=old_count,
                        distill_form="sigmoid_bce", distill_weight=weight)
            self.memory.update(new_id, X_new, self.model, rng=self._rng)
            self.teacher = self.model.copy().eval()

        elif self.strategy == "il2m":
            X, y = self._with_exemplars(X_new, new_id)
            self._train(X, y, self.inc_config, task)
            self.memory.update(new_id, X_new, self.model, rng=self._rng)
            for c in range(old_count):
                self.il2m.mu_cur[c] = self._mean_true_prob(
                    self.memory.exemplars(c), c
                )
            self.il2m.mu_init[new_id] = self._mean_true_prob(X_new, new_id)
            self.il2m.mu_cur[new_id] = self.il2m.mu_init[new_id]
            self.il2m.intro_task[new_id] = task
            self.il2m.conf[task] = self._mean_top_prob(X_new)

        elif self.strategy == "joint":
            self._joint_data[new_id] = X_new
            if self.joint_from_scratch:
                self.model = MlpModel(
                    self.model.input_dim, hidden=self.hidden,
                    n_classes=len(self.seen), dropout_p=self.dropout_p,
                    seed=self.seed,
                )
            X = np.concatenate([self._joint_data[c] for c in sorted(self._joint_data)])
            y = np.concatenate(
                [np.full(len(self._joint_data[c]), c, dtype=np.int64)
                 for c in sorted(self._joint_data)]
            )
            self._train(X, y, self.inc_config, task)
        return self

    def _with_exemplars(self, X_new, new_id):
        """New-class data followed by all stored exemplars, class order."""
        X_ex, y_ex = self.memory.all_examples()
        y_new = np.full(len(X_new), new_id, dtype=np.int64)
        if X_ex is None:
            return X_new, y_new
        return np.concatenate([X_new, X_ex]), np.concatenate([y_new, y_ex])

    # -- inference ---------------------------------------------------------

    def classify_batch(self, features):
        """Predicted class ids and per-class scores for an (n, d) batch."""
        if not self.initialized:
            raise ValueError("learner not initialized")
        X = np.asarray(features, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if self.strategy == "icarl" and self.use_nem:
            means = self.memory.class_means(self.model)
            M = np.stack([cm.mean for cm in means])  # row order = class id
            emb = self.model.embed(X)
            dists = np.linalg.norm(emb[:, None, :] - M[None, :, :], axis=2)
            preds = dists.argmin(axis=1)  # first index wins ties
            return preds, -dists
        probs = softmax(self.model.forward(X))
        if self.strategy == "il2m":
            rect = np.stack(
                [il2m_rectify(p, self.il2m, self._task) for p in probs]
            )
            return rect.argmax(axis=1), rect
        return probs.argmax(axis=1), probs

    def classify(self, feature):
        preds, scores = self.classify_batch(np.asarray(feature)[None, :])
        return int(preds[0]), scores[0]

    # -- checkpointing -----------------------------------------------------

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "encoding": self.encoding,
            "hidden": list(self.hidden),
            "dropout_p": self.dropout_p,
            "seed": self.seed,
            "use_nem": self.use_nem,
            "use_kdl": self.use_kdl,
            "seen": list(self.seen),
            "task": self._task,
            "model": self.model.to_dict() if self.model else None,
            "memory": self.memory.to_dict() if self.memory else None,
            "il2m": self.il2m.to_dict() if self.il2m else None,
        }

    @classmethod
    def from_dict(cls, d):
        learner = cls(
            d["strategy"], encoding=d["encoding"], hidden=d["hidden"],
            dropout_p=d["dropout_p"], seed=d["seed"],
            use_nem=d["use_nem"], use_kdl=d["use_kdl"],
        )
        learner.seen = list(d["seen"])
        learner._task = d["task"]
        if d["model"] is not None:
            learner.model = MlpModel.from_dict(d["model"])
        if d["memory"] is not None:
            learner.memory = ExemplarMemory.from_dict(d["memory"])
        if d["il2m"] is not None:
            learner.il2m = Il2mStats.from_dict(d["il2m"])
        return learner

    def save(self, path):
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
