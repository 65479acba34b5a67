"""Per-class exemplar memory: herding selection and class means.

Exemplars are stored as raw input feature vectors (not embeddings) so the
class means can track the network as it keeps training; means are
recomputed from the current model on demand.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def herd_select(embeddings, m):
    """Greedy mean-matching selection.

    With mu the mean of all embeddings, step k picks the unchosen index i
    minimizing ||mu - (x_i + sum(chosen)) / k||, ties broken by lowest
    index. Returns min(m, n) indices in selection order.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("embeddings must be a non-empty (n, d) array")
    if m < 1:
        raise ValueError("m must be >= 1")
    n = len(X)
    mu = X.mean(axis=0)
    chosen = []
    running = np.zeros(X.shape[1])
    taken = np.zeros(n, dtype=bool)
    for k in range(1, min(m, n) + 1):
        cand = (running + X) / k
        dist = np.linalg.norm(mu - cand, axis=1)
        dist[taken] = np.inf
        i = int(np.argmin(dist))  # argmin returns the first (lowest) index
        chosen.append(i)
        taken[i] = True
        running += X[i]
    return chosen


@dataclass(frozen=True)
class ClassMean:
    class_id: int
    mean: np.ndarray  # unit norm unless the raw mean is zero
    count: int


class ExemplarMemory:
    """Stores up to m input feature vectors per class, herding-ranked."""

    def __init__(self, m, selection="herding", normalize_embeddings=True):
        if m < 1:
            raise ValueError("m must be >= 1")
        if selection not in ("herding", "random"):
            raise ValueError("selection must be 'herding' or 'random'")
        self.m = int(m)
        self.selection = selection
        self.normalize_embeddings = normalize_embeddings
        self._store: dict[int, np.ndarray] = {}

    def classes(self):
        return sorted(self._store)

    def exemplars(self, class_id):
        return self._store[class_id]

    def total(self):
        return sum(len(v) for v in self._store.values())

    def update(self, class_id, features, model, rng=None):
        """(Re)select exemplars for one class from its training features."""
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2 or len(feats) == 0:
            raise ValueError("class features must be a non-empty (n, d) array")
        if self.selection == "herding":
            emb = model.embed(feats, normalize=self.normalize_embeddings)
            idx = herd_select(emb, self.m)
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            k = min(self.m, len(feats))
            idx = list(rng.choice(len(feats), size=k, replace=False))
        self._store[class_id] = feats[idx].copy()

    def class_means(self, model):
        """Fresh mean embedding per class under the current model."""
        if not self._store:
            raise ValueError("memory is empty")
        means = []
        for cid in self.classes():
            ex = self._store[cid]
            emb = model.embed(ex)
            mu = emb.mean(axis=0)
            norm = np.linalg.norm(mu)
            if norm > 0:
                mu = mu / norm
            means.append(ClassMean(cid, mu, len(ex)))
        return means

    def all_examples(self):
        """(features, labels) across every stored class."""
        if not self._store:
            return None, None
        feats = np.concatenate([self._store[c] for c in self.classes()])
        labels = np.concatenate(
            [np.full(len(self._store[c]), c, dtype=np.int64) for c in self.classes()]
        )
        return feats, labels

    def to_dict(self):
        return {
            "m": self.m,
            "selection": self.selection,
            "normalize_embeddings": self.normalize_embeddings,
            "store": {str(c): v.tolist() for c, v in self._store.items()},
        }

    @classmethod
    def from_dict(cls, d):
        mem = cls(d["m"], d["selection"], d["normalize_embeddings"])
        mem._store = {
            int(c): np.asarray(v, dtype=np.float64) for c, v in d["store"].items()
        }
        return mem
