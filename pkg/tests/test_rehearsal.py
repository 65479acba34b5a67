import numpy as np
import pytest

from gestil.net import MlpModel
from gestil.rehearsal import ExemplarMemory, herd_select


def oracle_herding(X, m):
    """Independent reimplementation of the greedy mean-matching rule."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    picked = []
    for k in range(1, min(m, len(X)) + 1):
        best, best_dist = None, None
        for i in range(len(X)):
            if i in picked:
                continue
            subset = X[picked + [i]]
            d = float(np.linalg.norm(mu - subset.sum(axis=0) / k))
            if best_dist is None or d < best_dist - 0.0 or (d == best_dist and i < best):
                if best_dist is None or d < best_dist:
                    best, best_dist = i, d
        picked.append(best)
    return picked


class TestHerdSelect:
    def test_middle_point_first(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        assert herd_select(X, 1) == [1]

    def test_exhaustion(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(7, 3))
        idx = herd_select(X, 7)
        assert sorted(idx) == list(range(7))

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            n = int(rng.integers(2, 30))
            m = int(rng.integers(1, 8))
            X = rng.normal(size=(n, 4))
            X /= np.linalg.norm(X, axis=1, keepdims=True)
            assert herd_select(X, m) == oracle_herding(X, m)

    def test_first_index_is_argmin_to_mean(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            X = rng.normal(size=(15, 5))
            mu = X.mean(axis=0)
            first = herd_select(X, 3)[0]
            assert first == int(np.argmin(np.linalg.norm(X - mu, axis=1)))

    def test_permutation_prefix(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(20, 4))
        idx = herd_select(X, 9)
        assert len(idx) == len(set(idx)) == 9
        assert all(0 <= i < 20 for i in idx)

    def test_empty_input(self):
        with pytest.raises(ValueError):
            herd_select(np.zeros((0, 3)), 2)

    def test_herding_beats_random_on_mean_matching(self):
        # statistical: averaged over trials, herded subsets approximate the
        # mean at least as well as uniformly random ones
        rng = np.random.default_rng(4)
        herd_gap, rand_gap = [], []
        for _ in range(20):
            X = rng.normal(size=(50, 6))
            X /= np.linalg.norm(X, axis=1, keepdims=True)
            mu = X.mean(axis=0)
            hidx = herd_select(X, 5)
            herd_gap.append(np.linalg.norm(mu - X[hidx].mean(axis=0)))
            ridx = rng.choice(50, size=5, replace=False)
            rand_gap.append(np.linalg.norm(mu - X[ridx].mean(axis=0)))
        assert np.mean(herd_gap) <= np.mean(rand_gap)


class TestExemplarMemory:
    def setup_method(self):
        self.model = MlpModel(6, hidden=(8,), n_classes=3, seed=0)
        self.rng = np.random.default_rng(0)

    def test_fewer_than_capacity_stores_all(self):
        mem = ExemplarMemory(m=5)
        feats = self.rng.normal(size=(3, 6))
        mem.update(0, feats, self.model)
        assert len(mem.exemplars(0)) == 3

    def test_capacity_respected_and_membership(self):
        mem = ExemplarMemory(m=5)
        feats = self.rng.normal(size=(30, 6))
        mem.update(1, feats, self.model)
        stored = mem.exemplars(1)
        assert len(stored) == 5
        rows = {tuple(r) for r in feats}
        assert all(tuple(r) in rows for r in stored)

    def test_update_deterministic_and_replacing(self):
        mem = ExemplarMemory(m=4)
        feats = self.rng.normal(size=(20, 6))
        mem.update(0, feats, self.model)
        first = mem.exemplars(0).copy()
        mem.update(0, feats, self.model)
        np.testing.assert_array_equal(mem.exemplars(0), first)

    def test_other_classes_untouched(self):
        mem = ExemplarMemory(m=3)
        fa = self.rng.normal(size=(10, 6))
        fb = self.rng.normal(size=(10, 6))
        mem.update(0, fa, self.model)
        before = mem.exemplars(0).copy()
        mem.update(1, fb, self.model)
        np.testing.assert_array_equal(mem.exemplars(0), before)

    def test_empty_features_rejected(self):
        mem = ExemplarMemory(m=3)
        with pytest.raises(ValueError):
            mem.update(0, np.zeros((0, 6)), self.model)

    def test_total_size(self):
        mem = ExemplarMemory(m=5)
        sizes = (3, 8, 12)
        for c, n in enumerate(sizes):
            mem.update(c, self.rng.normal(size=(n, 6)), self.model)
        assert mem.total() == sum(min(5, n) for n in sizes)

    def test_random_selection_seeded(self):
        feats = self.rng.normal(size=(20, 6))
        stored = []
        for _ in range(2):
            mem = ExemplarMemory(m=4, selection="random")
            mem.update(0, feats, self.model, rng=np.random.default_rng(5))
            stored.append(mem.exemplars(0).copy())
        np.testing.assert_array_equal(stored[0], stored[1])


class TestClassMeans:
    def setup_method(self):
        self.model = MlpModel(6, hidden=(8,), n_classes=3, seed=1)
        self.rng = np.random.default_rng(1)

    def test_singleton_mean_equals_embedding(self):
        mem = ExemplarMemory(m=5)
        feat = self.rng.normal(size=(1, 6))
        mem.update(0, feat, self.model)
        (cm,) = mem.class_means(self.model)
        np.testing.assert_allclose(cm.mean, self.model.embed(feat[0]), atol=1e-12)

    def test_unit_norm(self):
        mem = ExemplarMemory(m=5)
        for c in range(3):
            mem.update(c, self.rng.normal(size=(8, 6)), self.model)
        for cm in mem.class_means(self.model):
            assert np.linalg.norm(cm.mean) == pytest.approx(1.0, abs=1e-12)

    def test_matches_average_then_normalize_oracle(self):
        mem = ExemplarMemory(m=5)
        feats = self.rng.normal(size=(3, 6))
        mem.update(0, feats, self.model)
        (cm,) = mem.class_means(self.model)
        embs = np.stack([self.model.embed(f) for f in feats])
        mu = embs.mean(axis=0)
        mu /= np.linalg.norm(mu)
        np.testing.assert_allclose(cm.mean, mu, atol=1e-12)

    def test_empty_memory_rejected(self):
        mem = ExemplarMemory(m=5)
        with pytest.raises(ValueError):
            mem.class_means(self.model)

    def test_round_trip(self):
        mem = ExemplarMemory(m=4)
        for c in range(2):
            mem.update(c, self.rng.normal(size=(6, 6)), self.model)
        back = ExemplarMemory.from_dict(mem.to_dict())
        for c in range(2):
            np.testing.assert_array_equal(back.exemplars(c), mem.exemplars(c))
