"""From-scratch fully-connected classifier in numpy (float64).

Each hidden layer is affine -> batch norm -> ReLU -> inverted dropout,
followed by a linear class head. Training uses mini-batch Adam with a
reduce-on-plateau learning-rate schedule, optionally adding a distillation
term against a frozen teacher on the old-class logit columns. The head can
be expanded in place when new classes arrive, preserving existing weights
bit-for-bit.
"""
from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    epochs: int
    lr0: float = 1e-3
    plateau_factor: float = 3.0
    plateau_patience: int = 5
    plateau_threshold: float = 1e-4  # absolute improvement that resets patience
    min_lr: float = 1e-5
    batch_size: int = 32
    seed: int = 0
    distill_weight: float = 1.0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if self.plateau_factor <= 1:
            raise ValueError("plateau_factor must be > 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)
    learning_rates: list = field(default_factory=list)
    seconds: float = 0.0

    def append(self, loss, acc, lr):
        self.losses.append(float(loss))
        self.accuracies.append(float(acc))
        self.learning_rates.append(float(lr))


class MlpModel:
    """MLP with per-hidden-layer batch norm and dropout.

    Weights are stored as (fan_in, fan_out) matrices so a batch row-vector
    flows left to right: logits = relu(bn(x @ W + b)) ... @ W_out + b_out.
    """

    def __init__(self, input_dim, hidden=(256, 128), n_classes=2,
                 dropout_p=0.35, seed=0):
        if not 0.0 <= dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.n_classes = int(n_classes)
        self.dropout_p = float(dropout_p)
        self.mode = "eval"

        rng = np.random.default_rng(seed)
        dims = [self.input_dim, *self.hidden]
        self.W, self.b = [], []
        self.gamma, self.beta = [], []
        self.run_mean, self.run_var = [], []
        for fan_in, width in zip(dims[:-1], dims[1:]):
            # He init for ReLU hidden layers
            self.W.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, width)))
            self.b.append(np.zeros(width))
            self.gamma.append(np.ones(width))
            self.beta.append(np.zeros(width))
            self.run_mean.append(np.zeros(width))
            self.run_var.append(np.ones(width))
        self.W_out = rng.normal(0.0, 0.01, (dims[-1], self.n_classes))
        self.b_out = np.zeros(self.n_classes)

    # -- mode handling -----------------------------------------------------

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    # -- parameters --------------------------------------------------------

    def named_params(self):
        """All trainable arrays as (name, array) pairs, stable order."""
        out = []
        for i in range(len(self.hidden)):
            out += [(f"W{i}", self.W[i]), (f"b{i}", self.b[i]),
                    (f"gamma{i}", self.gamma[i]), (f"beta{i}", self.beta[i])]
        out += [("W_out", self.W_out), ("b_out", self.b_out)]
        return out

    def get_param(self, name):
        return dict(self.named_params())[name]

    # -- forward / backward ------------------------------------------------

    def forward(self, X, rng=None, update_stats=True):
        """Batch forward pass; behavior depends on self.mode.

        Train mode normalizes with batch statistics (batch must have >= 2
        rows), updates running statistics (unless update_stats=False) and
        applies inverted dropout drawn from rng. Eval mode is deterministic.
        """
        logits, _ = self._forward(X, rng=rng, update_stats=update_stats)
        return logits

    def _forward(self, X, rng=None, update_stats=True):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(
                f"batch must be (n, {self.input_dim}), got {X.shape}"
            )
        train = self.mode == "train"
        if train and X.shape[0] < 2:
            raise ValueError("train-mode forward needs a batch of >= 2 rows")
        n = X.shape[0]
        h = X
        cache = {"X": X, "layers": []}
        for i in range(len(self.hidden)):
            a = h @ self.W[i] + self.b[i]
            if train:
                mean = a.mean(axis=0)
                var = a.var(axis=0)  # biased, used for normalization
                if update_stats:
                    unbiased = var * n / (n - 1)
                    self.run_mean[i] = (
                        (1 - BN_MOMENTUM) * self.run_mean[i] + BN_MOMENTUM * mean
                    )
                    self.run_var[i] = (
                        (1 - BN_MOMENTUM) * self.run_var[i] + BN_MOMENTUM * unbiased
                    )
            else:
                mean = self.run_mean[i]
                var = self.run_var[i]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (a - mean) * inv_std
            y = self.gamma[i] * xhat + self.beta[i]
            r = np.maximum(y, 0.0)
            if train and self.dropout_p > 0.0:
                if rng is None:
                    raise ValueError("train-mode forward with dropout needs rng")
                mask = (
                    rng.random(r.shape) >= self.dropout_p
                ) / (1.0 - self.dropout_p)
                out = r * mask
            else:
                mask = None
                out = r
            cache["layers"].append(
                {"h_in": h, "a": a, "xhat": xhat, "inv_std": inv_std,
                 "y": y, "relu": r, "mask": mask, "train": train}
            )
            h = out
        cache["h_last"] = h
        logits = h @ self.W_out + self.b_out
        if not np.all(np.isfinite(logits)):
            raise FloatingPointError("non-finite logits")
        return logits, cache

    def backward(self, cache, dlogits):
        """Gradients of a scalar loss given d(loss)/d(logits)."""
        grads = {}
        h = cache["h_last"]
        grads["W_out"] = h.T @ dlogits
        grads["b_out"] = dlogits.sum(axis=0)
        dh = dlogits @ self.W_out.T
        for i in reversed(range(len(self.hidden))):
            lay = cache["layers"][i]
            if lay["mask"] is not None:
                dh = dh * lay["mask"]
            dr = dh * (lay["y"] > 0)
            grads[f"gamma{i}"] = (dr * lay["xhat"]).sum(axis=0)
            grads[f"beta{i}"] = dr.sum(axis=0)
            dxhat = dr * self.gamma[i]
            if lay["train"]:
                n = lay["a"].shape[0]
                # batch-norm backward through batch statistics
                xhat = lay["xhat"]
                da = (
                    lay["inv_std"]
                    / n
                    * (
                        n * dxhat
                        - dxhat.sum(axis=0)
                        - xhat * (dxhat * xhat).sum(axis=0)
                    )
                )
            else:
                da = dxhat * lay["inv_std"]
            grads[f"W{i}"] = lay["h_in"].T @ da
            grads[f"b{i}"] = da.sum(axis=0)
            dh = da @ self.W[i].T
        return grads

    # -- embedding ---------------------------------------------------------

    def embed(self, X, normalize=True):
        """Last-hidden-layer activations in eval mode, L2-normalized per row.

        Rows whose unnormalized embedding is the zero vector are left at
        zero. Accepts a single vector or an (n, d) batch.
        """
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        prev_mode = self.mode
        self.mode = "eval"
        try:
            _, cache = self._forward(X)
        finally:
            self.mode = prev_mode
        emb = cache["layers"][-1]["relu"].copy()
        if normalize:
            norms = np.linalg.norm(emb, axis=1, keepdims=True)
            nz = norms[:, 0] > 0
            emb[nz] /= norms[nz]
        return emb[0] if single else emb

    # -- head expansion ----------------------------------------------------

    def expand_head(self, n_new, rng):
        """Grow the class head by n_new columns in place.

        New columns are N(0, 0.01) from rng with zero bias; everything else
        is untouched, so old-class logits are preserved bit-for-bit.
        """
        if n_new < 1:
            raise ValueError("expand_head needs n_new >= 1")
        new_cols = rng.normal(0.0, 0.01, (self.W_out.shape[0], n_new))
        self.W_out = np.concatenate([self.W_out, new_cols], axis=1)
        self.b_out = np.concatenate([self.b_out, np.zeros(n_new)])
        self.n_classes += n_new

    # -- checkpointing -----------------------------------------------------

    def to_dict(self):
        def ser(a):
            return np.asarray(a).tolist()

        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "n_classes": self.n_classes,
            "dropout_p": self.dropout_p,
            "params": {name: ser(arr) for name, arr in self.named_params()},
            "run_mean": [ser(a) for a in self.run_mean],
            "run_var": [ser(a) for a in self.run_var],
        }

    @classmethod
    def from_dict(cls, d):
        model = cls(
            d["input_dim"], hidden=d["hidden"], n_classes=d["n_classes"],
            dropout_p=d["dropout_p"],
        )
        p = d["params"]
        for i in range(len(model.hidden)):
            model.W[i] = np.asarray(p[f"W{i}"], dtype=np.float64)
            model.b[i] = np.asarray(p[f"b{i}"], dtype=np.float64)
            model.gamma[i] = np.asarray(p[f"gamma{i}"], dtype=np.float64)
            model.beta[i] = np.asarray(p[f"beta{i}"], dtype=np.float64)
            model.run_mean[i] = np.asarray(d["run_mean"][i], dtype=np.float64)
            model.run_var[i] = np.asarray(d["run_var"][i], dtype=np.float64)
        model.W_out = np.asarray(p["W_out"], dtype=np.float64)
        model.b_out = np.asarray(p["b_out"], dtype=np.float64)
        return model

    def save(self, path):
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def copy(self):
        return MlpModel.from_dict(self.to_dict())


# -- losses ----------------------------------------------------------------


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. logits."""
    n = logits.shape[0]
    p = softmax(logits)
    ll = np.log(p[np.arange(n), labels] + 1e-300)
    loss = -ll.mean()
    dlogits = p
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def loss_distill(student_logits, teacher_logits, form="sigmoid_bce"):
    """Distillation loss and gradient w.r.t. the student logits.

    sigmoid_bce: per-unit BCE between sigmoids, averaged over all entries.
    softmax_t2: cross-entropy between temperature-2 softened distributions,
    averaged over samples. Teacher logits are constants.
    """
    s = np.asarray(student_logits, dtype=np.float64)
    t = np.asarray(teacher_logits, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"shape mismatch {s.shape} vs {t.shape}")
    if form == "sigmoid_bce":
        target = _sigmoid(t)
        # numerically stable BCE-with-logits
        loss = np.mean(
            np.maximum(s, 0.0) - s * target + np.log1p(np.exp(-np.abs(s)))
        )
        grad = (_sigmoid(s) - target) / s.size
        return loss, grad
    if form == "softmax_t2":
        T = 2.0
        n = s.shape[0]
        qt = softmax(t / T)
        zs = s / T
        zs = zs - zs.max(axis=1, keepdims=True)
        log_qs = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
        loss = -(qt * log_qs).sum(axis=1).mean()
        grad = (softmax(s / T) - qt) / (T * n)
        return loss, grad
    raise ValueError(f"unknown distillation form {form!r}")


# -- training --------------------------------------------------------------


class _Adam:
    def __init__(self, model):
        self.m = {k: np.zeros_like(v) for k, v in model.named_params()}
        self.v = {k: np.zeros_like(v) for k, v in model.named_params()}
        self.t = 0

    def step(self, model, grads, lr):
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1 ** self.t
        bc2 = 1.0 - ADAM_BETA2 ** self.t
        for name, param in model.named_params():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1 - ADAM_BETA2) * g * g
            param -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


def _batch_slices(n, batch_size):
    """Contiguous batch bounds; a trailing single row is merged into the
    previous batch so train-mode batch norm always sees >= 2 rows."""
    bounds = list(range(0, n, batch_size)) + [n]
    if len(bounds) > 2 and bounds[-1] - bounds[-2] == 1:
        del bounds[-2]
    return list(zip(bounds[:-1], bounds[1:]))


def train_epochs(model, X, y, config, teacher=None, old_class_count=0,
                 distill_form="sigmoid_bce"):
    """Mini-batch Adam training with reduce-on-plateau LR decay.

    When a teacher snapshot is given, a distillation term over the first
    old_class_count logit columns (weighted by config.distill_weight) is
    added to the softmax cross-entropy. Leaves the model in eval mode.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty training set")
    if y.min() < 0 or y.max() >= model.n_classes:
        raise ValueError(f"labels must be in [0, {model.n_classes})")

    rng = np.random.default_rng(config.seed)
    adam = _Adam(model)
    lr = config.lr0
    best = np.inf
    bad_epochs = 0
    report = TrainReport()
    t0 = time.perf_counter()
    distill = teacher is not None and old_class_count > 0 and config.distill_weight > 0
    if distill:
        teacher.eval()

    for _ in range(config.epochs):
        model.train()
        perm = rng.permutation(len(X))
        loss_sum = 0.0
        correct = 0
        for lo, hi in _batch_slices(len(X), config.batch_size):
            idx = perm[lo:hi]
            Xb, yb = X[idx], y[idx]
            logits, cache = model._forward(Xb, rng=rng)
            loss, dlogits = cross_entropy(logits, yb)
            if distill:
                t_logits = teacher.forward(Xb)[:, :old_class_count]
                dloss, dgrad = loss_distill(
                    logits[:, :old_class_count], t_logits, form=distill_form
                )
                loss += config.distill_weight * dloss
                dlogits[:, :old_class_count] += config.distill_weight * dgrad
            grads = model.backward(cache, dlogits)
            adam.step(model, grads, lr)
            loss_sum += loss * len(idx)
            correct += int((logits.argmax(axis=1) == yb).sum())
        epoch_loss = loss_sum / len(X)
        report.append(epoch_loss, correct / len(X), lr)
        # plateau schedule: drop LR after `patience` epochs without an
        # absolute improvement of at least `threshold`
        if epoch_loss < best - config.plateau_threshold:
            best = epoch_loss
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.plateau_patience:
                lr = max(lr / config.plateau_factor, config.min_lr)
                bad_epochs = 0
    model.eval()
    report.seconds = time.perf_counter() - t0
    return report


# -- gradient verification -------------------------------------------------


def grad_check(model, X, y, h=1e-5, floor=1e-6):
    """Max relative error between analytic and central-difference gradients
    of the cross-entropy loss over every trainable parameter.

    Runs with dropout disabled and batch norm in train mode on the fixed
    batch; running statistics are not touched. `floor` bounds the relative
    error denominator from below; central differences on a double-precision
    O(1) loss carry ~1e-11 of round-off noise, so floors much below 1e-6
    report spurious errors for near-zero gradients.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    saved_p, saved_mode = model.dropout_p, model.mode
    model.dropout_p = 0.0
    model.train()
    try:
        logits, cache = model._forward(X, update_stats=False)
        _, dlogits = cross_entropy(logits, y)
        analytic = model.backward(cache, dlogits)

        def loss_at():
            lg, _ = model._forward(X, update_stats=False)
            return cross_entropy(lg, y)[0]

        worst = 0.0
        for name, param in model.named_params():
            ga = analytic[name]
            if name == "W0" and model.hidden:
                # first-layer weights dominate the parameter count; a
                # perturbation there only shifts one pre-activation column,
                # so all 2*fan_in probes of a column batch into one
                # vectorized downstream pass
                gn = _w0_numeric_grads(model, X, y, h).reshape(-1)
            else:
                flat = param.reshape(-1)
                gn = np.empty(flat.shape)
                for k in range(flat.size):
                    orig = flat[k]
                    flat[k] = orig + h
                    lp = loss_at()
                    flat[k] = orig - h
                    lm = loss_at()
                    flat[k] = orig
                    gn[k] = (lp - lm) / (2 * h)
            gaf = ga.reshape(-1)
            rel = np.abs(gaf - gn) / np.maximum(floor, np.abs(gaf) + np.abs(gn))
            worst = max(worst, float(rel.max()))
        return worst
    finally:
        model.dropout_p = saved_p
        model.mode = saved_mode


def _w0_numeric_grads(model, X, y, h):
    """Central-difference gradient for every entry of W0, vectorized.

    Assumes train-mode batch norm, dropout off. Perturbing W0[i, j] changes
    only column j of the first pre-activation, so each column's 2*fan_in
    probe losses are evaluated in one batched downstream pass.
    """
    n, d = X.shape
    _, cache = model._forward(X, update_stats=False)
    h1 = cache["layers"][0]["relu"]
    if len(model.hidden) > 1:
        W_next, b_next = model.W[1], model.b[1]
        next_layer = 1
    else:
        W_next, b_next = model.W_out, model.b_out
        next_layer = len(model.hidden)  # straight into the head
    a_next_base = h1 @ W_next + b_next

    a1 = X @ model.W[0] + model.b[0]
    deltas = np.concatenate([h * X.T, -h * X.T])  # (2d, n)
    gnum = np.empty_like(model.W[0])
    for j in range(model.W[0].shape[1]):
        a1col = a1[:, j] + deltas
        mean = a1col.mean(axis=1, keepdims=True)
        var = a1col.var(axis=1, keepdims=True)
        xhat = (a1col - mean) / np.sqrt(var + BN_EPS)
        rcol = np.maximum(model.gamma[0][j] * xhat + model.beta[0][j], 0.0)
        shift = rcol - h1[:, j]  # (2d, n)
        a_next = a_next_base[None] + shift[:, :, None] * W_next[j][None, None, :]
        losses = _variant_losses(model, a_next, next_layer, y)
        gnum[:, j] = (losses[:d] - losses[d:]) / (2 * h)
    return gnum


def _variant_losses(model, a, layer, y):
    """Cross-entropy per variant given (P, n, width) pre-batch-norm
    activations of hidden `layer` (or logits when layer == n_hidden)."""
    hact = None
    for i in range(layer, len(model.hidden)):
        if i > layer:
            a = hact @ model.W[i] + model.b[i]
        mean = a.mean(axis=1, keepdims=True)
        var = a.var(axis=1, keepdims=True)
        xhat = (a - mean) / np.sqrt(var + BN_EPS)
        hact = np.maximum(model.gamma[i] * xhat + model.beta[i], 0.0)
    logits = a if hact is None else hact @ model.W_out + model.b_out
    z = logits - logits.max(axis=2, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=2, keepdims=True))
    n = logits.shape[1]
    return -logp[:, np.arange(n), y].mean(axis=1)
