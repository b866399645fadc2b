"""Small differentiable classifiers with hand-written backprop.

Layers store weights as ``(fan_in, fan_out)`` so a batch ``X`` of shape
``(n, d)`` maps through ``X @ W + b``. A :class:`LinearClassifier` is the
zero-hidden-layer case and adds exact margin geometry.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, as_rng

FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


# -- losses -------------------------------------------------------------------


def log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def loss_ce(logits, y):
    """-log softmax(logits)[y]; batched when ``logits`` is 2-D."""
    lp = log_softmax(logits)
    if lp.ndim == 1:
        return float(-lp[int(y)])
    y = np.asarray(y, dtype=np.int64)
    return -lp[np.arange(lp.shape[0]), y]


def loss_kl(p_logits, q_logits):
    """KL(softmax(p) || softmax(q)); batched when 2-D."""
    lp = log_softmax(p_logits)
    lq = log_softmax(q_logits)
    out = np.sum(np.exp(lp) * (lp - lq), axis=-1)
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def ce_logit_grad(logits, y):
    """d CE / d logits per row."""
    g = softmax(logits)
    g[np.arange(g.shape[0]), np.asarray(y, dtype=np.int64)] -= 1.0
    return g


def kl_logit_grads(p_logits, q_logits):
    """Per-row gradients of KL(softmax(p) || softmax(q)) w.r.t. p and q logits."""
    lp = log_softmax(p_logits)
    lq = log_softmax(q_logits)
    p = np.exp(lp)
    q = np.exp(lq)
    diff = lp - lq
    kl = np.sum(p * diff, axis=1, keepdims=True)
    return p * (diff - kl), q - p


# -- models -------------------------------------------------------------------


_ACTIVATIONS = ("relu", "tanh")


class Mlp:
    """Fully connected network producing logits."""

    kind = "mlp"

    def __init__(self, weights, biases, activation: str = "relu", seed: int | None = None):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in biases]
        self.activation = activation
        self.seed = seed
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} vs bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: incompatible with previous layer")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")

    @classmethod
    def init(cls, dims, seed: int = 0, activation: str = "relu"):
        """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
        rng = as_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append((2.0 * rng.uniform((fan_in, fan_out)) - 1.0) * lim)
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, activation=activation, seed=int(seed))

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_classes(self):
        return self.weights[-1].shape[1]

    def copy(self):
        return type(self)(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation, self.seed
        )

    def parameters(self):
        """(path, array) pairs, in a fixed order."""
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"layers[{i}].weight", w))
            out.append((f"layers[{i}].bias", b))
        return out

    def _act(self, z):
        return np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)

    def _act_grad(self, z, a):
        # relu'(0) is taken as 0
        return (z > 0.0).astype(np.float64) if self.activation == "relu" else 1.0 - a * a

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.dims[0]:
            raise ValueError(f"input dim {X.shape[-1]} does not match model dim {self.dims[0]}")
        return X, single

    def forward(self, x):
        X, single = self._as_batch(x)
        a = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else self._act(z)
        return a[0] if single else a

    def predict(self, x):
        return np.argmax(self.forward(x), axis=-1)

    def forward_cache(self, X):
        acts = [X]
        pre = []
        a = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            a = z if i == last else self._act(z)
            acts.append(a)
        return acts, pre

    def backward(self, cache, dlogits, need_params=True):
        """Backpropagate ``dlogits`` (n, k); returns (dW list, db list, dX)."""
        acts, pre = cache
        dWs = [None] * len(self.weights)
        dbs = [None] * len(self.weights)
        delta = dlogits
        for i in range(len(self.weights) - 1, -1, -1):
            if need_params:
                dWs[i] = acts[i].T @ delta
                dbs[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * self._act_grad(pre[i - 1], acts[i])
        return dWs, dbs, delta

    def to_dict(self):
        return {
            "format": "portlab-model",
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "dims": self.dims,
            "activation": self.activation,
            "seed": self.seed,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }


class LinearClassifier(Mlp):
    """Affine logits ``x @ W + b``; exact L2 margins to the decision regions."""

    kind = "linear"

    def __init__(self, weights, biases, activation: str = "relu", seed: int | None = None):
        super().__init__(weights, biases, activation, seed)
        if len(self.weights) != 1:
            raise ValueError("a linear classifier has exactly one layer")

    @classmethod
    def from_wb(cls, W, b):
        """``W`` of shape (d, k), ``b`` of shape (k,)."""
        return cls([W], [b])

    @classmethod
    def binary(cls, w, b: float = 0.0):
        """Class 1 iff ``w.x + b > 0`` (ties go to class 0)."""
        w = np.asarray(w, dtype=np.float64)
        if not np.any(w):
            raise ValueError("binary weight vector must be nonzero")
        W = np.zeros((w.shape[0], 2))
        W[:, 1] = w
        return cls([W], [np.array([0.0, float(b)])])

    @property
    def W(self):
        return self.weights[0]

    @property
    def b(self):
        return self.biases[0]

    def _gaps(self, X, y):
        """Per-row (gap to each class j, normal norm): gap_j = z_y - z_j."""
        Z = X @ self.W + self.b
        y = np.asarray(y, dtype=np.int64)
        n = X.shape[0]
        zy = Z[np.arange(n), y]
        gaps = zy[:, None] - Z
        normals = self.W[:, y].T[:, None, :] - self.W.T[None, :, :]  # (n, k, d)
        norms = np.linalg.norm(normals, axis=2)
        return gaps, normals, norms

    def margin(self, x, y):
        """Exact L2 distance from ``x`` to the region where the label is not ``y``
        (0 when already misclassified)."""
        X, single = self._as_batch(x)
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (X.shape[0],))
        gaps, _, norms = self._gaps(X, y)
        dist = np.full(gaps.shape, np.inf)
        other = np.ones_like(gaps, dtype=bool)
        other[np.arange(X.shape[0]), y] = False
        ok = other & (norms > 0)
        dist[ok] = np.maximum(gaps[ok], 0.0) / norms[ok]
        d = dist.min(axis=1)
        d[self.predict(X) != y] = 0.0
        return float(d[0]) if single else d

    def nearest_adversarial(self, x, y):
        """Closest point (L2) whose label differs from ``y``: orthogonal projection
        onto the nearest pairwise boundary. Misclassified points map to themselves."""
        X, single = self._as_batch(x)
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (X.shape[0],))
        gaps, normals, norms = self._gaps(X, y)
        n = X.shape[0]
        dist = np.full(gaps.shape, np.inf)
        other = np.ones_like(gaps, dtype=bool)
        other[np.arange(n), y] = False
        ok = other & (norms > 0)
        dist[ok] = np.maximum(gaps[ok], 0.0) / norms[ok]
        j = np.argmin(dist, axis=1)
        rows = np.arange(n)
        nrm = normals[rows, j]
        step = np.maximum(gaps[rows, j], 0.0) / norms[rows, j] ** 2
        out = X - step[:, None] * nrm
        wrong = self.predict(X) != y
        out[wrong] = X[wrong]
        return out[0] if single else out


def model_from_dict(doc):
    if doc.get("format") != "portlab-model":
        raise ValueError("not a portlab model document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')}")
    cls = LinearClassifier if doc["kind"] == "linear" else Mlp
    model = cls(
        [np.array(w) for w in doc["weights"]],
        [np.array(b) for b in doc["biases"]],
        activation=doc["activation"],
        seed=doc.get("seed"),
    )
    if model.dims != list(doc["dims"]):
        raise ValueError("dims do not match weight shapes")
    return model


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


# -- gradients ----------------------------------------------------------------


@dataclass
class GradBundle:
    weights: list
    biases: list
    loss: float

    def parameters(self):
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"layers[{i}].weight", w))
            out.append((f"layers[{i}].bias", b))
        return out


def _points_labels(batch):
    if hasattr(batch, "points"):
        return np.asarray(batch.points, dtype=np.float64), np.asarray(batch.labels, dtype=np.int64)
    X, y = batch
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64)


def grad(model, batch, loss: str = "ce", reference_logits=None) -> GradBundle:
    """Exact gradient of the mean batch loss w.r.t. parameters.

    ``loss="ce"`` uses the batch labels; ``loss="kl"`` is
    KL(softmax(reference_logits) || softmax(model(x))) with the reference held fixed.
    """
    X, y = _points_labels(batch)
    n = X.shape[0]
    cache = model.forward_cache(X)
    logits = cache[0][-1]
    if loss == "ce":
        values = loss_ce(logits, y)
        dlogits = ce_logit_grad(logits, y)
    elif loss == "kl":
        if reference_logits is None:
            raise ValueError("kl loss needs reference_logits")
        values = loss_kl(reference_logits, logits)
        _, dlogits = kl_logit_grads(reference_logits, logits)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    dWs, dbs, _ = model.backward(cache, dlogits / n)
    return GradBundle(dWs, dbs, float(np.mean(values)))


def input_grad(model, x, y, loss: str = "ce", reference_logits=None):
    """Gradient of each sample's own loss w.r.t. its input."""
    X, single = model._as_batch(x)
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (X.shape[0],))
    cache = model.forward_cache(X)
    logits = cache[0][-1]
    if loss == "ce":
        dlogits = ce_logit_grad(logits, y)
    elif loss == "kl":
        ref = np.atleast_2d(reference_logits)
        _, dlogits = kl_logit_grads(ref, logits)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    _, _, dX = model.backward(cache, dlogits, need_params=False)
    return dX[0] if single else dX


# -- training -----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 100
    batch: int = 64
    seed: int = 0
    weight_decay: float = 5e-4
    momentum: float = 0.0

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 0 or self.batch < 1 or self.weight_decay < 0:
            raise ValueError(f"invalid training config {self}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class TrainResult:
    model: Mlp
    losses: list = field(default_factory=list)  # mean loss per epoch


def cosine_lr(base: float, step: int, total: int) -> float:
    if total <= 0:
        return base
    return 0.5 * base * (1.0 + math.cos(math.pi * step / total))


class BatchStream:
    """Endless shuffled minibatch indices over ``n`` items, reshuffled each pass."""

    def __init__(self, n: int, batch: int, rng: Rng):
        self.n = n
        self.batch = min(batch, n)
        self.rng = rng
        self._perm = np.empty(0, dtype=np.int64)
        self._pos = 0

    def next(self):
        if self._pos + self.batch > self._perm.size:
            rest = self._perm[self._pos:]
            self._perm = np.concatenate([rest, self.rng.permutation(self.n)])
            self._pos = 0
        idx = self._perm[self._pos:self._pos + self.batch]
        self._pos += self.batch
        return idx


def run_sgd(model, step_fn, steps_per_epoch: int, cfg: TrainConfig, hook=None) -> TrainResult:
    """Generic SGD loop with cosine decay and coupled weight decay.

    ``step_fn(model, step)`` returns ``(loss, dWs, dbs)`` for the current step.
    """
    model = model.copy()
    total = cfg.epochs * steps_per_epoch
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    losses = []
    step = 0
    for epoch in range(cfg.epochs):
        acc = 0.0
        for _ in range(steps_per_epoch):
            loss, dWs, dbs = step_fn(model, step)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            lr = cosine_lr(cfg.lr, step, total)
            for i in range(len(model.weights)):
                gw = dWs[i] + cfg.weight_decay * model.weights[i]
                gb = dbs[i] + cfg.weight_decay * model.biases[i]
                if cfg.momentum:
                    vel_w[i] = cfg.momentum * vel_w[i] + gw
                    vel_b[i] = cfg.momentum * vel_b[i] + gb
                    gw, gb = vel_w[i], vel_b[i]
                model.weights[i] -= lr * gw
                model.biases[i] -= lr * gb
            acc += loss
            step += 1
        mean = acc / max(steps_per_epoch, 1)
        if not all(np.all(np.isfinite(w)) for w in model.weights):
            raise TrainingDiverged(epoch, float("nan"))
        losses.append(mean)
        if hook is not None:
            hook(epoch, model, mean)
    return TrainResult(model, losses)


def sgd_train(model, data, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Natural (clean) cross-entropy training."""
    X, y = _points_labels(data)
    stream = BatchStream(X.shape[0], cfg.batch, Rng(cfg.seed).child(0))
    steps = math.ceil(X.shape[0] / stream.batch)

    def step_fn(m, _):
        idx = stream.next()
        g = grad(m, (X[idx], y[idx]))
        return g.loss, g.weights, g.biases

    return run_sgd(model, step_fn, steps, cfg)


def accuracy(model, data) -> float:
    X, y = _points_labels(data)
    return float(np.mean(model.predict(X) == y))
