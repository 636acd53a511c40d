"""Small softmax classifiers trained from scratch with minibatch SGD.

A hypothesis is an architecture descriptor plus one flat parameter vector, so
weighted parameter averaging (the FL-style combination of source models) is a
plain affine combination of vectors.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError, TrainingError


@dataclass(frozen=True)
class Arch:
    input_dim: int
    hidden_dim: int
    output_dim: int

    @property
    def num_params(self):
        i, h, o = self.input_dim, self.hidden_dim, self.output_dim
        if h == 0:
            return o * i + o
        return h * i + h + o * h + o


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 100
    batch_size: int = 10
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise DomainError("iterations and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise DomainError("learning_rate must be >= 0")


class Hypothesis:
    def __init__(self, arch, params):
        params = np.asarray(params, dtype=float)
        if params.shape != (arch.num_params,):
            raise DomainError(f"expected {arch.num_params} params, got shape {params.shape}")
        self.arch = arch
        self.params = params
        self.params.setflags(write=False)

    def __repr__(self):
        return f"Hypothesis({self.arch}, |params|={self.params.size})"

    @classmethod
    def init(cls, arch, seed=0, scale=0.01):
        rng = np.random.default_rng(seed)
        return cls(arch, rng.standard_normal(arch.num_params) * scale)

    @classmethod
    def zeros(cls, arch):
        return cls(arch, np.zeros(arch.num_params))

    def unpack(self, params=None):
        p = self.params if params is None else params
        i, h, o = self.arch.input_dim, self.arch.hidden_dim, self.arch.output_dim
        if h == 0:
            return p[: o * i].reshape(o, i), p[o * i:]
        w1 = p[: h * i].reshape(h, i)
        b1 = p[h * i: h * i + h]
        rest = p[h * i + h:]
        return w1, b1, rest[: o * h].reshape(o, h), rest[o * h:]

    def logits(self, x):
        x = np.asarray(x, dtype=float)
        if self.arch.hidden_dim == 0:
            w, b = self.unpack()
            return x @ w.T + b
        w1, b1, w2, b2 = self.unpack()
        return np.tanh(x @ w1.T + b1) @ w2.T + b2

    def predict_proba(self, x):
        return softmax(self.logits(x))

    def predict(self, x):
        return np.argmax(self.logits(x), axis=1)

    def to_bytes(self):
        """Arch descriptor (3 x int64) followed by float64 params, little-endian."""
        head = struct.pack("<qqq", self.arch.input_dim, self.arch.hidden_dim, self.arch.output_dim)
        return head + self.params.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < 24:
            raise FormatError("hypothesis blob too short")
        arch = Arch(*struct.unpack("<qqq", blob[:24]))
        params = np.frombuffer(blob[24:], dtype="<f8")
        if params.size != arch.num_params:
            raise FormatError("parameter count does not match arch")
        return cls(arch, params.astype(float))


class OutputAverage:
    """Mixture hypothesis: averages member softmax outputs at prediction time."""

    def __init__(self, members, weights):
        self.members = list(members)
        self.weights = np.asarray(weights, dtype=float)
        self.arch = self.members[0].arch

    def predict_proba(self, x):
        return sum(w * h.predict_proba(x) for w, h in zip(self.weights, self.members))

    def predict(self, x):
        return np.argmax(self.predict_proba(x), axis=1)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(h, params, x, y):
    """Mean cross-entropy of ``params`` on (x, y) and its gradient."""
    arch = h.arch
    n = len(y)
    onehot = np.zeros((n, arch.output_dim))
    onehot[np.arange(n), y] = 1.0
    if arch.hidden_dim == 0:
        w, b = h.unpack(params)
        z = x @ w.T + b
        p = softmax(z)
        loss = -np.mean(np.log(p[np.arange(n), y] + 1e-300))
        dz = (p - onehot) / n
        return loss, np.concatenate([(dz.T @ x).ravel(), dz.sum(0)])
    w1, b1, w2, b2 = h.unpack(params)
    a = np.tanh(x @ w1.T + b1)
    p = softmax(a @ w2.T + b2)
    loss = -np.mean(np.log(p[np.arange(n), y] + 1e-300))
    dz = (p - onehot) / n
    gw2 = dz.T @ a
    da = dz @ w2 * (1.0 - a ** 2)
    gw1 = da.T @ x
    return loss, np.concatenate([gw1.ravel(), da.sum(0), gw2.ravel(), dz.sum(0)])


def train(init, data, cfg):
    """Run ``cfg.iterations`` minibatch SGD steps on the labeled samples of ``data``."""
    mask = data.labeled_mask
    if not mask.any():
        raise TrainingError("dataset has no labeled samples")
    x, y = data.features[mask], data.labels[mask]
    if y.max() >= init.arch.output_dim:
        raise TrainingError("label exceeds the classifier's output dimension")
    rng = np.random.default_rng(cfg.seed)
    params = init.params.copy()
    bs = min(cfg.batch_size, len(y))
    for _ in range(cfg.iterations):
        idx = rng.choice(len(y), bs, replace=False)
        _, g = loss_and_grad(init, params, x[idx], y[idx])
        params -= cfg.learning_rate * g
    return Hypothesis(init.arch, params)


def empirical_error(h, data):
    """Misclassified labeled samples plus all unlabeled ones, over the total."""
    n = len(data)
    if n == 0:
        raise DomainError("empty dataset")
    mask = data.labeled_mask
    wrong = 0
    if mask.any():
        wrong = int(np.sum(h.predict(data.features[mask]) != data.labels[mask]))
    return (wrong + int((~mask).sum())) / n


def divergence_error(h1, h2, data):
    """Fraction of samples on which the two hypotheses' predictions differ."""
    if h1.arch != h2.arch:
        raise DomainError("hypotheses have different architectures")
    if len(data) == 0:
        raise DomainError("empty dataset")
    return float(np.mean(h1.predict(data.features) != h2.predict(data.features)))


def combine(hs, weights, mode="params"):
    hs = list(hs)
    w = np.asarray(weights, dtype=float)
    if not hs or len(hs) != len(w):
        raise DomainError("need one weight per hypothesis")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise DomainError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
    arch = hs[0].arch
    if any(h.arch != arch for h in hs):
        raise DomainError("cannot combine hypotheses with different architectures")
    if mode == "output":
        return OutputAverage(hs, w)
    if mode != "params":
        raise DomainError(f"unknown combine mode {mode!r}")
    return Hypothesis(arch, np.einsum("k,kp->p", w, np.stack([h.params for h in hs])))


def accuracy(h, data, ground_truth):
    ground_truth = np.asarray(ground_truth)
    if len(data) == 0:
        raise DomainError("empty dataset")
    if len(ground_truth) != len(data):
        raise DomainError("ground_truth length must equal dataset size")
    return float(np.mean(h.predict(data.features) == ground_truth))
