"""Pairwise domain-divergence estimation without moving raw data.

Two devices jointly train a binary domain classifier: device ``i`` labels its
samples 0, device ``j`` labels its samples 1, each trains locally, and the
two parameter vectors are averaged after every round. The averaged classifier's
balanced held-out error ``err`` gives the proxy estimate
``2 * (1 - 2 * min(err, 1 - err))`` in [0, 2].
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ProtocolError
from .hypothesis import Arch, Hypothesis, TrainConfig, train
from .scenario import DeviceDataset, make_rng

RAW = "raw_0_2"
NORMALIZED = "normalized_0_1"
_SCALE_MAX = {RAW: 2.0, NORMALIZED: 1.0}


@dataclass
class DivergenceConfig:
    local_iters: int = 20
    rounds: int = 10
    train: TrainConfig = field(default_factory=lambda: TrainConfig(iterations=20, batch_size=10, learning_rate=0.05))
    holdout_fraction: float = 0.2
    hidden_dim: int = 0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if self.rounds < 1 or self.local_iters < 1:
            raise DomainError("rounds and local_iters must be >= 1")
        if not 0 < self.holdout_fraction < 1:
            raise DomainError("holdout_fraction must lie in (0, 1)")


@dataclass
class DivergenceMatrix:
    values: np.ndarray
    scale: str = RAW

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.scale not in _SCALE_MAX:
            raise DomainError(f"unknown scale {self.scale!r}")

    @property
    def n(self):
        return self.values.shape[0]

    def raw(self):
        return self.values.copy() if self.scale == RAW else 2.0 * self.values

    def normalized(self):
        return self.values.copy() if self.scale == NORMALIZED else self.values / 2.0

    def to_csv(self, path=None):
        buf = io.StringIO()
        np.savetxt(buf, self.values, delimiter=",", fmt="%.6f")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, scale=NORMALIZED):
        return inject(np.loadtxt(path, delimiter=",", ndmin=2), scale)


class _Party:
    """One device's side of the protocol. Its public methods only ever return
    parameter vectors or scalar error rates; features stay inside."""

    def __init__(self, data, domain_label, holdout_fraction, rng):
        n = len(data)
        n_hold = int(round(holdout_fraction * n))
        if n_hold < 1 or n - n_hold < 1:
            raise ProtocolError(f"holdout split of {n} samples leaves an empty part")
        perm = rng.permutation(n)
        self._train_x = data.features[perm[n_hold:]]
        self._hold_x = data.features[perm[:n_hold]]
        self._label = domain_label

    def local_train(self, hyp, cfg):
        labels = np.full(len(self._train_x), self._label, dtype=np.int64)
        return train(hyp, DeviceDataset(self._train_x, labels), cfg).params

    def holdout_error(self, hyp):
        return float(np.mean(hyp.predict(self._hold_x) != self._label))


def proxy_distance(err):
    err = min(err, 1.0 - err)
    return 2.0 * (1.0 - 2.0 * err)


def estimate_pair(a, b, cfg, seed=None, audit=None):
    """Raw-scale divergence between the datasets of two devices.

    ``audit``, when given, is called with every message that crosses the
    device boundary.
    """
    if len(a) == 0 or len(b) == 0:
        raise DomainError("both datasets must be nonempty")
    if a.features.shape[1] != b.features.shape[1]:
        raise DomainError("feature dimensions differ")
    seed = cfg.seed if seed is None else seed
    rng = make_rng(seed, 0)
    party_a = _Party(a, 0, cfg.holdout_fraction, make_rng(seed, 1))
    party_b = _Party(b, 1, cfg.holdout_fraction, make_rng(seed, 2))
    send = audit if audit is not None else (lambda msg: None)

    arch = Arch(a.features.shape[1], cfg.hidden_dim, 2)
    shared = Hypothesis.init(arch, seed=int(rng.integers(2**31)))
    for r in range(cfg.rounds):
        tcfg = TrainConfig(cfg.local_iters, cfg.train.batch_size, cfg.train.learning_rate,
                           int(rng.integers(2**31)))
        pa = party_a.local_train(shared, tcfg)
        pb = party_b.local_train(shared, TrainConfig(tcfg.iterations, tcfg.batch_size,
                                                     tcfg.learning_rate, tcfg.seed + 1))
        send(pa)
        send(pb)
        shared = Hypothesis(arch, (pa + pb) / 2.0)
    err_a = party_a.holdout_error(shared)
    err_b = party_b.holdout_error(shared)
    send(err_a)
    send(err_b)
    return proxy_distance(0.5 * (err_a + err_b))


def estimate_all(scenario, cfg, seed=None):
    """Fill the raw-scale divergence matrix, one protocol run per unordered pair."""
    n = scenario.num_devices
    if n < 2:
        raise DomainError("need at least two devices")
    base = scenario.seed if seed is None else seed
    vals = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            pair_seed = int(np.random.SeedSequence([int(base), cfg.seed, i, j]).generate_state(1)[0])
            vals[i, j] = vals[j, i] = estimate_pair(scenario.devices[i], scenario.devices[j], cfg, pair_seed)
    return DivergenceMatrix(vals, RAW)


def inject(matrix, scale=NORMALIZED):
    """Wrap a hand-specified symmetric divergence matrix; the diagonal is zeroed."""
    m = np.array(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError("divergence matrix must be square")
    if scale not in _SCALE_MAX:
        raise DomainError(f"unknown scale {scale!r}")
    if np.max(np.abs(m - m.T)) > 1e-12:
        raise DomainError("divergence matrix is not symmetric")
    if np.any(m < 0) or np.any(m > _SCALE_MAX[scale]):
        raise DomainError(f"entries must lie in [0, {_SCALE_MAX[scale]}]")
    np.fill_diagonal(m, 0.0)
    return DivergenceMatrix(m, scale)


def regime_matrix(kind, n, seed=0):
    """Normalized-scale matrices for the uniform / extreme / random regimes."""
    if kind == "uniform":
        m = np.ones((n, n))
    elif kind == "extreme":
        m = np.ones((n, n))
        m[0, :] = 0.0
        m[:, 0] = 0.0
    elif kind == "random":
        rng = make_rng(seed, 97)
        u = rng.uniform(0.0, 1.0, size=(n, n))
        m = np.triu(u, 1)
        m = m + m.T
    else:
        raise DomainError(f"unknown regime {kind!r}")
    return inject(m, NORMALIZED)
