"""Measurable generalization-bound terms for sources and source-target pairs."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UsageError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundConfig:
    delta: float = 0.05
    include_hypothesis_coupling: bool = False
    include_label_fn_gap: bool = False

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")


def rad_bound(n):
    """Massart bound on the empirical Rademacher complexity of a binary class."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return math.sqrt(2.0 * math.log(n) / n)


def confidence_term(n, delta):
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def source_cost(emp_err, n, cfg=BoundConfig()):
    if not 0 <= emp_err <= 1:
        raise DomainError("emp_err must lie in [0, 1]")
    if n < 1:
        raise DomainError("n must be >= 1")
    return emp_err + 2.0 * rad_bound(n) + 3.0 * confidence_term(n, cfg.delta)


def _transfer_parts(emp_err_i, n_i, n_j, d_hat_raw, delta):
    return {
        "empirical_error": emp_err_i,
        "source_rademacher": 4.0 * rad_bound(n_i),
        "source_confidence": 6.0 * confidence_term(n_i, delta),
        "divergence": 0.5 * d_hat_raw,
        "target_rademacher": 6.0 * rad_bound(n_j),
        "target_confidence": 6.0 * confidence_term(n_j, delta),
    }


def transfer_cost(i, j, emp_err_i, n_i, n_j, d_hat_raw, coupling=None, cfg=BoundConfig(), label_fn_gap=None):
    """Bound on target ``j``'s error contributed by source ``i``."""
    if not 0 <= d_hat_raw <= 2:
        raise DomainError("d_hat_raw must lie in [0, 2]")
    if not 0 <= emp_err_i <= 1:
        raise DomainError("emp_err_i must lie in [0, 1]")
    if n_i < 1 or n_j < 1:
        raise DomainError("dataset sizes must be >= 1")
    if coupling is not None and not cfg.include_hypothesis_coupling:
        raise UsageError("coupling supplied while include_hypothesis_coupling is off")
    if label_fn_gap is not None and not cfg.include_label_fn_gap:
        raise UsageError("label_fn_gap supplied while include_label_fn_gap is off")
    total = sum(_transfer_parts(emp_err_i, n_i, n_j, d_hat_raw, cfg.delta).values())
    if coupling is not None:
        total += coupling
    if label_fn_gap is not None:
        total += label_fn_gap
    return total


@dataclass
class BoundTerms:
    S: np.ndarray
    T_hat: np.ndarray
    components: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.S)

    def to_dict(self):
        return {
            "S": self.S.tolist(),
            "T_hat": self.T_hat.tolist(),
            "components": {k: np.asarray(v).tolist() for k, v in self.components.items()},
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def assemble(sizes, div, emp_errs, cfg=BoundConfig(), coupling=None, label_fn_gap=None):
    """Fill S and T_hat (row = source, column = target) for every device.

    ``sizes`` may be a Scenario or a sequence of dataset sizes. ``div`` is a
    DivergenceMatrix; normalized matrices are rescaled to raw before use.
    ``coupling`` / ``label_fn_gap`` are optional N x N additive terms gated by
    the matching config flags.
    """
    if hasattr(sizes, "sizes"):
        sizes = sizes.sizes
    sizes = np.asarray(sizes, dtype=int)
    emp_errs = np.asarray(emp_errs, dtype=float)
    n = len(sizes)
    if len(emp_errs) != n or div.values.shape != (n, n):
        raise DomainError("dimension mismatch between sizes, errors and divergences")
    if div.scale != "raw_0_2":
        log.info("rescaling normalized divergence matrix to raw scale for assembly")
    d_raw = div.raw()
    if coupling is not None and not cfg.include_hypothesis_coupling:
        raise UsageError("coupling supplied while include_hypothesis_coupling is off")

    S = np.array([source_cost(emp_errs[i], sizes[i], cfg) for i in range(n)])
    parts = {k: np.zeros((n, n)) for k in _transfer_parts(0.0, 1, 1, 0.0, cfg.delta)}
    for i in range(n):
        for j in range(n):
            for k, v in _transfer_parts(emp_errs[i], sizes[i], sizes[j], d_raw[i, j], cfg.delta).items():
                parts[k][i, j] = v
    T_hat = sum(parts.values())
    if cfg.include_hypothesis_coupling and coupling is not None:
        parts["coupling"] = np.asarray(coupling, dtype=float)
        T_hat = T_hat + parts["coupling"]
    if cfg.include_label_fn_gap and label_fn_gap is not None:
        parts["label_fn_gap"] = np.asarray(label_fn_gap, dtype=float)
        T_hat = T_hat + parts["label_fn_gap"]
    components = {
        "source_empirical_error": emp_errs,
        "source_rademacher": np.array([2.0 * rad_bound(s) for s in sizes]),
        "source_confidence": np.array([3.0 * confidence_term(s, cfg.delta) for s in sizes]),
        **{f"transfer_{k}": v for k, v in parts.items()},
    }
    return BoundTerms(S, T_hat, components)
