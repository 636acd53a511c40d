"""Heuristic link plans to compare the optimizer against.

Every baseline returns a ``LinkPlan`` obeying the same invariants as the
solver's: only sources send, and each target's incoming weights sum to 1.
Ties are broken toward the lowest device index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePlanError, UsageError
from .gpsolver.solver import LinkPlan, check_plan, exact_unit_columns
from .scenario import make_rng

NAMES = ("random_alpha", "fedavg_alpha", "avg_degree", "random_psi", "psi_fedavg", "single_matching")
PSI_SOURCES = ("from_stlf", "heuristic_labeled", "random")
DEFAULT_PSI = {
    "random_alpha": "from_stlf",
    "fedavg_alpha": "from_stlf",
    "avg_degree": "from_stlf",
    "random_psi": "random",
    "psi_fedavg": "heuristic_labeled",
    "single_matching": "from_stlf",
}
LINK_THRESHOLD = 1e-3
_BASELINE_STREAM = 53


@dataclass(frozen=True)
class BaselineSpec:
    name: str
    seed: int = 0
    psi_source: str | None = None

    def __post_init__(self):
        if self.name not in NAMES:
            raise UsageError(f"unknown baseline {self.name!r}; choose from {NAMES}")
        if self.psi_source is None:
            object.__setattr__(self, "psi_source", DEFAULT_PSI[self.name])
        if self.psi_source not in PSI_SOURCES:
            raise UsageError(f"unknown psi_source {self.psi_source!r}")
        if self.seed < 0:
            raise UsageError("seed must be nonnegative")


def _labeled_counts(scenario):
    return np.array([d.num_labeled for d in scenario.devices])


def assign_psi(spec, scenario, reference, rng):
    """True marks a target."""
    labeled = _labeled_counts(scenario) > 0
    if spec.psi_source == "from_stlf":
        if reference is None:
            raise UsageError(f"{spec.name} with psi_source=from_stlf needs a reference plan")
        return np.asarray(reference.psi_binary, dtype=bool).copy()
    if not labeled.any():
        raise DegeneratePlanError("no device holds labeled data")
    if spec.psi_source == "heuristic_labeled":
        return ~labeled
    # a device without labels has nothing to train on, so only labeled ones are drawn
    while True:
        psi = ~labeled | (rng.random(len(labeled)) < 0.5)
        if (~psi).any():
            return psi


def _dirichlet_columns(psi, rng):
    n = len(psi)
    src = np.flatnonzero(~psi)
    a = np.zeros((n, n))
    for j in np.flatnonzero(psi):
        a[src, j] = rng.dirichlet(np.ones(len(src)))
    return a


def _fedavg_columns(psi, counts):
    n = len(psi)
    src = np.flatnonzero(~psi)
    w = counts[src].astype(float)
    if w.sum() == 0:
        w = np.ones(len(src))
    a = np.zeros((n, n))
    for j in np.flatnonzero(psi):
        a[src, j] = w / w.sum()
    return a


def _avg_degree_columns(psi, reference, rng):
    n = len(psi)
    src = np.flatnonzero(~psi)
    tgt = np.flatnonzero(psi)
    a = np.zeros((n, n))
    if len(tgt) == 0:
        return a
    total = len([1 for (i, j) in reference.active_links if psi[j] and not psi[i]])
    total = min(max(total, len(tgt)), len(src) * len(tgt))
    deg = np.full(len(src), total // len(src))
    order = rng.permutation(len(src))
    deg[order[: total % len(src)]] += 1
    # consecutive slots of one source land on distinct targets because deg <= |T|,
    # and total >= |T| covers every target at least once
    perm = rng.permutation(tgt)
    k = 0
    for s in order:
        for _ in range(deg[s]):
            a[src[s], perm[k % len(tgt)]] = 1.0
            k += 1
    for j in tgt:
        rows = np.flatnonzero(a[:, j])
        a[rows, j] = rng.dirichlet(np.ones(len(rows)))
    return a


def _single_matching_columns(psi, div):
    n = len(psi)
    src = np.flatnonzero(~psi)
    d = div.raw() if hasattr(div, "raw") else np.asarray(div, dtype=float)
    a = np.zeros((n, n))
    for j in np.flatnonzero(psi):
        a[src[np.argmin(d[src, j])], j] = 1.0  # argmin keeps the lowest index on ties
    return a


def _exact_columns(a, psi):
    for j in np.flatnonzero(psi):
        a[:, j] /= a[:, j].sum()
    return exact_unit_columns(a, np.flatnonzero(psi))


def run_baseline(spec, scenario, div, reference=None):
    if spec.name == "avg_degree" and reference is None:
        raise UsageError("avg_degree needs a reference plan")
    rng = make_rng(spec.seed, _BASELINE_STREAM, NAMES.index(spec.name))
    psi = assign_psi(spec, scenario, reference, rng)
    if psi.all():
        raise DegeneratePlanError("baseline psi has no source")
    if spec.name in ("random_alpha", "random_psi"):
        a = _dirichlet_columns(psi, rng)
    elif spec.name in ("fedavg_alpha", "psi_fedavg"):
        a = _fedavg_columns(psi, _labeled_counts(scenario))
    elif spec.name == "avg_degree":
        a = _avg_degree_columns(psi, reference, rng)
    else:
        a = _single_matching_columns(psi, div)
    a = _exact_columns(a, psi)
    active = {(int(i), int(j)) for i, j in zip(*np.nonzero(a > LINK_THRESHOLD))}
    plan = LinkPlan(psi, a, active, [])
    check_plan(plan)
    return plan
