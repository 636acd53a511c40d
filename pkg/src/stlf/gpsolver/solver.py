"""Source/target selection and link weights by successive convex approximation.

The relaxed problem keeps psi continuous in [eps_lo, 1]. Every iteration
condenses the posynomial denominators at the current point, solves the
resulting GP in log space, and moves to its solution. Afterwards psi is
rounded at 0.5 and the link weights are re-solved with psi fixed.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from ..errors import DegeneratePlanError, DomainError, SubproblemFailure
from .convex import SubproblemConfig, log_transform, solve_subproblem
from .posynomial import Monomial, Posynomial, ag_condense, as_posynomial, monomial

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    phi_s: float = 1.0
    phi_t: float = 50.0
    phi_e: float = 1.0
    eps_E: float = 1e-3
    eps_C: float = 1e-2
    eps_lo: float = 1e-6
    outer_tol: float = 1e-4
    max_outer_iters: int = 50
    subproblem: SubproblemConfig = field(default_factory=SubproblemConfig)
    coupling_mode: bool = False
    rng_seed: int = 0
    link_threshold: float = 1e-3
    chi_cap: float = 1e3
    # "gated": a link pays its full target-error cost and alpha_ij <= 1 - psi_i
    # stops targets from sending. "literal": the (1 - psi_i) factor stays in the
    # link cost and there is no gate; its relaxation drifts to all-target.
    relaxation: str = "gated"
    # try a longer step along each SCA move; accepted only if feasible and better
    extrapolate: bool = True
    # finish each rounded column with first-order descent on the exact cost;
    # a column whose active gradients agree within polish_tol (relative) is kept
    polish: bool = True
    polish_tol: float = 1e-3

    def __post_init__(self):
        if isinstance(self.subproblem, dict):
            self.subproblem = SubproblemConfig(**self.subproblem)
        if min(self.phi_s, self.phi_t, self.phi_e) < 0:
            raise DomainError("phi weights must be nonnegative")
        if not 0 < self.eps_lo < self.eps_C:
            raise DomainError("need 0 < eps_lo < eps_C")
        if self.eps_E <= 0 or self.outer_tol <= 0:
            raise DomainError("eps_E and outer_tol must be positive")
        if self.relaxation not in ("gated", "literal"):
            raise DomainError("relaxation must be 'gated' or 'literal'")
        if self.max_outer_iters < 1:
            raise DomainError("max_outer_iters must be >= 1")
        if self.polish_tol <= 0:
            raise DomainError("polish_tol must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)

    @property
    def tau(self):
        """psi value used for a target whose role is fixed; keeps its column band around 1."""
        return 1.0 - self.eps_C


@dataclass
class IterateState:
    psi: np.ndarray
    alpha: np.ndarray
    chi_s: np.ndarray
    chi_t: np.ndarray
    chi_c_tilde: np.ndarray
    chi_hat: np.ndarray | None = None
    objective_value: float = math.nan
    outer_iter: int = 0
    point: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return len(self.psi)


@dataclass
class GpSubproblem:
    objective: Posynomial
    inequality_constraints: list
    variable_index: dict
    expansion_point: IterateState
    fractions: list = field(default_factory=list, repr=False)
    labels: list = field(default_factory=list, repr=False)


@dataclass
class LinkPlan:
    psi_binary: np.ndarray
    alpha: np.ndarray
    active_links: set
    objective_trace: list
    relaxed: IterateState | None = None
    resolve_trace: list = field(default_factory=list)
    column_sums_before_renorm: np.ndarray | None = None
    objective_value: float = math.nan
    trace_records: list = field(default_factory=list, repr=False)

    @property
    def sources(self):
        return np.flatnonzero(~self.psi_binary)

    @property
    def targets(self):
        return np.flatnonzero(self.psi_binary)

    def psi_csv(self, path=None):
        text = "\n".join("true" if b else "false" for b in self.psi_binary) + "\n"
        return _maybe_write(text, path)

    def alpha_csv(self, path=None):
        buf = io.StringIO()
        np.savetxt(buf, self.alpha, delimiter=",", fmt="%.6f")
        return _maybe_write(buf.getvalue(), path)

    def trace_jsonl(self, path=None):
        text = "".join(json.dumps(r) + "\n" for r in self.trace_records)
        return _maybe_write(text, path)


def _maybe_write(text, path):
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def read_psi_csv(path):
    with open(path) as fh:
        return np.array([row[0].strip().lower() == "true" for row in csv.reader(fh) if row])


def check_plan(plan, tol=1e-12):
    """Raise DegeneratePlanError unless the plan satisfies the link-plan invariants."""
    psi = np.asarray(plan.psi_binary, dtype=bool)
    a = np.asarray(plan.alpha, dtype=float)
    n = len(psi)
    if a.shape != (n, n):
        raise DegeneratePlanError("alpha shape does not match psi")
    if np.any(a < 0):
        raise DegeneratePlanError("negative link weight")
    if np.any(a[psi, :] != 0):
        raise DegeneratePlanError("a target sends a model")
    sums = a.sum(axis=0)
    if np.any(np.abs(sums[psi] - 1.0) > tol) or np.any(sums[~psi] != 0):
        raise DegeneratePlanError("column sums must be 1 for targets and 0 for sources")
    if psi.all():
        raise DegeneratePlanError("plan has no source")


def link_energy(alpha, K, eps_E):
    alpha = np.asarray(alpha, dtype=float)
    return np.asarray(K) * alpha / (alpha + eps_E)


def original_objective(psi_binary, alpha, S, T_hat, K, cfg, coupling=None):
    """Weighted source-error, target-error and energy objective at a binary plan."""
    psi = np.asarray(psi_binary, dtype=float)
    a = np.asarray(alpha, dtype=float)
    src = 1.0 - psi
    term_c = float(np.sum(src * S))
    gate = np.outer(src, psi) * a
    T = np.asarray(T_hat, dtype=float)
    if coupling is not None:
        # extra[i, j] = sum_k gate[k, j] * coupling[i, j, k]
        T = T + np.einsum("kj,ijk->ij", gate, coupling)
    term_d = float(np.sum(gate * T))
    term_e = float(np.sum(link_energy(a, K, cfg.eps_E)))
    return cfg.phi_s * term_c + cfg.phi_t * term_d + cfg.phi_e * term_e


class _Structure:
    """Which psi are free or fixed and which links are variables."""

    def __init__(self, n, eligible, fixed_psi, cfg, coupling=None):
        self.n = n
        self.cfg = cfg
        self.eligible = np.asarray(eligible, dtype=bool)
        self.fixed = dict(fixed_psi)
        for i in range(n):
            if not eligible[i]:
                self.fixed.setdefault(i, cfg.tau)
        while True:
            senders = [i for i in range(n) if self.fixed.get(i, 0.0) == 0.0 or i not in self.fixed]
            senders = [i for i in senders if not (i in self.fixed and self.fixed[i] > 0)]
            cols = {j: [i for i in senders if i != j] for j in range(n)
                    if not (j in self.fixed and self.fixed[j] == 0.0)}
            empty = [j for j, c in cols.items() if not c]
            if not empty:
                break
            for j in empty:
                if j in self.fixed:
                    raise DegeneratePlanError(f"device {j} must be a target but no device can send to it")
                self.fixed[j] = 0.0
        self.senders = senders
        self.cols = cols
        self.pairs = [(i, j) for j, c in cols.items() for i in c]
        self.free = [i for i in range(n) if i not in self.fixed]
        self.coupling = coupling
        self.gated = cfg.relaxation == "gated"
        self.triples = []
        if coupling is not None:
            for (i, j) in self.pairs:
                for k in cols[j]:
                    if k != i and coupling[i, j, k] > 0:
                        self.triples.append((i, j, k))

    def psi(self, i):
        if i in self.fixed:
            return Monomial(self.fixed[i])
        return monomial(("psi", i))

    def variables(self):
        keys = [("psi", i) for i in self.free]
        keys += [("alpha", i, j) for (i, j) in self.pairs]
        keys += [("chi_s", i) for i in self.senders]
        keys += [("chi_t", i, j) for (i, j) in self.pairs]
        keys += [("chi_c", i, j) for j in self.cols for i in range(self.n)]
        keys += [("chi_hat", i, j, k) for (i, j, k) in self.triples]
        return keys


def _fractions(st, S, T_hat, K, cfg):
    """Constraints as (numerator, denominator) posynomial pairs, objective pieces, and labels.

    A pair means numerator / denominator <= 1; denominators with several terms
    are the ones that need condensing.
    """
    fr, labels = [], []
    v = monomial
    for i in st.senders:
        F = st.psi(i) + v(("chi_s", i)) / S[i]
        fr.append((as_posynomial(1.0), as_posynomial(F)))
        labels.append(("F", i))
    for (i, j) in st.pairs:
        extra = Posynomial([v(("chi_hat", i, j, k)) for (a, b, k) in st.triples if a == i and b == j])
        num = as_posynomial(T_hat[i, j]) + extra
        den = as_posynomial(v(("chi_t", i, j)) * st.psi(j) ** -1 * v(("alpha", i, j)) ** -1)
        if not st.gated:
            den = st.psi(i) * num + den
        fr.append((num, den))
        labels.append(("H", i, j))
    for (i, j, k) in st.triples:
        G = v(("chi_hat", i, j, k)) * (st.psi(j) * v(("alpha", k, j)) * st.coupling[i, j, k]) ** -1
        if not st.gated:
            G = st.psi(k) + G
        fr.append((as_posynomial(1.0), as_posynomial(G)))
        labels.append(("G", i, j, k))
    for j, c in st.cols.items():
        col = Posynomial([v(("alpha", i, j)) for i in c])
        for i in range(st.n):
            chi = v(("chi_c", i, j))
            fr.append((col, chi + 2.0 * cfg.eps_C + st.psi(j)))
            labels.append(("M+", i, j))
            fr.append((chi + st.psi(j), col))
            labels.append(("M-", i, j))
    # monomial boxes and the gate that stops a target from forwarding
    lo, cap = cfg.eps_lo, cfg.chi_cap
    one = as_posynomial(1.0)
    for key in st.variables():
        x = v(key)
        fr.append((as_posynomial(Monomial(lo)), as_posynomial(x)))
        labels.append(("lo",) + key)
        if key[0] in ("psi", "alpha"):
            fr.append((as_posynomial(x), one))
        else:
            fr.append((as_posynomial(x / cap), one))
        labels.append(("hi",) + key)
    for (i, j) in st.pairs:
        if st.gated and i not in st.fixed:
            fr.append((v(("alpha", i, j)) + v(("psi", i)), one))
            labels.append(("gate", i, j))
    return fr, labels


def _objective_pieces(st, K, cfg):
    """(linear posynomial part, energy links) of the relaxed objective."""
    v = monomial
    lin = Posynomial()
    if cfg.phi_s > 0:
        lin = lin + Posynomial([v(("chi_s", i), coef=cfg.phi_s) for i in st.senders])
    if cfg.phi_t > 0:
        lin = lin + Posynomial([v(("chi_t", i, j), coef=cfg.phi_t) for (i, j) in st.pairs])
    lin = lin + Posynomial([v(("chi_c", i, j)) for j in st.cols for i in range(st.n)])
    energy = [(i, j, cfg.phi_e * K[i, j]) for (i, j) in st.pairs if cfg.phi_e > 0 and K[i, j] > 0]
    return lin, energy


def relaxed_objective(point, st, K, cfg):
    lin, energy = _objective_pieces(st, K, cfg)
    val = lin(point)
    for i, j, c in energy:
        a = point[("alpha", i, j)]
        val += c * a / (a + cfg.eps_E)
    return float(val)


def max_violation(point, fractions):
    worst = 0.0
    for num, den in fractions:
        worst = max(worst, num(point) / den(point) - 1.0)
    return float(worst)


def _state(point, st, K, cfg, outer_iter):
    n = st.n
    psi = np.array([st.fixed[i] if i in st.fixed else point[("psi", i)] for i in range(n)])
    alpha = np.zeros((n, n))
    chi_t = np.zeros((n, n))
    for (i, j) in st.pairs:
        alpha[i, j] = point[("alpha", i, j)]
        chi_t[i, j] = point[("chi_t", i, j)]
    chi_s = np.zeros(n)
    for i in st.senders:
        chi_s[i] = point[("chi_s", i)]
    chi_c = np.zeros((n, n))
    for j in st.cols:
        for i in range(n):
            chi_c[i, j] = point[("chi_c", i, j)]
    chi_hat = None
    if st.coupling is not None:
        chi_hat = np.zeros((n, n, n))
        for (i, j, k) in st.triples:
            chi_hat[i, j, k] = point[("chi_hat", i, j, k)]
    return IterateState(psi, alpha, chi_s, chi_t, chi_c, chi_hat,
                        relaxed_objective(point, st, K, cfg), outer_iter, dict(point))


def build_subproblem(bounds, K, prev, cfg, structure=None, coupling=None):
    """Condense every multi-term denominator at ``prev`` and return the GP."""
    st = structure
    if st is None:
        st = _Structure(bounds.n, _eligible(bounds), {}, cfg, coupling if cfg.coupling_mode else None)
    point = prev.point if prev.point else _point_from_arrays(prev, st)
    for key, val in point.items():
        if not val > 0 or not math.isfinite(val):
            raise DomainError(f"expansion point is not strictly positive at {key!r}")
    K = np.asarray(K, dtype=float)
    fr, labels = _fractions(st, bounds.S, bounds.T_hat, K, cfg)
    cons = []
    for num, den in fr:
        dhat = den.terms[0] if len(den) == 1 else ag_condense(den, point)
        cons.append(num / dhat)
    lin, energy = _objective_pieces(st, K, cfg)
    obj = lin
    for i, j, c in energy:
        a = monomial(("alpha", i, j))
        J = ag_condense(a + cfg.eps_E, point)
        obj = obj + (a * c) / J
    index = {key: col for col, key in enumerate(st.variables())}
    return GpSubproblem(obj, cons, index, prev, fr, labels)


def _point_from_arrays(state, st):
    point = {}
    for i in st.free:
        point[("psi", i)] = float(state.psi[i])
    for (i, j) in st.pairs:
        point[("alpha", i, j)] = float(state.alpha[i, j])
        point[("chi_t", i, j)] = float(state.chi_t[i, j])
    for i in st.senders:
        point[("chi_s", i)] = float(state.chi_s[i])
    for j in st.cols:
        for i in range(st.n):
            point[("chi_c", i, j)] = float(state.chi_c_tilde[i, j])
    for (i, j, k) in st.triples:
        point[("chi_hat", i, j, k)] = float(state.chi_hat[i, j, k])
    return point


def _eligible(bounds):
    errs = bounds.components.get("source_empirical_error")
    if errs is None:
        return np.ones(bounds.n, dtype=bool)
    return np.asarray(errs) < 1.0


def initial_point(st, S, T_hat, alpha_hint=None, psi_hint=None):
    """Strictly feasible start: every auxiliary inequality holds with 10% slack."""
    cfg = st.cfg
    n = st.n
    chi_c0 = 1e-3
    psi = {i: (0.5 if psi_hint is None else float(np.clip(psi_hint[i], 0.05, 0.95))) for i in st.free}

    def psi_of(i):
        return st.fixed[i] if i in st.fixed else psi[i]

    def sends(i):
        return 1.0 if st.gated else 1.0 - psi_of(i)

    alpha = {}
    for _ in range(n + 2):
        for j, c in st.cols.items():
            s = psi_of(j) + chi_c0 + 0.5 * cfg.eps_C
            if alpha_hint is None:
                w = np.ones(len(c))
            else:
                w = np.array([alpha_hint[i, j] for i in c]) + 1e-2
            w = w / w.sum()
            for i, wi in zip(c, w):
                alpha[(i, j)] = s * wi
        changed = False
        for i in st.free if st.gated else ():
            mx = max((alpha[(i, j)] for j in st.cols if (i, j) in alpha), default=0.0)
            cap = 0.5 * (1.0 - mx)
            if psi[i] > cap:
                psi[i] = cap
                changed = True
        if not changed:
            break
    point = {("psi", i): psi[i] for i in st.free}
    for (i, j), a in alpha.items():
        point[("alpha", i, j)] = a
    for i in st.senders:
        point[("chi_s", i)] = max(1.1 * (1.0 - psi_of(i)) * S[i], 10 * cfg.eps_lo)
    for (i, j, k) in st.triples:
        point[("chi_hat", i, j, k)] = max(1.1 * sends(k) * psi_of(j) * alpha[(k, j)]
                                          * st.coupling[i, j, k], 10 * cfg.eps_lo)
    for (i, j) in st.pairs:
        extra = sum(point[("chi_hat", a, b, k)] for (a, b, k) in st.triples if a == i and b == j)
        point[("chi_t", i, j)] = max(1.1 * sends(i) * psi_of(j) * alpha[(i, j)]
                                     * (T_hat[i, j] + extra), 10 * cfg.eps_lo)
    for j in st.cols:
        for i in range(n):
            point[("chi_c", i, j)] = chi_c0
    return point


def _sca(st, bounds, K, cfg, point, stage):
    """Run the condense/solve loop from a strictly feasible point."""
    trace = [relaxed_objective(point, st, K, cfg)]
    records = []
    state = _state(point, st, K, cfg, 0)
    fr, _ = _fractions(st, bounds.S, bounds.T_hat, K, cfg)
    records.append(_record(stage, 0, trace[-1], max_violation(point, fr), state.psi))
    for it in range(1, cfg.max_outer_iters + 1):
        sub = build_subproblem(bounds, K, state, cfg, structure=st)
        prog = log_transform(sub)
        keys = list(sub.variable_index)
        z0 = np.log([point[k] for k in keys])
        try:
            res = solve_subproblem(prog, z0, cfg.subproblem)
            z = res.z
        except SubproblemFailure as exc:
            log.warning("subproblem failed at outer iteration %d: %s", it, exc)
            break
        cand = {k: float(math.exp(zi)) for k, zi in zip(keys, z)}
        val = relaxed_objective(cand, st, K, cfg)
        prev = trace[-1]
        if not val <= prev:
            # condensation guarantees descent up to the barrier gap; keep the old point
            break
        if cfg.extrapolate:
            cand, val = _extrapolate(st, bounds, K, cfg, point, cand, val, fr)
        point = cand
        trace.append(val)
        state = _state(point, st, K, cfg, it)
        records.append(_record(stage, it, val, max_violation(point, fr), state.psi))
        if abs(val - prev) / max(1.0, abs(prev)) < cfg.outer_tol:
            break
    return state, trace, records


def _tight_aux(core, st, S, T_hat, cfg, slack=1e-9):
    """Smallest auxiliary values (plus a relative slack) that satisfy their defining inequalities."""
    point = dict(core)
    up = 1.0 + slack

    def psi_of(i):
        return st.fixed[i] if i in st.fixed else core[("psi", i)]

    def sends(i):
        return 1.0 if st.gated else 1.0 - psi_of(i)

    for i in st.senders:
        point[("chi_s", i)] = max((1.0 - psi_of(i)) * S[i] * up, cfg.eps_lo * up)
    extra = {}
    for (i, j, k) in st.triples:
        v = max(sends(k) * psi_of(j) * core[("alpha", k, j)] * st.coupling[i, j, k] * up, cfg.eps_lo * up)
        point[("chi_hat", i, j, k)] = v
        extra[(i, j)] = extra.get((i, j), 0.0) + v
    for (i, j) in st.pairs:
        point[("chi_t", i, j)] = max(sends(i) * psi_of(j) * core[("alpha", i, j)]
                                     * (T_hat[i, j] + extra.get((i, j), 0.0)) * up, cfg.eps_lo * up)
    for j, c in st.cols.items():
        gap = sum(core[("alpha", i, j)] for i in c) - psi_of(j)
        # the band needs gap - 2 eps_C <= chi_c <= gap; sit just above its floor
        v = max(cfg.eps_lo * up, gap - 2.0 * cfg.eps_C + slack)
        for i in range(st.n):
            point[("chi_c", i, j)] = v
    return point


def _extrapolate(st, bounds, K, cfg, prev, new, new_val, fr, factors=(16.0, 8.0, 4.0, 2.0)):
    """Push the psi/alpha move further along its log-space direction when that stays
    strictly feasible and lowers the relaxed objective; otherwise keep ``new``."""
    core_keys = [k for k in new if k[0] in ("psi", "alpha")]
    lo, hi = np.log(cfg.eps_lo) + 1e-9, -1e-12
    best, best_val = new, new_val
    for g in factors:
        core = {}
        for k in core_keys:
            z = math.log(prev[k]) + g * (math.log(new[k]) - math.log(prev[k]))
            core[k] = math.exp(min(max(z, lo), hi))
        cand = _tight_aux(core, st, bounds.S, bounds.T_hat, cfg)
        if max_violation(cand, fr) > 0.0 or not _strict(cand, fr):
            continue
        val = relaxed_objective(cand, st, K, cfg)
        if val < best_val:
            best, best_val = cand, val
            break
    return best, best_val


def _strict(point, fractions):
    return all(num(point) < den(point) for num, den in fractions)


def _record(stage, it, obj, viol, psi):
    return {"stage": stage, "outer_iter": it, "objective": obj,
            "max_constraint_violation": viol, "psi_snapshot": [float(p) for p in psi]}


def relax(bounds, K, cfg=None, init=None, eligible=None, coupling=None):
    """Run the relaxed SCA only. Returns (state, trace, records, structure).

    ``eligible`` marks devices that hold labeled data and may act as sources;
    by default a device is eligible when its empirical error is below 1.
    ``coupling[i, j, k]`` (coupling mode only) is the disagreement of source
    hypotheses i and k measured on target j's data.
    """
    cfg = cfg or SolverConfig()
    n = bounds.n
    K = np.asarray(K, dtype=float)
    if K.shape != (n, n):
        raise DomainError("energy matrix shape does not match bounds")
    eligible = _eligible(bounds) if eligible is None else np.asarray(eligible, dtype=bool)
    if not eligible.any():
        raise DegeneratePlanError("no device holds labeled data, so no device can be a source")
    if cfg.coupling_mode and coupling is None:
        coupling = np.zeros((n, n, n))
    st = _Structure(n, eligible, {}, cfg, np.asarray(coupling) if cfg.coupling_mode else None)
    if init is None:
        point = initial_point(st, bounds.S, bounds.T_hat)
    else:
        point = dict(init.point) if init.point else _point_from_arrays(init, st)
    relaxed, trace, records = _sca(st, bounds, K, cfg, point, "relaxed")
    return relaxed, trace, records, st


def solve(bounds, K, cfg=None, init=None, eligible=None, coupling=None):
    """Relaxed SCA, rounding at 0.5, fixed-psi re-solve and column renormalization."""
    cfg = cfg or SolverConfig()
    n = bounds.n
    K = np.asarray(K, dtype=float)
    relaxed, trace, records, st = relax(bounds, K, cfg, init, eligible, coupling)
    eligible = st.eligible
    coupling = st.coupling

    psi_bin = relaxed.psi > 0.5
    if psi_bin.all():
        raise DegeneratePlanError("every device rounded to target although labeled data exist")
    alpha = np.zeros((n, n))
    resolve_trace = []
    col_sums = np.zeros(n)
    if psi_bin.any():
        fixed = {i: (cfg.tau if psi_bin[i] else 0.0) for i in range(n)}
        st2 = _Structure(n, eligible & ~psi_bin, fixed, cfg, st.coupling)
        p2 = initial_point(st2, bounds.S, bounds.T_hat, alpha_hint=relaxed.alpha)
        fixed_state, resolve_trace, rec2 = _sca(st2, bounds, K, cfg, p2, "fixed_psi")
        records += rec2
        raw = fixed_state.alpha
        col_sums = raw.sum(axis=0)
        alpha = _renormalize(raw, psi_bin, cfg.link_threshold)
        if cfg.polish and not cfg.coupling_mode:
            alpha = _exact_sums(polish_columns(alpha, psi_bin, bounds.T_hat, K, cfg), psi_bin)
    active = {(int(i), int(j)) for i, j in zip(*np.nonzero(alpha > cfg.link_threshold))}
    plan = LinkPlan(psi_bin, alpha, active, trace, relaxed, resolve_trace, col_sums,
                    original_objective(psi_bin, alpha, bounds.S, bounds.T_hat, K, cfg,
                                       coupling if cfg.coupling_mode else None),
                    records)
    check_plan(plan)
    return plan


def _renormalize(raw, psi_bin, threshold):
    a = np.where(np.outer(~psi_bin, psi_bin), raw, 0.0)
    a = a / np.where(a.sum(axis=0) > 0, a.sum(axis=0), 1.0)
    a[a < threshold] = 0.0
    s = a.sum(axis=0)
    return _exact_sums(a / np.where(s > 0, s, 1.0), psi_bin)


def exact_unit_columns(a, cols):
    """Make every nonzero column j in ``cols`` sum to exactly 1.0, in any summation order.

    Weights are rounded to multiples of 2**-52 (at most 1.1e-16 each), so every
    partial sum up to 1 is representable and no addition rounds; the largest
    weight then takes the exact remainder. Callers renormalize first.
    """
    q = 2.0 ** -52
    for j in cols:
        col = a[:, j]
        if not np.any(col):
            continue
        col[:] = np.round(col / q) * q
        k = int(np.argmax(col))
        col[k] = 0.0
        col[k] = 1.0 - col.sum()
    return a


def _exact_sums(a, psi_bin):
    return exact_unit_columns(a, np.flatnonzero(psi_bin))


def polish_columns(alpha, psi_bin, T_hat, K, cfg):
    """Descend the exact per-column cost over the active sources.

    For fixed psi a column costs sum_i phi_t*T_i*a_i + phi_e*K_i*a_i/(a_i + eps_E),
    which is concave in a. While the active gradients disagree, the whole weight
    of the steepest-cost source moves to the cheapest one; concavity makes the
    far end of that segment at least as good as any point on it, so every move
    lowers the cost and drops one link. Columns that are already first-order
    stationary (e.g. symmetric ones) are left alone.
    """
    a = np.array(alpha, dtype=float)
    for j in np.flatnonzero(psi_bin):
        while True:
            act = np.flatnonzero(a[:, j] > 0)
            if act.size < 2:
                break
            x = a[act, j]
            g = cfg.phi_t * T_hat[act, j] + cfg.phi_e * K[act, j] * cfg.eps_E / (x + cfg.eps_E) ** 2
            if g.max() - g.min() <= cfg.polish_tol * max(1.0, np.abs(g).max()):
                break
            hi, lo = act[np.argmax(g)], act[np.argmin(g)]
            a[lo, j] += a[hi, j]
            a[hi, j] = 0.0
    return a
