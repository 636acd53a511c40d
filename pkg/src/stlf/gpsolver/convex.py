"""Log-transformed geometric programs and a primal barrier solver for them.

After ``z = log y`` every posynomial becomes ``log sum exp(A z + b)``, so the
subproblem is: minimize one log-sum-exp subject to log-sum-exp <= 0
constraints. The solver is the textbook barrier method with damped Newton
steps and a phase-I search when the warm start is not strictly feasible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ..errors import DomainError, SubproblemFailure
from .posynomial import as_posynomial


class LseBlock:
    """Stacked log-sum-exp functions ``f_k(z) = log sum_{t in k} exp(a_t.z + b_t)``."""

    def __init__(self, A, b, ptr):
        self.A = sp.csr_matrix(A)
        self.b = np.asarray(b, dtype=float)
        self.ptr = np.asarray(ptr, dtype=np.int64)
        self.m = len(self.ptr) - 1
        self.seg = np.repeat(np.arange(self.m), np.diff(self.ptr))
        self._S = sp.csr_matrix((np.ones(len(self.seg)), (self.seg, np.arange(len(self.seg)))),
                                shape=(self.m, len(self.seg)))

    def values(self, z):
        if self.m == 0:
            return np.zeros(0)
        e = self.A @ z + self.b
        mx = np.maximum.reduceat(e, self.ptr[:-1])
        return mx + np.log(np.add.reduceat(np.exp(e - mx[self.seg]), self.ptr[:-1]))

    def weights(self, z):
        e = self.A @ z + self.b
        mx = np.maximum.reduceat(e, self.ptr[:-1])
        ex = np.exp(e - mx[self.seg])
        s = np.add.reduceat(ex, self.ptr[:-1])
        return mx + np.log(s), ex / s[self.seg]

    def jac(self, p):
        Sp = sp.csr_matrix((p, self._S.indices, self._S.indptr), shape=self._S.shape)
        return (Sp @ self.A).tocsr()


@dataclass
class ConvexProgram:
    objective: LseBlock
    constraints: LseBlock
    n: int
    variable_index: dict | None = None

    @property
    def num_constraints(self):
        return self.constraints.m

    def f0(self, z):
        return float(self.objective.values(z)[0])

    def fi(self, z):
        return self.constraints.values(z)

    def max_violation(self, z):
        f = self.fi(z)
        return float(max(0.0, f.max())) if f.size else 0.0


def _compile(posys, index):
    rows, cols, vals, b, ptr = [], [], [], [], [0]
    r = 0
    for g in posys:
        g = as_posynomial(g)
        if not g.terms:
            raise DomainError("empty posynomial in program")
        for t in g.terms:
            if t.coef <= 0:
                raise DomainError("zero or negative coefficient cannot be log-transformed")
            b.append(math.log(t.coef))
            for k, v in t.exps.items():
                rows.append(r)
                cols.append(index[k])
                vals.append(v)
            r += 1
        ptr.append(r)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, len(index)))
    return LseBlock(A, b, ptr)


def log_transform(sub):
    """Turn a GP (objective posynomial, constraint posynomials <= 1) into a ConvexProgram."""
    index = sub.variable_index
    return ConvexProgram(_compile([sub.objective], index), _compile(sub.inequality_constraints, index),
                         len(index), index)


@dataclass
class SubproblemConfig:
    feas_tol: float = 1e-9
    stat_tol: float = 1e-6
    max_inner_iters: int = 400
    gap_tol: float = 1e-7
    t0: float = 1.0
    mu: float = 20.0


@dataclass
class SubproblemResult:
    z: np.ndarray
    objective: float
    max_violation: float
    stationarity: float
    duality_gap: float
    newton_steps: int


def _barrier_parts(prog, z, t, want_hess=True, prox=None):
    f0, p0 = prog.objective.weights(z)
    g0 = np.asarray(prog.objective.jac(p0).todense()).ravel()
    grad = t * g0
    if want_hess:
        A0 = prog.objective.A
        H = t * (A0.T @ A0.multiply(p0[:, None])).toarray() - t * np.outer(g0, g0)
    else:
        H = None
    val = t * f0[0]
    if prox is not None:
        rho, center = prox
        d = z - center
        val += 0.5 * rho * d @ d
        grad = grad + rho * d
        if want_hess:
            H = H + rho * np.eye(len(z))
    c = prog.constraints
    if c.m:
        f, p = c.weights(z)
        if np.any(f >= 0):
            return math.inf, grad, H
        G = c.jac(p)
        inv = 1.0 / (-f)
        val -= np.sum(np.log(-f))
        grad = grad + G.T @ inv
        if want_hess:
            H += (c.A.T @ c.A.multiply((p * inv[c.seg])[:, None])).toarray()
            H += (G.T @ G.multiply((inv ** 2 - inv)[:, None])).toarray()
    return val, grad, H


def _barrier_value(prog, z, t, prox=None):
    val = t * prog.objective.values(z)[0]
    if prox is not None:
        d = z - prox[1]
        val += 0.5 * prox[0] * d @ d
    if prog.constraints.m:
        f = prog.constraints.values(z)
        if np.any(f >= 0):
            return math.inf
        val -= np.sum(np.log(-f))
    return val


def _newton_direction(H, grad):
    # Jacobi scaling first: barrier Hessians mix entries of wildly different size
    d = np.sqrt(np.maximum(np.diag(H), 1e-300))
    Hs = H / np.outer(d, d)
    # tiny ridge keeps directions the program leaves unbounded solvable
    Hs[np.diag_indices_from(Hs)] += 1e-13
    try:
        c = scipy.linalg.cho_factor(Hs, check_finite=False)
        return -scipy.linalg.cho_solve(c, grad / d, check_finite=False) / d
    except (np.linalg.LinAlgError, ValueError):
        return -np.linalg.lstsq(Hs, grad / d, rcond=None)[0] / d


def _newton(prog, z, t, max_steps, tol, prox=None):
    steps = 0
    lam2 = math.inf
    for _ in range(max_steps):
        val, grad, H = _barrier_parts(prog, z, t, prox=prox)
        dz = _newton_direction(H, grad)
        lam2 = float(-grad @ dz)
        steps += 1
        if lam2 / 2.0 <= tol:
            break
        s = 1.0
        c = prog.constraints
        # backtrack into the domain first, then on sufficient decrease
        while s > 1e-14 and c.m and np.any(c.values(z + s * dz) >= 0):
            s *= 0.5
        # values near 1e12 carry rounding noise, which the slack absorbs
        slack = 1e-13 * abs(val)
        while s > 1e-14:
            vnew = _barrier_value(prog, z + s * dz, t, prox)
            if vnew <= val - 0.25 * s * lam2 + slack:
                break
            s *= 0.5
        if s <= 1e-14:
            break
        z = z + s * dz
    return z, steps, math.sqrt(max(lam2, 0.0))


def _phase_one(prog, z0, cfg):
    """Find a strictly feasible point by minimizing a shared slack ``s``."""
    c = prog.constraints
    n = prog.n
    s0 = max(0.0, float(c.values(z0).max())) + 1.0
    A = sp.hstack([c.A, sp.csr_matrix(np.zeros((c.A.shape[0], 1)))]).tocsr()
    # f_k(z) - s <= 0  <=>  lse(A z + b - s) <= 0; s enters each term with -1
    A = A + sp.csr_matrix((-np.ones(A.shape[0]), (np.arange(A.shape[0]), np.full(A.shape[0], n))),
                          shape=A.shape)
    cons = LseBlock(A, c.b, c.ptr)
    # s >= -1 keeps the phase-I problem bounded
    lower = LseBlock(sp.csr_matrix(([-1.0], ([0], [n])), shape=(1, n + 1)), [-1.0], [0, 1])
    stacked = LseBlock(sp.vstack([cons.A, lower.A]).tocsr(), np.r_[cons.b, lower.b],
                       np.r_[cons.ptr, cons.ptr[-1] + 1])
    obj = LseBlock(sp.csr_matrix(([1.0], ([0], [n])), shape=(1, n + 1)), [0.0], [0, 1])
    ph = ConvexProgram(obj, stacked, n + 1)
    # log(exp(s)) = s; a weak proximal pull keeps unbounded directions of z in check
    x = np.r_[z0, s0]
    t = cfg.t0
    used = 0
    while used < cfg.max_inner_iters:
        x, k, _ = _newton(ph, x, t, cfg.max_inner_iters - used, 1e-10, prox=(1e-6, np.r_[z0, 0.0]))
        used += k
        if x[n] < -1e-6 and prog.max_violation(x[:n]) == 0.0 and np.all(c.values(x[:n]) < 0):
            return x[:n], used
        if stacked.m / t < 1e-12:
            break
        t *= cfg.mu
    raise SubproblemFailure("phase I could not find a strictly feasible point", best=x[:n])


def solve_subproblem(prog, warm_start, cfg=None):
    """Minimize the log-transformed GP; returns a SubproblemResult.

    The returned point is strictly feasible. ``stationarity`` is the Newton
    decrement of the final barrier merit scaled by 1/t.
    """
    cfg = cfg or SubproblemConfig()
    z = np.asarray(warm_start, dtype=float).copy()
    if not np.all(np.isfinite(z)):
        raise DomainError("warm start must be finite")
    used = 0
    c = prog.constraints
    if c.m and not np.all(c.values(z) < 0):
        z, used = _phase_one(prog, z, cfg)
    m = max(c.m, 1)
    t = cfg.t0
    stat = math.inf
    while True:
        z, k, dec = _newton(prog, z, t, max(cfg.max_inner_iters - used, 1), 1e-10)
        used += k
        stat = dec / t
        if m / t <= cfg.gap_tol:
            break
        if used >= cfg.max_inner_iters:
            viol = prog.max_violation(z)
            if viol > cfg.feas_tol:
                raise SubproblemFailure("inner iteration cap reached while infeasible", best=z)
            break
        t *= cfg.mu
    return SubproblemResult(z, prog.f0(z), prog.max_violation(z), stat, m / t, used)
