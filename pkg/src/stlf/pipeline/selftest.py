"""Quick oracle checks, each comparing the library against an independent computation."""
from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from .. import oracles
from ..bounds import assemble, source_cost, transfer_cost
from ..gpsolver import SolverConfig, ag_condense, log_transform, monomial, solve, solve_subproblem
from ..gpsolver.posynomial import Monomial
from ..hypothesis import Arch, Hypothesis, loss_and_grad
from ..divergence import inject
from ..scenario import CommProfile, energy_constant


def _ag():
    g = monomial(0) + monomial(1)
    gh = ag_condense(g, {0: 1.0, 1: 3.0})
    want = (2 / 0.25) ** 0.25 * (2 / 0.75) ** 0.75
    val = gh({0: 2.0, 1: 2.0})
    return abs(val - want) < 1e-12 and val <= 4.0 and abs(gh({0: 1.0, 1: 3.0}) - 4.0) < 1e-12, f"g_hat(2,2)={val:.6f}"


def _amgm():
    sub = SimpleNamespace(objective=monomial(0) + monomial(1),
                          inequality_constraints=[Monomial(4.0, {0: -1, 1: -1})],
                          variable_index={0: 0, 1: 1})
    res = solve_subproblem(log_transform(sub), np.array([1.0, -1.0]))
    y = np.exp(res.z)
    return bool(np.allclose(y, 2.0, atol=1e-5)), f"y*={y.round(6).tolist()}"


def _bounds():
    a = source_cost(0.1, 1000)
    b = transfer_cost(0, 1, 0.1, 1000, 1000, 1.0)
    ok = abs(a - oracles.source_cost_ref(0.1, 1000)) < 1e-12 and abs(a - 0.463920) <= 1e-5 \
        and abs(b - oracles.transfer_cost_ref(0.1, 1000, 1000, 1.0)) < 1e-12 and abs(b - 2.290762) <= 1e-5
    return ok, f"S={a:.6f} T={b:.6f}"


def _energy():
    comm = CommProfile(np.array([23.0, 23.0]), np.full((2, 2), 63e6), 10 ** 9)
    k = energy_constant(comm, 0, 1)
    return abs(k - oracles.energy_ref(23.0, 63e6, 1e9)) < 1e-12 and abs(k - 3.16709) <= 1e-4, f"K={k:.5f}"


def _gradient():
    rng = np.random.default_rng(0)
    h = Hypothesis.init(Arch(3, 2, 3), seed=1, scale=0.5)
    x, y = rng.standard_normal((3, 3)), np.array([0, 1, 2])
    _, g = loss_and_grad(h, h.params, x, y)
    num = np.zeros_like(g)
    for k in range(len(g)):
        e = np.zeros_like(g)
        e[k] = 1e-6
        num[k] = (loss_and_grad(h, h.params + e, x, y)[0] - loss_and_grad(h, h.params - e, x, y)[0]) / 2e-6
    err = float(np.max(np.abs(g - num) / np.maximum(1e-8, np.abs(num) + np.abs(g))))
    return err < 1e-5, f"max rel err={err:.1e}"


def _brute_force():
    rng = np.random.default_rng(3)
    n = 3
    errs = np.array([0.1, 0.2, 1.0])
    d = rng.uniform(0, 1, (n, n))
    d = np.triu(d, 1) + np.triu(d, 1).T
    b = assemble(np.full(n, 500), inject(d), errs)
    K = rng.uniform(3.0, 3.8, (n, n))
    np.fill_diagonal(K, 0)
    cfg = SolverConfig()
    plan = solve(b, K, cfg)
    phi = (cfg.phi_s, cfg.phi_t, cfg.phi_e)
    got = oracles.plan_cost(plan.psi_binary, plan.alpha, b.S, b.T_hat, K, phi, cfg.eps_E)
    best, _, _ = oracles.brute_force_plan(b.S, b.T_hat, K, phi, cfg.eps_E, errs < 1)
    return got - best <= 1e-2, f"plan={got:.4f} exhaustive={best:.4f}"


CHECKS = {
    "ag_condense": _ag,
    "gp_am_gm": _amgm,
    "bound_arithmetic": _bounds,
    "energy_constant": _energy,
    "gradient_check": _gradient,
    "brute_force_n3": _brute_force,
}


def run_selftest(out=print):
    ok_all = True
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # report every check, even broken ones
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok_all


if __name__ == "__main__":
    raise SystemExit(0 if run_selftest() else 2)
