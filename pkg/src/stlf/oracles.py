"""Reference computations written without the solver's code paths.

Used by ``selftest`` and by the test-suite as the second route of every
dual-route check.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def plan_cost(psi, alpha, S, T_hat, K, phi, eps_E):
    """Objective of a binary plan, summed term by term with plain loops."""
    phi_s, phi_t, phi_e = phi
    n = len(psi)
    total = 0.0
    for i in range(n):
        if not psi[i]:
            total += phi_s * S[i]
    for j in range(n):
        for i in range(n):
            a = alpha[i][j]
            if psi[j] and not psi[i]:
                total += phi_t * a * T_hat[i][j]
            if a > 0:
                total += phi_e * K[i][j] * a / (a + eps_E)
    return total


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def brute_force_plan(S, T_hat, K, phi, eps_E, eligible=None, step=0.01):
    """Exhaustive search over binary psi and an alpha grid.

    Devices that are not eligible are always targets; at least one source is
    required; each target's weights come from the sources only, sum to one and
    lie on a grid of ``step``. Returns (cost, psi, alpha).
    """
    n = len(S)
    eligible = np.ones(n, dtype=bool) if eligible is None else np.asarray(eligible, dtype=bool)
    units = int(round(1.0 / step))
    best = (math.inf, None, None)
    for bits in itertools.product((False, True), repeat=n):
        psi = np.array(bits)
        if np.any(~psi & ~eligible) or psi.all():
            continue
        src = np.flatnonzero(~psi)
        alpha = np.zeros((n, n))
        for j in np.flatnonzero(psi):
            # the cost separates over target columns, so each column is searched alone
            col_best, col_w = math.inf, None
            for comp in _compositions(units, len(src)):
                w = np.array(comp) / units
                c = sum(phi[1] * w[k] * T_hat[s][j] + (phi[2] * K[s][j] * w[k] / (w[k] + eps_E) if w[k] > 0 else 0.0)
                        for k, s in enumerate(src))
                if c < col_best:
                    col_best, col_w = c, w
            alpha[src, j] = col_w
        cost = plan_cost(psi, alpha, S, T_hat, K, phi, eps_E)
        if cost < best[0]:
            best = (cost, psi, alpha)
    return best


def massart(n):
    return math.sqrt(2 * math.log(n) / n)


def hoeffding(n, delta):
    return math.sqrt(math.log(2 / delta) / (2 * n))


def source_cost_ref(err, n, delta=0.05):
    return err + 2 * massart(n) + 3 * hoeffding(n, delta)


def transfer_cost_ref(err_i, n_i, n_j, d_raw, delta=0.05):
    return (err_i + 4 * massart(n_i) + 6 * hoeffding(n_i, delta) + d_raw / 2
            + 6 * massart(n_j) + 6 * hoeffding(n_j, delta))


def energy_ref(p_dbm, rate_bps, bits):
    return bits / rate_bps * 10 ** (p_dbm / 10) / 1000
