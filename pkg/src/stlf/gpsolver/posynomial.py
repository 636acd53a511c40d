"""Monomials, posynomials and the arithmetic-geometric mean condensation.

Variables are arbitrary hashable keys (ints, or tuples such as
``("alpha", 0, 3)``). A point is anything indexable by those keys: a dict, or
a numpy vector when the keys are integer positions.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError


class Monomial:
    __slots__ = ("coef", "exps")

    def __init__(self, coef, exps=None):
        self.coef = float(coef)
        self.exps = {k: float(v) for k, v in (exps or {}).items() if v != 0.0}

    def __repr__(self):
        body = " ".join(f"{k}^{v:g}" for k, v in self.exps.items())
        return f"Monomial({self.coef:g} {body})"

    def __mul__(self, other):
        if isinstance(other, Posynomial):
            return other * self
        if not isinstance(other, Monomial):
            return Monomial(self.coef * float(other), self.exps)
        exps = dict(self.exps)
        for k, v in other.exps.items():
            exps[k] = exps.get(k, 0.0) + v
        return Monomial(self.coef * other.coef, exps)

    __rmul__ = __mul__

    def __pow__(self, p):
        return Monomial(self.coef ** p, {k: v * p for k, v in self.exps.items()})

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other ** -1
        return Monomial(self.coef / float(other), self.exps)

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def __call__(self, point):
        out = self.coef
        for k, v in self.exps.items():
            out *= point[k] ** v
        return out

    def log_eval(self, point):
        return math.log(self.coef) + sum(v * math.log(point[k]) for k, v in self.exps.items())


class Posynomial:
    """A sum of monomials. Zero-coefficient terms are dropped on construction."""

    __slots__ = ("terms",)

    def __init__(self, terms=()):
        self.terms = [t for t in terms if t.coef != 0.0]

    def __repr__(self):
        return " + ".join(map(repr, self.terms)) or "Posynomial(0)"

    def __len__(self):
        return len(self.terms)

    def __add__(self, other):
        if isinstance(other, Monomial):
            return Posynomial(self.terms + [other])
        if isinstance(other, Posynomial):
            return Posynomial(self.terms + other.terms)
        return Posynomial(self.terms + [Monomial(other)])

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Posynomial):
            return Posynomial([a * b for a in self.terms for b in other.terms])
        return Posynomial([t * other for t in self.terms])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Posynomial):
            raise DomainError("division by a posynomial is not a posynomial; condense it first")
        return Posynomial([t / other for t in self.terms])

    def __call__(self, point):
        return sum(t(point) for t in self.terms)

    @property
    def variables(self):
        out = []
        for t in self.terms:
            for k in t.exps:
                if k not in out:
                    out.append(k)
        return out


def monomial(key, power=1.0, coef=1.0):
    return Monomial(coef, {key: power})


def as_posynomial(expr):
    if isinstance(expr, Posynomial):
        return expr
    if isinstance(expr, Monomial):
        return Posynomial([expr])
    return Posynomial([Monomial(expr)])


def ag_condense(posynomial, point):
    """Best local monomial under-estimator of ``posynomial`` at ``point``.

    With weights ``a_i = u_i(z) / g(z)`` the result is
    ``prod_i (u_i(y) / a_i) ** a_i``, which is <= g(y) for every positive y and
    equal to g at y = z.
    """
    g = as_posynomial(posynomial)
    if not g.terms:
        raise DomainError("cannot condense an empty posynomial")
    if any(t.coef <= 0 for t in g.terms):
        raise DomainError("posynomial coefficients must be positive")
    for t in g.terms:
        for k in t.exps:
            if not point[k] > 0:
                raise DomainError(f"expansion point must be strictly positive (variable {k!r})")
    vals = np.array([t(point) for t in g.terms])
    weights = vals / vals.sum()
    log_coef = 0.0
    exps = {}
    for w, t in zip(weights, g.terms):
        if w == 0.0:
            continue
        log_coef += w * (math.log(t.coef) - math.log(w))
        for k, v in t.exps.items():
            exps[k] = exps.get(k, 0.0) + w * v
    return Monomial(math.exp(log_coef), exps)
