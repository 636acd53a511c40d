"""
Condensing a posynomial and solving a tiny geometric program
=============================================================

"""

import numpy as np

from stlf.gpsolver import Monomial, ag_condense, log_transform, monomial, solve_subproblem

# g(x, y) = x + y, expanded around (1, 3): the weights are each term's share of g there
g = monomial("x") + monomial("y")
g_hat = ag_condense(g, {"x": 1.0, "y": 3.0})
print("condensed monomial:", g_hat)
print("g_hat(1, 3) =", g_hat({"x": 1.0, "y": 3.0}), " g(1, 3) =", g({"x": 1.0, "y": 3.0}))
print("g_hat(2, 2) =", round(g_hat({"x": 2.0, "y": 2.0}), 6), "<= g(2, 2) = 4")

# sampled far from the expansion point it never overshoots
rng = np.random.default_rng(0)
pts = np.exp(rng.uniform(-3, 3, (5, 2)))
for x, y in pts:
    print(f"  x={x:8.3f} y={y:8.3f}  g_hat={g_hat({'x': x, 'y': y}):9.3f}  g={x + y:9.3f}")


# minimize x + y subject to x * y >= 4, written as 4 / (x y) <= 1
class TinyGP:
    objective = g
    inequality_constraints = [Monomial(4.0, {"x": -1, "y": -1})]
    variable_index = {"x": 0, "y": 1}


prog = log_transform(TinyGP)
res = solve_subproblem(prog, np.array([0.0, 1.0]))
print("optimum:", np.exp(res.z).round(6), "objective:", round(float(np.exp(res.objective)), 6))
