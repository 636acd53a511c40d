from .convex import ConvexProgram, SubproblemConfig, SubproblemResult, log_transform, solve_subproblem
from .posynomial import Monomial, Posynomial, ag_condense, monomial
from .solver import (GpSubproblem, IterateState, LinkPlan, SolverConfig, build_subproblem, check_plan,
                     link_energy, original_objective, polish_columns, relax, solve)

__all__ = [
    "ConvexProgram", "GpSubproblem", "IterateState", "LinkPlan", "Monomial", "Posynomial",
    "SolverConfig", "SubproblemConfig", "SubproblemResult", "ag_condense", "build_subproblem",
    "check_plan", "link_energy", "log_transform", "monomial", "original_objective", "polish_columns",
    "relax", "solve", "solve_subproblem",
]
