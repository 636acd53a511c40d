"""
Link weights under three injected divergence regimes
=====================================================

Devices 1-5 hold labels, 6-10 do not.  The divergence matrix is injected
directly, so the plan only reflects the regime.
"""

import numpy as np

from stlf.gpsolver import SolverConfig, solve
from stlf.pipeline.core import regime_bounds
from stlf.scenario import ScenarioConfig, energy_matrix, make_comm_profile

np.set_printoptions(precision=2, suppress=True, linewidth=120)
K = energy_matrix(make_comm_profile(ScenarioConfig(num_devices=10), 0))

for kind in ("uniform", "extreme", "random"):
    plan = solve(regime_bounds(kind), K, SolverConfig(), eligible=np.arange(10) < 5)
    print(f"--- {kind}: sources {(plan.sources + 1).tolist()}, {len(plan.active_links)} links")
    # rows are sources, columns targets
    print(plan.alpha[np.ix_(plan.sources, plan.targets)])

# uniform: every source sends 1/5 to every target
# extreme: device 1 matches everyone, so it carries each target alone
