"""
Optimized links against heuristics on two shifted domains
==========================================================

"""

from stlf.pipeline.config import load_config
from stlf.pipeline.core import repeat_seed, run_one

cfg = load_config("configs/split.yaml")
prep, results = run_one(cfg, repeat_seed(cfg.seed, 0))

print("empirical source errors:", prep.emp_errs.round(2))
for r in results:
    print(f"{r.method:14s} acc={r.avg_target_accuracy:.3f} links={len(r.plan.active_links):3d} "
          f"energy={r.total_energy_joules:7.2f} J")
