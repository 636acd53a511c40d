"""
Trading accuracy for transmission energy
=========================================

One synthetic network, re-solved for growing energy weight.
"""

import tempfile

from stlf.pipeline.config import ExperimentConfig
from stlf.pipeline.core import sweep

cfg = ExperimentConfig.from_dict({"repeats": 1})
with tempfile.TemporaryDirectory() as out:
    s = sweep(cfg, "phi_e", [1e-2, 1e0, 1e2, 1e4], out)[0]

print(f"{'phi_e':>8} {'norm energy':>12} {'links':>6} {'saved':>6} {'target acc':>11}")
for row in zip(s["x"], s["normalized_energy"], s["active_links"], s["saved_transmissions"],
               s["avg_target_accuracy"]):
    print("{:8.0e} {:12.3f} {:6d} {:6d} {:11.3f}".format(*row))
