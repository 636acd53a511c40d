from .cli import cli
from .config import ExperimentConfig, TrainingConfig, load_config
from .core import (Prepared, RunResult, evaluate, metrics, plan_energy, prepare, regime_bounds, run,
                   run_one, sweep, target_hypotheses)

__all__ = [
    "ExperimentConfig", "Prepared", "RunResult", "TrainingConfig", "cli", "evaluate", "load_config",
    "metrics", "plan_energy", "prepare", "regime_bounds", "run", "run_one", "sweep", "target_hypotheses",
]
