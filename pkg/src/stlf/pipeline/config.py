"""Experiment configuration: nested blocks read from YAML (or JSON, a YAML subset)."""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from ..baselines import NAMES as BASELINE_NAMES
from ..bounds import BoundConfig
from ..divergence import DivergenceConfig
from ..errors import ConfigurationError, STLFError
from ..gpsolver.convex import SubproblemConfig
from ..gpsolver.solver import SolverConfig
from ..scenario import ScenarioConfig

INJECT_KINDS = ("uniform", "extreme", "random")


@dataclass
class TrainingConfig:
    iterations: int = 100
    batch_size: int = 10
    learning_rate: float = 0.01
    hidden_dim: int = 0
    combine_mode: str = "params"

    def validate(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise ConfigurationError("training iterations and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("training learning_rate must be > 0")
        if self.hidden_dim < 0:
            raise ConfigurationError("hidden_dim must be >= 0")
        if self.combine_mode not in ("params", "output"):
            raise ConfigurationError("combine_mode must be 'params' or 'output'")


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    divergence: DivergenceConfig = field(default_factory=DivergenceConfig)
    bound: BoundConfig = field(default_factory=BoundConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    baselines: list = field(default_factory=list)
    sweep: dict | None = None
    output_dir: str = "stlf_runs"
    repeats: int = 5
    seed: int = 0
    # "uniform" / "extreme" / "random", or a CSV path of a normalized matrix
    inject_divergence: str | None = None
    # device index -> empirical error used in place of the measured one
    emp_err_override: dict = field(default_factory=dict)
    energy_reference: bool = True

    def validate(self):
        self.scenario.validate()
        self.training.validate()
        if self.repeats < 1:
            raise ConfigurationError("repeats must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")
        for b in self.baselines:
            if b not in BASELINE_NAMES:
                raise ConfigurationError(f"unknown baseline {b!r}; choose from {BASELINE_NAMES}")
        if self.sweep is not None:
            if set(self.sweep) != {"parameter", "values"}:
                raise ConfigurationError("sweep needs exactly 'parameter' and 'values'")
            resolve_parameter(self, self.sweep["parameter"])
            if not self.sweep["values"]:
                raise ConfigurationError("sweep values must be nonempty")
        if self.inject_divergence is not None and self.inject_divergence not in INJECT_KINDS \
                and not Path(self.inject_divergence).is_file():
            raise ConfigurationError(f"inject_divergence {self.inject_divergence!r} is neither a regime nor a file")
        for k, v in self.emp_err_override.items():
            if not 0 <= int(k) < self.scenario.num_devices or not 0 <= float(v) <= 1:
                raise ConfigurationError(f"bad emp_err_override entry {k!r}: {v!r}")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["scenario"]["labeled_fraction_range"] = list(d["scenario"]["labeled_fraction_range"])
        d["emp_err_override"] = {str(k): v for k, v in self.emp_err_override.items()}
        return d

    @classmethod
    def from_dict(cls, d):
        d = copy.deepcopy(d or {})
        if not isinstance(d, dict):
            raise ConfigurationError("config root must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        try:
            blocks = {
                "scenario": ScenarioConfig.from_dict(d.pop("scenario", {}) or {}),
                "training": _block(TrainingConfig, d.pop("training", {})),
                "divergence": _block(DivergenceConfig, d.pop("divergence", {})),
                "bound": _block(BoundConfig, d.pop("bound", {})),
                "solver": _solver_block(d.pop("solver", {})),
            }
            if "emp_err_override" in d:
                d["emp_err_override"] = {int(k): float(v) for k, v in (d["emp_err_override"] or {}).items()}
            cfg = cls(**blocks, **d)
        except STLFError as exc:
            raise ConfigurationError(str(exc)) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from exc
        return cfg.validate()


def _block(klass, d):
    d = d or {}
    if not isinstance(d, dict):
        raise ConfigurationError(f"{klass.__name__} block must be a mapping")
    known = {f.name for f in fields(klass)}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"unknown {klass.__name__} keys: {sorted(unknown)}")
    return klass(**d)


def _solver_block(d):
    d = dict(d or {})
    if "subproblem" in d:
        d["subproblem"] = _block(SubproblemConfig, d["subproblem"])
    return _block(SolverConfig, d)


def load_config(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def resolve_parameter(cfg, name):
    """Map ``phi_e`` or ``solver.phi_e`` to (block name, field name)."""
    blocks = ("scenario", "training", "divergence", "bound", "solver")
    if "." in name:
        block, key = name.split(".", 1)
        if block not in blocks or key not in {f.name for f in fields(getattr(cfg, block))}:
            raise ConfigurationError(f"sweep parameter {name!r} does not name a config field")
        return block, key
    hits = [b for b in blocks if name in {f.name for f in fields(getattr(cfg, b))}]
    if len(hits) != 1:
        raise ConfigurationError(f"sweep parameter {name!r} does not name exactly one config field")
    return hits[0], name


def with_parameter(cfg, name, value):
    block, key = resolve_parameter(cfg, name)
    new = copy.deepcopy(cfg)
    sub = getattr(new, block)
    if dataclasses.is_dataclass(sub) and getattr(type(sub), "__dataclass_params__").frozen:
        sub = dataclasses.replace(sub, **{key: value})
    else:
        setattr(sub, key, value)
        if hasattr(sub, "__post_init__"):
            sub.__post_init__()
    setattr(new, block, sub)
    return new
