"""Command line: run, sweep, baseline, regimes, selftest.

Exit codes: 0 success, 1 validation or usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from ..baselines import NAMES as BASELINE_NAMES
from ..baselines import BaselineSpec, run_baseline
from ..errors import ConfigurationError, DomainError, STLFError, UsageError
from ..gpsolver.solver import SolverConfig, solve
from ..scenario import ScenarioConfig, energy_matrix, make_comm_profile
from .config import ExperimentConfig, load_config
from .core import (evaluate, metrics, output_root, prepare, regime_bounds, repeat_seed, run,
                   solve_stlf, sweep)

log = logging.getLogger("stlf")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parser():
    p = _Parser(prog="stlf", description="Source/target determination and link formation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run the configured experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", type=int)

    s = sub.add_parser("sweep", help="re-solve over a list of values of one parameter")
    s.add_argument("--config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, nargs="+", type=float)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)

    b = sub.add_parser("baseline", help="run one heuristic baseline against the optimized plan")
    b.add_argument("--config")
    b.add_argument("--name", required=True, choices=BASELINE_NAMES)
    b.add_argument("--out")
    b.add_argument("--seed", type=int)

    g = sub.add_parser("regimes", help="solve under an injected divergence regime")
    g.add_argument("--kind", required=True, choices=("uniform", "extreme", "random"))
    g.add_argument("--config")
    g.add_argument("--out")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--devices", type=int, default=10)
    g.add_argument("--labeled", type=int, default=5)

    sub.add_parser("selftest", help="run the oracle self-checks")
    return p


def _config(path):
    return load_config(path) if path else ExperimentConfig().validate()


def _cmd_run(a):
    cfg = _config(a.config)
    results = run(cfg, a.out, a.seed)
    for rep in results:
        for r in rep:
            print(f"{r.method:16s} seed={r.seed} acc={r.avg_target_accuracy} energy={r.total_energy_joules:.4f}")
    return 0


def _cmd_sweep(a):
    cfg = _config(a.config)
    series = sweep(cfg, a.param, a.values, a.out, a.seed)
    for s in series:
        print(json.dumps({k: s[k] for k in ("seed", "x", "normalized_energy", "active_links")}))
    return 0


def _cmd_baseline(a):
    cfg = _config(a.config)
    seed = repeat_seed(cfg.seed if a.seed is None else a.seed, 0)
    prep = prepare(cfg, seed)
    ref = solve_stlf(prep, cfg.solver)
    plan = run_baseline(BaselineSpec(a.name, seed=seed), prep.scenario, prep.divergence, ref)
    _, avg = evaluate(plan, prep, cfg.training.combine_mode)
    m = metrics(plan, prep.K, cfg.solver.eps_E, ref)
    d = output_root(a.out if a.out else cfg.output_dir) / f"baseline_{a.name}"
    d.mkdir(parents=True, exist_ok=True)
    plan.psi_csv(d / "psi.csv")
    plan.alpha_csv(d / "alpha.csv")
    summary = {"baseline": a.name, "seed": seed, "avg_target_accuracy": avg, **m}
    (d / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary))
    return 0


def _cmd_regimes(a):
    cfg = _config(a.config) if a.config else None
    solver_cfg = cfg.solver if cfg else SolverConfig()
    if not 1 <= a.labeled < a.devices:
        raise UsageError("need 1 <= --labeled < --devices")
    bounds = regime_bounds(a.kind, a.devices, a.labeled, seed=a.seed)
    K = energy_matrix(make_comm_profile(cfg.scenario if cfg else ScenarioConfig(num_devices=a.devices), a.seed))
    if K.shape[0] != a.devices:
        raise ConfigurationError("config num_devices must match --devices")
    plan = solve(bounds, K, solver_cfg, eligible=np.arange(a.devices) < a.labeled)
    d = output_root(a.out if a.out else (cfg.output_dir if cfg else None)) / f"regime_{a.kind}"
    d.mkdir(parents=True, exist_ok=True)
    plan.psi_csv(d / "psi.csv")
    plan.alpha_csv(d / "alpha.csv")
    plan.trace_jsonl(d / "trace.jsonl")
    print(plan.alpha_csv(), end="")
    return 0


def _cmd_selftest(a):
    from .selftest import run_selftest
    return 0 if run_selftest() else 2


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "baseline": _cmd_baseline,
            "regimes": _cmd_regimes, "selftest": _cmd_selftest}


def cli(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        a = _parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        _parser().print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except (ConfigurationError, UsageError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (STLFError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main():
    raise SystemExit(cli())


if __name__ == "__main__":
    main()
