"""Scenario -> local training -> divergences -> bounds -> plan -> transfer -> metrics."""
from __future__ import annotations

import contextlib
import copy
import json
import logging
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..baselines import BaselineSpec, run_baseline
from ..bounds import BoundTerms, assemble
from ..divergence import DivergenceMatrix, estimate_all, regime_matrix
from ..errors import ProtocolError, StageError, UsageError
from ..gpsolver.solver import LinkPlan, link_energy, solve
from ..hypothesis import Arch, Hypothesis, TrainConfig, accuracy, combine, empirical_error, train
from ..scenario import build_scenario, energy_matrix
from .config import resolve_parameter, with_parameter

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "STLF_OUTPUT_ROOT"


@contextlib.contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def repeat_seed(master, r):
    return int(np.random.SeedSequence([int(master), int(r)]).generate_state(1)[0])


@dataclass
class Prepared:
    scenario: object
    hypotheses: dict
    emp_errs: np.ndarray
    divergence: DivergenceMatrix
    bounds: BoundTerms
    K: np.ndarray
    seed: int


@dataclass
class RunResult:
    method: str
    seed: int
    plan: LinkPlan
    per_target_accuracy: dict
    avg_target_accuracy: float | None
    total_energy_joules: float
    normalized_energy: float | None
    saved_transmissions: int | None
    objective_trace: list
    divergence_matrix: DivergenceMatrix | None = None
    bound_terms: BoundTerms | None = None

    def to_dict(self):
        return {
            "method": self.method,
            "seed": self.seed,
            "psi": [bool(b) for b in self.plan.psi_binary],
            "alpha": np.round(self.plan.alpha, 12).tolist(),
            "active_links": sorted([list(p) for p in self.plan.active_links]),
            "per_target_accuracy": {str(k): v for k, v in sorted(self.per_target_accuracy.items())},
            "avg_target_accuracy": self.avg_target_accuracy,
            "total_energy_joules": self.total_energy_joules,
            "normalized_energy": self.normalized_energy,
            "saved_transmissions": self.saved_transmissions,
            "objective_trace": list(self.objective_trace),
        }


def train_local(scenario, tcfg, seed):
    """One hypothesis per device that holds labels; the rest get none."""
    cfg = scenario.config
    arch = Arch(cfg.feature_dim, tcfg.hidden_dim, cfg.num_classes)
    hyps = {}
    for i, dev in enumerate(scenario.devices):
        if dev.num_labeled == 0:
            continue
        s = repeat_seed(seed, 1000 + i)
        init = Hypothesis.init(arch, seed=s)
        hyps[i] = train(init, dev, TrainConfig(tcfg.iterations, tcfg.batch_size, tcfg.learning_rate, s))
    return hyps


def prepare(cfg, seed):
    with stage("scenario"):
        scenario = build_scenario(cfg.scenario, seed)
    with stage("training"):
        hyps = train_local(scenario, cfg.training, seed)
        errs = np.ones(scenario.num_devices)
        for i, h in hyps.items():
            errs[i] = empirical_error(h, scenario.devices[i])
        for k, v in cfg.emp_err_override.items():
            errs[int(k)] = float(v)
    with stage("divergence"):
        kind = cfg.inject_divergence
        if kind is None:
            div = estimate_all(scenario, cfg.divergence, seed)
        elif kind in ("uniform", "extreme", "random"):
            div = regime_matrix(kind, scenario.num_devices, seed)
        else:
            div = DivergenceMatrix.from_csv(kind)
    with stage("bounds"):
        bounds = assemble(scenario, div, errs, cfg.bound)
    return Prepared(scenario, hyps, errs, div, bounds, energy_matrix(scenario.comm), seed)


def regime_bounds(kind, n=10, n_labeled=5, size=1000, emp_err=0.1, seed=0):
    """Bounds for the injected-divergence regimes: identical sizes, identical source errors."""
    errs = np.r_[np.full(n_labeled, emp_err), np.ones(n - n_labeled)]
    return assemble(np.full(n, size), regime_matrix(kind, n, seed), errs)


def target_hypotheses(plan, hypotheses, mode="params", audit=None):
    """h_j = sum_i alpha_ij h_i over rounded sources, one per target.

    ``audit`` receives (target, contributing devices) for every target; any
    contributor that is not a source holding a trained hypothesis is refused.
    """
    psi = np.asarray(plan.psi_binary, dtype=bool)
    out = {}
    for j in np.flatnonzero(psi):
        rows = np.flatnonzero(plan.alpha[:, j] > 0)
        for i in rows:
            if psi[i] or i not in hypotheses:
                raise ProtocolError(f"device {i} cannot contribute to target {j}: not a trained source")
        if audit is not None:
            audit(int(j), [int(i) for i in rows])
        w = plan.alpha[rows, j]
        out[int(j)] = combine([hypotheses[i] for i in rows], w / w.sum(), mode=mode)
    return out


def evaluate(plan, prep, mode="params", audit=None):
    hs = target_hypotheses(plan, prep.hypotheses, mode, audit)
    acc = {}
    for j, h in hs.items():
        dev = prep.scenario.devices[j]
        acc[j] = accuracy(h, dev, dev.true_labels)
    avg = float(np.mean(list(acc.values()))) if acc else None
    return acc, avg


def plan_energy(plan, K, eps_E):
    """Energy summed over active links only."""
    a = np.asarray(plan.alpha, dtype=float)
    mask = np.zeros(a.shape, dtype=bool)
    for i, j in plan.active_links:
        mask[i, j] = True
    return float(np.sum(link_energy(np.where(mask, a, 0.0), K, eps_E)))


def metrics(plan, K, eps_E=1e-3, reference=None, normalize=False, reference_energy=None):
    """Energy, normalized energy and saved transmissions of ``plan``."""
    total = plan_energy(plan, K, eps_E)
    if normalize and reference is None and reference_energy is None:
        raise UsageError("normalized energy requested without a reference plan")
    norm = saved = None
    if reference is not None or reference_energy is not None:
        ref_e = reference_energy if reference_energy is not None else plan_energy(reference, K, eps_E)
        norm = total / ref_e if ref_e > 0 else 0.0
    if reference is not None:
        saved = len(reference.active_links) - len(plan.active_links)
    return {"total_energy_joules": total, "normalized_energy": norm, "saved_transmissions": saved}


def _result(method, plan, prep, cfg, reference=None, audit=None):
    acc, avg = evaluate(plan, prep, cfg.training.combine_mode, audit)
    m = metrics(plan, prep.K, cfg.solver.eps_E, reference)
    return RunResult(method, prep.seed, plan, acc, avg, m["total_energy_joules"], m["normalized_energy"],
                     m["saved_transmissions"], list(plan.objective_trace), prep.divergence, prep.bounds)


def solve_stlf(prep, solver_cfg):
    with stage("solver"):
        return solve(prep.bounds, prep.K, solver_cfg, eligible=prep.scenario.labeled)


def run_one(cfg, seed, audit=None):
    """The optimized plan plus the configured baselines for one seed. Returns (prep, results)."""
    prep = prepare(cfg, seed)
    plan = solve_stlf(prep, cfg.solver)
    reference = None
    if cfg.energy_reference:
        ref_cfg = copy.deepcopy(cfg.solver)
        ref_cfg.phi_e = 0.0
        reference = plan if cfg.solver.phi_e == 0 else solve_stlf(prep, ref_cfg)
    with stage("transfer"):
        results = [_result("stlf", plan, prep, cfg, reference, audit)]
    for name in cfg.baselines:
        with stage(f"baseline:{name}"):
            bplan = run_baseline(BaselineSpec(name, seed=seed), prep.scenario, prep.divergence, plan)
            results.append(_result(name, bplan, prep, cfg, reference, audit))
    return prep, results


def output_root(out=None):
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if out is None:
        return Path(root) if root else Path("stlf_runs")
    out = Path(out)
    if root and not out.is_absolute():
        return Path(root) / out
    return out


def load_schema():
    return json.loads(resources.files("stlf.pipeline").joinpath("results.schema.json").read_text())


def results_document(cfg, repeat, seed, prep, results, error=None):
    doc = {
        "schema_version": 1,
        "repeat": repeat,
        "seed": seed,
        "config": cfg.to_dict(),
        "methods": {r.method: r.to_dict() for r in results},
        "divergence": None,
        "bounds": None,
        "error": error,
    }
    if prep is not None:
        doc["divergence"] = {"scale": prep.divergence.scale, "values": prep.divergence.values.tolist()}
        doc["bounds"] = {"S": prep.bounds.S.tolist(), "T_hat": prep.bounds.T_hat.tolist(),
                         "emp_errs": prep.emp_errs.tolist()}
    jsonschema.validate(doc, load_schema())
    return doc


def write_run(directory, doc, prep, results):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "results.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if prep is not None:
        prep.divergence.to_csv(d / "divergence.csv")
    stlf = next((r for r in results if r.method == "stlf"), None)
    if stlf is not None:
        stlf.plan.psi_csv(d / "psi.csv")
        stlf.plan.alpha_csv(d / "alpha.csv")
        stlf.plan.trace_jsonl(d / "trace.jsonl")
    for r in results:
        if r.method != "stlf":
            r.plan.alpha_csv(d / f"alpha_{r.method}.csv")


def run(cfg, out=None, seed=None):
    """Every repeat of the experiment; writes one directory per repeat."""
    master = cfg.seed if seed is None else seed
    root = output_root(out if out is not None else cfg.output_dir)
    all_results = []
    for r in range(cfg.repeats):
        s = repeat_seed(master, r)
        prep, results = None, []
        try:
            prep, results = run_one(cfg, s)
        except StageError as exc:
            doc = results_document(cfg, r, s, prep, results, {"stage": exc.stage, "message": str(exc.cause)})
            write_run(root / f"run_{r:02d}", doc, prep, results)
            raise
        write_run(root / f"run_{r:02d}", results_document(cfg, r, s, prep, results), prep, results)
        all_results.append(results)
    return all_results


def sweep(cfg, parameter, values, out=None, seed=None):
    """Re-solve for each value of one parameter; solver parameters reuse the prepared data.

    Energies are normalized by the larger of the phi_e = 0 plan's energy and
    the maximum seen in the sweep, so the series lies in [0, 1].
    """
    master = cfg.seed if seed is None else seed
    root = output_root(out if out is not None else cfg.output_dir)
    series = []
    for r in range(cfg.repeats):
        s = repeat_seed(master, r)
        prep = prepare(cfg, s)
        ref_cfg = copy.deepcopy(cfg.solver)
        ref_cfg.phi_e = 0.0
        reference = solve_stlf(prep, ref_cfg)
        rows = []
        for v in values:
            vcfg = with_parameter(cfg, parameter, v)
            p = prep if resolve_parameter(cfg, parameter)[0] == "solver" else prepare(vcfg, s)
            plan = solve_stlf(p, vcfg.solver)
            acc, avg = evaluate(plan, p, cfg.training.combine_mode)
            rows.append({"value": v, "plan": plan, "avg_target_accuracy": avg,
                         "energy": plan_energy(plan, p.K, cfg.solver.eps_E),
                         "active_links": len(plan.active_links)})
        ref_e = max([plan_energy(reference, prep.K, cfg.solver.eps_E)] + [x["energy"] for x in rows])
        for x in rows:
            x["normalized_energy"] = x["energy"] / ref_e if ref_e > 0 else 0.0
            x["saved_transmissions"] = len(reference.active_links) - x["active_links"]
        d = root / f"sweep_{r:02d}"
        d.mkdir(parents=True, exist_ok=True)
        for k, x in enumerate(rows):
            x["plan"].alpha_csv(d / f"alpha_{k:02d}.csv")
            x["plan"].psi_csv(d / f"psi_{k:02d}.csv")
        plot = {"parameter": parameter, "seed": s,
                "x": [x["value"] for x in rows],
                "normalized_energy": [x["normalized_energy"] for x in rows],
                "saved_transmissions": [x["saved_transmissions"] for x in rows],
                "active_links": [x["active_links"] for x in rows],
                "avg_target_accuracy": [x["avg_target_accuracy"] for x in rows]}
        (d / "plot_data.json").write_text(json.dumps(plot, indent=2) + "\n")
        series.append(plot)
    return series
