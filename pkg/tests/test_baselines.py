import numpy as np
import pytest

from stlf.baselines import NAMES, BaselineSpec, run_baseline
from stlf.divergence import DivergenceMatrix, inject
from stlf.errors import DegeneratePlanError, UsageError
from stlf.gpsolver.solver import LinkPlan, check_plan, link_energy
from stlf.scenario import DeviceDataset, Scenario, ScenarioConfig, build_scenario, make_comm_profile


def labeled_scenario(counts, n_samples=400):
    devs = []
    for c in counts:
        y = np.full(n_samples, -1)
        y[:c] = 0
        devs.append(DeviceDataset(np.zeros((n_samples, 2)), y, 0, np.zeros(n_samples, dtype=int)))
    comm = make_comm_profile(ScenarioConfig(num_devices=len(counts)), 0)
    return Scenario(devs, comm, 0, len(counts))


def reference_plan(psi, links):
    n = len(psi)
    a = np.zeros((n, n))
    for i, j in links:
        a[i, j] = 1.0
    a[:, psi] /= a[:, psi].sum(axis=0)
    return LinkPlan(np.asarray(psi), a, set(links), [])


def test_spec_validation():
    with pytest.raises(UsageError):
        BaselineSpec("fada")
    with pytest.raises(UsageError):
        BaselineSpec("random_alpha", psi_source="oracle")
    assert BaselineSpec("random_psi").psi_source == "random"


def test_fedavg_weights_by_labeled_size():
    sc = labeled_scenario([100, 300, 0])
    plan = run_baseline(BaselineSpec("psi_fedavg"), sc, inject(np.zeros((3, 3))))
    assert list(plan.psi_binary) == [False, False, True]
    assert plan.alpha[:2, 2] == pytest.approx([0.25, 0.75], abs=1e-15)


def test_single_matching_picks_closest_source():
    sc = labeled_scenario([50, 50, 50, 0])
    d = np.zeros((4, 4))
    d[:3, 3] = d[3, :3] = [0.9, 0.1, 0.5]
    plan = run_baseline(BaselineSpec("single_matching", psi_source="heuristic_labeled"), sc, inject(d))
    assert list(plan.alpha[:, 3]) == [0.0, 1.0, 0.0, 0.0]
    tie = d.copy()
    tie[:3, 3] = tie[3, :3] = [0.4, 0.2, 0.2]
    plan = run_baseline(BaselineSpec("single_matching", psi_source="heuristic_labeled"), sc, inject(tie))
    assert plan.alpha[1, 3] == 1.0


def test_random_alpha_columns_on_simplex():
    sc = labeled_scenario([50, 50, 50, 0, 0])
    ref = reference_plan([False, False, False, True, True], [(0, 3), (1, 4)])
    plan = run_baseline(BaselineSpec("random_alpha", seed=4), sc, inject(np.zeros((5, 5))), ref)
    assert np.all(np.abs(plan.alpha[:, 3:].sum(axis=0) - 1) <= 1e-9)
    assert np.array_equal(plan.psi_binary, ref.psi_binary)


def test_heuristic_without_labels_is_degenerate():
    with pytest.raises(DegeneratePlanError):
        run_baseline(BaselineSpec("psi_fedavg"), labeled_scenario([0, 0]), inject(np.zeros((2, 2))))


def test_reference_required():
    sc = labeled_scenario([10, 0])
    with pytest.raises(UsageError):
        run_baseline(BaselineSpec("avg_degree"), sc, inject(np.zeros((2, 2))))
    with pytest.raises(UsageError):
        run_baseline(BaselineSpec("random_alpha"), sc, inject(np.zeros((2, 2))))


@pytest.mark.parametrize("seed", range(10))
def test_random_psi_always_has_a_source_and_spares_unlabeled(seed):
    sc = labeled_scenario([30, 30, 0, 0])
    plan = run_baseline(BaselineSpec("random_psi", seed=seed), sc, inject(np.zeros((4, 4))))
    assert (~plan.psi_binary).any()
    assert plan.psi_binary[2] and plan.psi_binary[3]


@pytest.mark.parametrize("seed", range(6))
def test_avg_degree_matches_reference_link_total(seed):
    psi = np.array([False] * 3 + [True] * 4)
    links = [(0, 3), (0, 4), (1, 5), (2, 6), (1, 6)]
    sc = labeled_scenario([20] * 3 + [0] * 4)
    plan = run_baseline(BaselineSpec("avg_degree", seed=seed), sc, inject(np.zeros((7, 7))),
                        reference_plan(psi, links))
    deg = np.array([sum(1 for i, _ in plan.active_links if i == s) for s in range(3)])
    assert deg.sum() == len(links)
    assert set(deg) <= {len(links) // 3, len(links) // 3 + 1}


@pytest.mark.parametrize("name", NAMES)
def test_every_baseline_plan_is_valid(name):
    sc = build_scenario(ScenarioConfig(num_devices=6, samples_per_device=40), 2)
    rng = np.random.default_rng(0)
    d = rng.uniform(0, 1, (6, 6))
    div = inject(np.triu(d, 1) + np.triu(d, 1).T)
    ref = reference_plan([False, False, False, True, True, True], [(0, 3), (1, 4), (2, 5), (0, 5)])
    plan = run_baseline(BaselineSpec(name, seed=1), sc, div, ref)
    check_plan(plan)
    psi = plan.psi_binary
    assert np.all(plan.alpha[psi] == 0)
    assert np.all(plan.alpha.sum(axis=0)[psi] == 1.0)


def test_single_matching_uses_least_energy_under_equal_K():
    sc = labeled_scenario([50, 50, 50, 0, 0])
    rng = np.random.default_rng(3)
    d = rng.uniform(0, 1, (5, 5))
    div = inject(np.triu(d, 1) + np.triu(d, 1).T)
    K = np.full((5, 5), 3.16709)
    sm = run_baseline(BaselineSpec("single_matching", psi_source="heuristic_labeled"), sc, div)
    e_sm = link_energy(sm.alpha, K, 1e-3).sum()
    for name in ("random_alpha", "fedavg_alpha"):
        other = run_baseline(BaselineSpec(name, seed=2), sc, div, sm)
        assert e_sm <= link_energy(other.alpha, K, 1e-3).sum()


def test_baselines_are_deterministic():
    sc = labeled_scenario([50, 50, 0, 0])
    div = DivergenceMatrix(np.zeros((4, 4)))
    a = run_baseline(BaselineSpec("random_psi", seed=9), sc, div)
    b = run_baseline(BaselineSpec("random_psi", seed=9), sc, div)
    assert a.alpha.tobytes() == b.alpha.tobytes()
