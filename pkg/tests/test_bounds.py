import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stlf import oracles
from stlf.bounds import BoundConfig, assemble, rad_bound, source_cost, transfer_cost
from stlf.divergence import DivergenceMatrix, inject
from stlf.errors import DomainError, UsageError

# frozen from a 30-digit mpmath evaluation of the closed forms
RAD_100 = 0.303485425877029
RAD_2 = 0.832554611157698
SOURCE_DEFAULT = 0.463919622551701
TRANSFER_DEFAULT = 2.290757290254485


def test_rad_bound_values():
    assert rad_bound(1) == 0.0
    assert rad_bound(100) == pytest.approx(RAD_100, abs=1e-12)
    assert rad_bound(2) == pytest.approx(RAD_2, abs=1e-12)
    with pytest.raises(DomainError):
        rad_bound(0)


def test_source_cost_values():
    assert source_cost(0.1, 1000) == pytest.approx(SOURCE_DEFAULT, abs=1e-12)
    assert abs(source_cost(0.1, 1000) - 0.463920) <= 1e-5
    assert source_cost(1, 500) - source_cost(0, 500) == pytest.approx(1.0, abs=1e-12)
    assert abs(source_cost(0.3, 10**9) - 0.3) <= 1e-3


def test_transfer_cost_values():
    assert transfer_cost(0, 1, 0.1, 1000, 1000, 1.0) == pytest.approx(TRANSFER_DEFAULT, abs=1e-12)
    assert abs(transfer_cost(0, 1, 0.1, 1000, 1000, 1.0) - 2.290762) <= 1e-5
    assert transfer_cost(0, 1, 0.2, 300, 700, 2.0) - transfer_cost(0, 1, 0.2, 300, 700, 0.0) == pytest.approx(1.0)
    assert transfer_cost(0, 1, 1.0, 50, 50, 0.0) >= 1.0


def test_transfer_cost_flags():
    with pytest.raises(UsageError):
        transfer_cost(0, 1, 0.1, 100, 100, 1.0, coupling=0.2)
    cfg = BoundConfig(include_hypothesis_coupling=True)
    base = transfer_cost(0, 1, 0.1, 100, 100, 1.0, cfg=cfg)
    assert transfer_cost(0, 1, 0.1, 100, 100, 1.0, coupling=0.2, cfg=cfg) == pytest.approx(base + 0.2)
    with pytest.raises(DomainError):
        transfer_cost(0, 1, 0.1, 100, 100, 2.5)


@settings(max_examples=50, deadline=None)
@given(err=st.floats(0, 1), n=st.integers(1, 10**6), delta=st.floats(0.001, 0.5))
def test_source_cost_against_reference(err, n, delta):
    assert source_cost(err, n, BoundConfig(delta)) == pytest.approx(oracles.source_cost_ref(err, n, delta), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(err=st.floats(0, 1), ni=st.integers(1, 10**5), nj=st.integers(1, 10**5), d=st.floats(0, 2))
def test_transfer_cost_against_reference(err, ni, nj, d):
    assert transfer_cost(0, 1, err, ni, nj, d) == pytest.approx(oracles.transfer_cost_ref(err, ni, nj, d), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(err=st.floats(0, 0.9), n=st.integers(8, 10**5), d=st.floats(0, 1.9))
def test_monotonicity(err, n, d):
    assert source_cost(err + 0.05, n) > source_cost(err, n)
    assert source_cost(err, n + 1) < source_cost(err, n)
    assert transfer_cost(0, 1, err + 0.05, n, n, d) > transfer_cost(0, 1, err, n, n, d)
    assert transfer_cost(0, 1, err, n, n, d + 0.05) > transfer_cost(0, 1, err, n, n, d)
    assert transfer_cost(0, 1, err, n + 1, n, d) < transfer_cost(0, 1, err, n, n, d)


def test_assemble_matches_independent_recomputation():
    rng = np.random.default_rng(0)
    n = 10
    sizes = rng.integers(50, 2000, n)
    u = rng.uniform(0, 2, (n, n))
    div = inject(np.triu(u, 1) + np.triu(u, 1).T, scale="raw_0_2")
    errs = rng.uniform(0, 1, n)
    b = assemble(sizes, div, errs)
    for i in range(n):
        assert b.S[i] == pytest.approx(oracles.source_cost_ref(errs[i], sizes[i]), rel=1e-13)
        for j in range(n):
            want = oracles.transfer_cost_ref(errs[i], sizes[i], sizes[j], div.values[i, j])
            assert b.T_hat[i, j] == pytest.approx(want, rel=1e-13)
    assert np.all(b.S >= 0) and np.all(b.T_hat >= 0) and np.all(np.isfinite(b.T_hat))
    assert np.all(b.T_hat >= b.components["source_empirical_error"][:, None])


def test_assemble_symmetry_and_isolation():
    div = inject(np.full((3, 3), 0.4))
    b = assemble([100, 100, 100], div, [0.2, 0.2, 0.2])
    assert b.T_hat[0, 1] == b.T_hat[1, 0]
    m = np.full((3, 3), 0.4)
    m[0, 2] = m[2, 0] = 0.6
    b2 = assemble([100, 100, 100], inject(m), [0.2, 0.2, 0.2])
    diff = b2.T_hat - b.T_hat
    assert diff[0, 2] > 0 and diff[2, 0] > 0
    mask = np.ones((3, 3), dtype=bool)
    mask[0, 2] = mask[2, 0] = False
    assert np.all(diff[mask] == 0)
    assert np.array_equal(b.S, b2.S)


def test_normalized_divergence_is_rescaled():
    raw = DivergenceMatrix(np.array([[0.0, 1.2], [1.2, 0.0]]), "raw_0_2")
    norm = inject([[0.0, 0.6], [0.6, 0.0]])
    a, b = assemble([80, 90], raw, [0.1, 0.3]), assemble([80, 90], norm, [0.1, 0.3])
    assert np.allclose(a.T_hat, b.T_hat, rtol=0, atol=1e-15)


def test_assemble_dimension_mismatch():
    with pytest.raises(DomainError):
        assemble([10, 10, 10], inject(np.zeros((2, 2))), [0.1, 0.1, 0.1])


def test_coupling_upper_bounds_plain():
    cfg = BoundConfig(include_hypothesis_coupling=True)
    div = inject(np.full((3, 3), 0.5))
    coupling = np.random.default_rng(1).uniform(0, 1, (3, 3))
    plain = assemble([100] * 3, div, [0.1] * 3, cfg)
    coupled = assemble([100] * 3, div, [0.1] * 3, cfg, coupling=coupling)
    assert np.all(coupled.T_hat >= plain.T_hat)
    with pytest.raises(UsageError):
        assemble([100] * 3, div, [0.1] * 3, coupling=coupling)


def test_bound_terms_json_roundtrip(tmp_path):
    import json
    b = assemble([100, 200], inject([[0, 0.5], [0.5, 0]]), [0.1, 1.0])
    d = json.loads(b.to_json(tmp_path / "b.json"))
    assert np.allclose(d["T_hat"], b.T_hat)
    assert "transfer_divergence" in d["components"]
