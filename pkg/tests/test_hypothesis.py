import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stlf.errors import DomainError, FormatError, TrainingError
from stlf.hypothesis import (Arch, Hypothesis, TrainConfig, accuracy, combine, divergence_error,
                             empirical_error, loss_and_grad, train)
from stlf.scenario import DeviceDataset


def blobs(n=200, seed=0, sep=6.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.standard_normal((n, 2)) + np.where(y[:, None] == 1, sep / 2, -sep / 2)
    return DeviceDataset(x, y, 0, y)


def test_zero_step_keeps_init():
    h0 = Hypothesis.init(Arch(2, 0, 2), seed=3)
    h1 = train(h0, blobs(), TrainConfig(iterations=1, learning_rate=0.0))
    assert np.array_equal(h0.params, h1.params)


def test_zero_iterations_disallowed():
    with pytest.raises(DomainError):
        TrainConfig(iterations=0)


def test_separable_blobs_are_learned():
    data = blobs()
    h = train(Hypothesis.init(Arch(2, 0, 2)), data, TrainConfig(100, 10, 0.01, seed=1))
    assert accuracy(h, data, data.labels) >= 0.95


def test_training_is_deterministic():
    data = blobs()
    cfg = TrainConfig(50, 10, 0.05, seed=9)
    h0 = Hypothesis.init(Arch(2, 4, 2), seed=2)
    assert np.array_equal(train(h0, data, cfg).params, train(h0, data, cfg).params)


def test_no_labels_is_a_training_error():
    d = DeviceDataset(np.zeros((4, 2)), [-1, -1, -1, -1])
    with pytest.raises(TrainingError):
        train(Hypothesis.init(Arch(2, 0, 2)), d, TrainConfig())


def test_empirical_error_counts_unlabeled_as_wrong():
    data = blobs(100)
    h = train(Hypothesis.init(Arch(2, 0, 2)), data, TrainConfig(200, 10, 0.1))
    assert empirical_error(h, data) == pytest.approx(1 - accuracy(h, data, data.labels))
    unl = DeviceDataset(data.features, np.full(100, -1), 0, data.labels)
    assert empirical_error(h, unl) == 1.0
    half = data.labels.copy()
    half[::2] = -1
    perfect = DeviceDataset(data.features, half)
    correct = h.predict(data.features)
    assert np.all(correct[1::2] == data.labels[1::2])
    assert empirical_error(h, perfect) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        empirical_error(h, DeviceDataset(np.zeros((0, 2)), []))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), frac=st.floats(0.0, 1.0))
def test_empirical_error_at_least_unlabeled_fraction(seed, frac):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((40, 3))
    y = rng.integers(0, 3, 40)
    y[rng.random(40) < frac] = -1
    d = DeviceDataset(x, y)
    h = Hypothesis.init(Arch(3, 0, 3), seed=seed, scale=1.0)
    assert empirical_error(h, d) >= d.num_unlabeled / len(d) - 1e-15


def test_divergence_error_cases():
    data = blobs(50)
    h = Hypothesis(Arch(2, 0, 2), [1.0, 0.0, -1.0, 0.0, 0.0, 0.0])
    flipped = Hypothesis(Arch(2, 0, 2), [-1.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    assert divergence_error(h, h, data) == 0.0
    assert divergence_error(h, flipped, data) == 1.0
    rng = np.random.default_rng(4)
    a = Hypothesis(Arch(2, 0, 2), rng.standard_normal(6))
    b = Hypothesis(Arch(2, 0, 2), rng.standard_normal(6))
    count = sum(int(np.argmax(a.logits(x[None])[0]) != np.argmax(b.logits(x[None])[0])) for x in data.features)
    assert divergence_error(a, b, data) == count / len(data)
    with pytest.raises(DomainError):
        divergence_error(a, Hypothesis.zeros(Arch(2, 0, 3)), data)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_divergence_error_symmetric_and_triangle(seed):
    rng = np.random.default_rng(seed)
    data = DeviceDataset(rng.standard_normal((30, 3)), np.zeros(30, dtype=int))
    a, b, c = (Hypothesis(Arch(3, 0, 3), rng.standard_normal(12)) for _ in range(3))
    assert divergence_error(a, b, data) == divergence_error(b, a, data)
    assert divergence_error(a, c, data) <= divergence_error(a, b, data) + divergence_error(b, c, data) + 1e-15


def test_combine_examples():
    arch = Arch(1, 0, 1)
    h1, h2 = Hypothesis(arch, [1.0, 2.0]), Hypothesis(arch, [3.0, 4.0])
    assert np.array_equal(combine([h1, h2], [1.0, 0.0]).params, h1.params)
    assert np.array_equal(combine([h1, h2], [0.5, 0.5]).params, [2.0, 3.0])
    assert np.array_equal(combine([h1, h1, h1], [0.2, 0.3, 0.5]).params, h1.params)
    with pytest.raises(DomainError):
        combine([h1, h2], [0.5, 0.6])
    with pytest.raises(DomainError):
        combine([h1, Hypothesis.zeros(Arch(2, 0, 1))], [0.5, 0.5])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 5))
def test_combine_is_affine(seed, k):
    rng = np.random.default_rng(seed)
    arch = Arch(3, 2, 4)
    hs = [Hypothesis(arch, rng.standard_normal(arch.num_params)) for _ in range(k)]
    w = rng.dirichlet(np.ones(k))
    w[-1] = 1.0 - w[:-1].sum()
    got = combine(hs, w).params
    want = sum(wi * h.params for wi, h in zip(w, hs))
    assert np.allclose(got, want, rtol=0, atol=1e-12)


def test_output_average_mode():
    rng = np.random.default_rng(0)
    arch = Arch(2, 0, 3)
    hs = [Hypothesis(arch, rng.standard_normal(9)) for _ in range(2)]
    x = rng.standard_normal((5, 2))
    mix = combine(hs, [0.25, 0.75], mode="output")
    want = 0.25 * hs[0].predict_proba(x) + 0.75 * hs[1].predict_proba(x)
    assert np.allclose(mix.predict_proba(x), want)


def test_accuracy_examples():
    rng = np.random.default_rng(1)
    y = np.repeat(np.arange(10), 20)
    d = DeviceDataset(rng.standard_normal((200, 2)), y)
    const = Hypothesis(Arch(2, 0, 10), np.r_[np.zeros(20), np.eye(10)[3]])
    assert accuracy(const, d, y) == pytest.approx(0.1)
    with pytest.raises(DomainError):
        accuracy(const, d, y[:-1])
    with pytest.raises(DomainError):
        accuracy(const, DeviceDataset(np.zeros((0, 2)), []), [])


@pytest.mark.parametrize("hidden", [0, 4])
def test_gradient_matches_central_differences(hidden):
    rng = np.random.default_rng(0)
    h = Hypothesis.init(Arch(3, hidden, 3), seed=1, scale=0.5)
    x, y = rng.standard_normal((3, 3)), np.array([0, 1, 2])
    _, g = loss_and_grad(h, h.params, x, y)
    for k in range(h.arch.num_params):
        e = np.zeros_like(g)
        e[k] = 1e-6
        num = (loss_and_grad(h, h.params + e, x, y)[0] - loss_and_grad(h, h.params - e, x, y)[0]) / 2e-6
        assert abs(g[k] - num) <= 1e-5 * max(1e-8, abs(num) + abs(g[k])) + 1e-10


def test_serialization_roundtrip():
    h = Hypothesis.init(Arch(4, 3, 2), seed=5)
    blob = h.to_bytes()
    back = Hypothesis.from_bytes(blob)
    assert back.arch == h.arch and np.array_equal(back.params, h.params)
    with pytest.raises(FormatError):
        Hypothesis.from_bytes(blob[:-8])
    with pytest.raises(FormatError):
        Hypothesis.from_bytes(b"abc")
