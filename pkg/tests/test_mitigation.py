import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from isingscreen.mitigation import (ConfusionSpec, MitigationError, QuasiDistribution, calibrate,
                                    mitigate, mitigated_expectation, project_to_simplex,
                                    total_variation)
from isingscreen.problem import bits_to_index, index_to_str
from isingscreen.sim import (ReadoutNoise, ShotHistogram, Statevector, apply_readout_noise, sample,
                             sample_counts, noisy_counts)

from conftest import random_ising


def random_histogram(rng, n, shots=5000, support=None):
    support = support or (1 << n)
    probs = np.zeros(1 << n)
    probs[rng.choice(1 << n, support, replace=False)] = rng.random(support)
    probs /= probs.sum()
    return ShotHistogram.from_vector(sample_counts(probs, shots, rng), n)


def random_spec(rng, n):
    return ConfusionSpec.from_rates(rng.uniform(0, 0.15, n), rng.uniform(0, 0.15, n))


def test_identity_is_fixpoint():
    rng = np.random.default_rng(0)
    h = random_histogram(rng, 5)
    q = mitigate(h, ConfusionSpec.identity(5))
    for k, v in h.frequencies().items():
        assert q[k] == pytest.approx(v, abs=1e-15)


def test_single_outcome():
    h = ShotHistogram({"0110": 300}, 300, 4)
    q = mitigate(h, random_spec(np.random.default_rng(1), 4))
    assert q == {"0110": pytest.approx(1.0)}


def test_three_qubit_synthetic_recovery():
    truth = {"000": 0.7, "111": 0.3}
    probs = np.zeros(8)
    probs[0], probs[7] = 0.7, 0.3
    noise = ReadoutNoise.uniform(3, 0.05)
    noisy = noisy_counts(sample_counts(probs, 10**6, 1), noise, 2)
    q = mitigate(ShotHistogram.from_vector(noisy, 3), ConfusionSpec.from_noise(noise))
    assert total_variation(q, truth) < 0.01


def test_restricted_matches_full_solve():
    # with every bitstring observed the restricted system is the full one
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        spec = random_spec(rng, n)
        h = random_histogram(rng, n, shots=50000)
        if len(h.counts) < 1 << n:
            continue
        q = mitigate(h, spec)
        full = np.linalg.solve(spec.full_matrix(), h.to_vector() / h.shots)
        full /= full.sum()
        for k in range(1 << n):
            assert q[index_to_str(k, n)] == pytest.approx(full[k], abs=1e-6)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_restricted_matches_dense_subsystem(n, seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, n)
    h = random_histogram(rng, n, shots=400, support=max(1, (1 << n) // 3))
    keys = sorted(h.counts, key=bits_to_index)
    idx = [bits_to_index(k) for k in keys]
    sub = spec.full_matrix()[np.ix_(idx, idx)]
    x = np.linalg.solve(sub, [h.counts[k] / h.shots for k in keys])
    x /= x.sum()
    q = mitigate(h, spec)
    assert np.allclose([q[k] for k in keys], x, atol=1e-6)
    assert q.total() == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("n", [4, 8])
def test_iterative_agrees_with_direct(n):
    rng = np.random.default_rng(n)
    spec = random_spec(rng, n)
    h = random_histogram(rng, n, shots=3000)
    a = mitigate(h, spec, method="direct")
    b = mitigate(h, spec, method="iterative", tol=1e-12)
    assert all(a[k] == pytest.approx(b[k], abs=1e-8) for k in a)


def test_large_subspace_uses_iterative_path():
    rng = np.random.default_rng(3)
    n = 12
    noise = ReadoutNoise.uniform(n, 0.04)
    h = apply_readout_noise(random_histogram(rng, n, shots=20000, support=600), noise, 4)
    assert len(h.counts) > 1024
    q = mitigate(h, ConfusionSpec.from_noise(noise))
    assert q.total() == pytest.approx(1.0, abs=1e-6)


def test_iteration_cap_reports_residual():
    rng = np.random.default_rng(5)
    spec = random_spec(rng, 6)
    h = random_histogram(rng, 6, shots=5000)
    with pytest.raises(MitigationError) as err:
        mitigate(h, spec, method="iterative", tol=1e-14, max_iter=1)
    assert err.value.residual > 1e-14


def test_input_validation():
    h = ShotHistogram({"01": 10}, 10, 2)
    with pytest.raises(ValueError):
        mitigate(h, ConfusionSpec.identity(3))
    with pytest.raises(ValueError):
        mitigate(h, ConfusionSpec.identity(2), tol=0)
    with pytest.raises(ValueError):
        ConfusionSpec.from_rates([0.6], [0.1])
    with pytest.raises(ValueError):
        ConfusionSpec(np.array([[[0.9, 0.2], [0.2, 0.8]]]))


def test_confusion_json_and_calibration():
    noise = ReadoutNoise((0.02, 0.05, 0.01), (0.03, 0.04, 0.0))
    spec = ConfusionSpec.from_noise(noise)
    assert ConfusionSpec.from_json(json.loads(json.dumps(spec.to_json()))).to_json() == spec.to_json()
    assert spec.to_json() == noise.to_json()
    est = calibrate(noise, shots=200000, seed=1)
    assert np.allclose(est.matrices, spec.matrices, atol=0.003)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
def test_simplex_projection(values):
    w = np.array(values)
    p = project_to_simplex(w)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)
    # optimality: p is the Euclidean projection iff <w - p, q - p> <= 0 for simplex vertices q
    for i in range(w.size):
        q = np.zeros(w.size)
        q[i] = 1.0
        assert (w - p) @ (q - p) <= 1e-9


def test_nearest_probability_drops_negatives():
    q = QuasiDistribution({"00": 1.1, "01": -0.2, "11": 0.1})
    p = q.nearest_probability()
    assert set(p) <= {"00", "11"}
    assert sum(p.values()) == pytest.approx(1.0)
    assert QuasiDistribution.from_json(q.to_json()) == q


def test_expectation_examples():
    m = random_ising(np.random.default_rng(4), 3)
    assert mitigated_expectation(m, QuasiDistribution({"101": 1.0})) == pytest.approx(m.energy("101"))
    h = ShotHistogram({index_to_str(k, 3): 100 for k in range(8)}, 800, 3)
    q = mitigate(h, ConfusionSpec.identity(3))
    assert mitigated_expectation(m, q) == pytest.approx(h.expectation(m))
    with pytest.raises(ValueError):
        mitigated_expectation(m, QuasiDistribution({"10": 1.0}))


def test_mitigation_improves_ground_energy(model, spectrum):
    noise = ReadoutNoise.uniform(12, 0.02)
    spec = ConfusionSpec.from_noise(noise)
    psi = Statevector.basis(spectrum.bitstrings(0)[0])
    e0 = spectrum.energies[0]
    wins = 0
    for seed in range(10):
        h = apply_readout_noise(sample(psi, 8192, seed), noise, 1000 + seed)
        wins += abs(mitigated_expectation(model, mitigate(h, spec)) - e0) < abs(h.expectation(model) - e0)
    assert wins == 10
