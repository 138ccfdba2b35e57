import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from isingscreen.ansatz import AnsatzSpec, build_ansatz, count_resources
from isingscreen.problem import IsingModel, exact_spectrum
from isingscreen.sim import ReadoutNoise, apply_circuit, diag_expectation, run_amplitudes
from isingscreen.vqe import (Backend, OptimizationError, OptimizerConfig, VqeResult,
                             exact_energy_fn, parameter_shift_gradient, qaoa_sweep, vqe_run)

from conftest import random_ising


def dense_model(n, seed=0):
    return random_ising(np.random.default_rng(seed), n, density=1.0)


def test_table_resource_counts(model):
    assert count_resources(AnsatzSpec("ry", 12, 1)) == (11, 24)
    dense = dense_model(12)
    for p, cnots in [(1, 132), (2, 264), (3, 396)]:
        assert count_resources(AnsatzSpec("qaoa", 12, p), dense) == (cnots, 2 * p)
    assert count_resources(AnsatzSpec("ry", 2, 1)) == (1, 4)


@given(st.integers(1, 10), st.integers(1, 4))
def test_resource_closed_forms(n, depth):
    spec = AnsatzSpec("ry", n, depth)
    c = build_ansatz(spec)
    assert count_resources(spec) == (c.count("cnot"), c.num_params)
    assert c.num_params == n * (depth + 1)
    m = random_ising(np.random.default_rng(n), n, density=0.5)
    qspec = AnsatzSpec("qaoa", n, depth)
    qc = build_ansatz(qspec, m)
    assert count_resources(qspec, m) == (2 * qc.count("rzz"), qc.num_params)
    assert qc.count("rzz") == len(m.couplings) * depth


def test_ry_layout():
    c = build_ansatz(AnsatzSpec("ry", 3, 1))
    kinds = [(g.kind, g.qubits) for g in c.gates]
    assert kinds == [("ry", (0,)), ("ry", (1,)), ("ry", (2,)), ("cnot", (0, 1)),
                     ("cnot", (1, 2)), ("ry", (0,)), ("ry", (1,)), ("ry", (2,))]


def test_spec_validation():
    with pytest.raises(ValueError):
        AnsatzSpec("ry", 4, 0)
    with pytest.raises(ValueError):
        AnsatzSpec("uccsd", 4)
    with pytest.raises(ValueError):
        build_ansatz(AnsatzSpec("qaoa", 3), dense_model(4))


def test_qaoa_zero_angles_uniform(model):
    for m in (model, dense_model(6)):
        c = build_ansatz(AnsatzSpec("qaoa", m.n, 2), m)
        psi = apply_circuit(c, np.zeros(4))
        assert np.allclose(psi.probabilities(), 1.0 / (1 << m.n))
        assert diag_expectation(m, psi) == pytest.approx(m.diagonal().mean(), abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_parameter_shift_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = random_ising(rng, 6)
    c = build_ansatz(AnsatzSpec("ry", 6, 2))
    x = rng.uniform(-math.pi, math.pi, c.num_params)
    grad = parameter_shift_gradient(m, c, x)
    f = exact_energy_fn(m, c)
    h = 1e-6
    fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.size)])
    assert np.max(np.abs(grad - fd)) <= 1e-6


def test_parameter_shift_on_qaoa_matches_adjoint():
    from isingscreen.sim import backprop
    m = dense_model(5, 3)
    c = build_ansatz(AnsatzSpec("qaoa", 5, 2), m)
    x = np.array([0.1, -0.3, 0.2, 0.4])
    amps = run_amplitudes(c, x)
    assert np.allclose(parameter_shift_gradient(m, c, x), backprop(c, x, amps, m.diagonal() * amps),
                       atol=1e-9)


def test_single_spin():
    m = IsingModel(1, [1.0], np.zeros((1, 1)), offset=0.25)
    res = vqe_run(m, AnsatzSpec("ry", 1), OptimizerConfig(restarts=2))
    assert res.top_bitstring == "1"
    assert res.energy == pytest.approx(-1.0, abs=1e-9)
    assert m.score(res.energy) == pytest.approx(-0.75, abs=1e-9)


@pytest.mark.parametrize("kind", ["simplex", "lbfgs"])
def test_exact_vqe_small_model(kind):
    m = dense_model(5, 7)
    gs = exact_spectrum(m, 1)
    res = vqe_run(m, AnsatzSpec("ry", 5, 1),
                  OptimizerConfig(kind=kind, seed=1, restarts=5, init_range=math.pi, hops=5))
    assert res.energy >= gs.energies[0] - 1e-9
    assert res.top_bitstring in gs.bitstrings(0)
    trace = res.best_trace
    assert len(res.trace) > 0 and np.all(np.diff(trace) <= 0)


def test_vqe_embedded_lbfgs(model, spectrum):
    res = vqe_run(model, AnsatzSpec("ry", 12, 1),
                  OptimizerConfig(kind="lbfgs", seed=0, restarts=2, hops=20))
    assert res.top_bitstring == spectrum.bitstrings(0)[0]
    assert res.top_probability >= 0.99


def test_sampled_vqe_not_below_ground():
    m = dense_model(4, 2)
    gs = exact_spectrum(m, 1).energies[0]
    shots = 2000
    backend = Backend.sampled(shots, seed=5)
    res = vqe_run(m, AnsatzSpec("ry", 4, 1),
                  OptimizerConfig(kind="spsa", seed=2, max_iter=300, restarts=2), backend)
    d = m.diagonal()
    sigma = math.sqrt(res.state.probabilities() @ d**2 - res.exact_energy**2) / math.sqrt(shots)
    assert res.energy >= gs - 3 * sigma - 1e-12
    assert res.exact_energy >= gs - 1e-9


def test_noisy_backend_runs():
    m = dense_model(3, 1)
    backend = Backend.sampled(500, seed=1, noise=ReadoutNoise.uniform(3, 0.05))
    res = vqe_run(m, AnsatzSpec("ry", 3, 1), OptimizerConfig(kind="spsa", max_iter=50), backend)
    assert 0 < res.top_probability <= 1
    assert Backend.from_json(backend.to_json()) == backend


def test_nonfinite_objective_raises():
    m = dense_model(3)

    def bad(amps, probs, freqs, rng):
        return float("nan")

    with pytest.raises(OptimizationError):
        vqe_run(m, AnsatzSpec("ry", 3), OptimizerConfig(max_iter=10), penalty=bad)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(kind="cobyla")
    with pytest.raises(ValueError):
        OptimizerConfig(a=0)
    with pytest.raises(ValueError):
        Backend(shots=0)
    with pytest.raises(ValueError):
        vqe_run(dense_model(3), AnsatzSpec("ry", 3), OptimizerConfig(kind="lbfgs"),
                Backend.sampled(100))
    assert OptimizerConfig(max_iter=500).stability == 50


def test_result_json_roundtrip():
    m = dense_model(3)
    res = vqe_run(m, AnsatzSpec("ry", 3), OptimizerConfig(max_iter=200))
    doc = json.loads(json.dumps(res.to_json(m)))
    back = VqeResult.from_json(doc)
    assert back.top_bitstring == res.top_bitstring
    assert back.trace == res.trace and np.array_equal(back.params, res.params)
    assert doc["score"] == pytest.approx(m.score(res.energy))


def test_qaoa_sweep_monotone_small():
    m = dense_model(6, 4)
    results = qaoa_sweep(m, [1, 2, 3], OptimizerConfig(seed=0, restarts=2))
    e = [r.exact_energy for r in results]
    assert e[0] >= e[1] >= e[2]
    assert [r.params.size for r in results] == [2, 4, 6]
