import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circuit_oracle import embed, phase_check_circuit, reflection_circuit
from qspan.numerics import unitary_eigensystem
from qspan.phasesim import (
    PhaseCheckSpec,
    PhaseSimError,
    QueryLedger,
    check_probability,
    kernel_amplitude,
    measurement_distribution,
    phase_check_cost,
    phase_reflection_cost,
    reflection_overlaps,
    sample_phase_check,
)
from qspan.randomized import random_state, random_unitary


def spec(t, m, theta=0.5, eps=0.1):
    return PhaseCheckSpec(theta, eps, t, m)


@pytest.mark.parametrize("t", [1, 2, 5])
def test_kernel_at_zero(t):
    assert kernel_amplitude(0.0, t) == pytest.approx(1.0)


@pytest.mark.parametrize("t", [1, 2, 3, 6])
def test_kernel_vanishes_on_grid(t):
    assert abs(kernel_amplitude(2 * np.pi / 2 ** t, t)) < 1e-12
    assert abs(kernel_amplitude(np.pi, t)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(-10, 10), t=st.integers(1, 8))
def test_kernel_matches_geometric_sum(theta, t):
    direct = np.mean(np.exp(1j * np.arange(2 ** t) * theta))
    assert abs(kernel_amplitude(theta, t) - direct) < 1e-9
    assert abs(kernel_amplitude(theta, t)) <= 1 + 1e-12


@pytest.mark.parametrize("t, m, cost", [(1, 1, 2), (3, 2, 28), (2, 3, 18)])
def test_costs(t, m, cost):
    s = spec(t, m)
    assert phase_check_cost(s) == cost
    assert phase_reflection_cost(s) == 2 * cost


def test_cost_doubles_with_precision():
    ratio = phase_check_cost(spec(21, 1)) / phase_check_cost(spec(20, 1))
    assert ratio == pytest.approx(2.0, rel=1e-5)


@pytest.mark.parametrize("theta, eps", [(0.0, 0.1), (0.5, 0.0), (0.5, 1.0)])
def test_spec_rejects_bad_parameters(theta, eps):
    with pytest.raises(PhaseSimError):
        PhaseCheckSpec.from_precision(theta, eps)


def test_check_on_eigenvectors():
    u = np.diag([1.0, -1.0, 1j])
    for t, m in [(1, 1), (2, 2), (3, 1)]:
        s = spec(t, m)
        assert check_probability(u, [1, 0, 0], s) == pytest.approx(1.0)
        assert check_probability(u, [0, 1, 0], s) == pytest.approx(0.0, abs=1e-12)


def test_two_term_superposition():
    u = np.diag([1.0, -1.0])
    psi = np.array([1, 1]) / np.sqrt(2)
    s = spec(2, 2)
    expected = 0.5 + 0.5 * abs(kernel_amplitude(np.pi, 2)) ** 4
    assert check_probability(u, psi, s) == pytest.approx(expected, abs=1e-12)


def test_rejects_non_unitary_and_unnormalised():
    with pytest.raises(PhaseSimError):
        check_probability(np.eye(2), [1.0, 1.0], spec(1, 1))
    with pytest.raises(Exception):
        check_probability(np.array([[1.0, 1.0], [0.0, 1.0]]), [1.0, 0.0], spec(1, 1))


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("t, m", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_check_probability_matches_circuit(seed, t, m):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 5))
    u, psi = random_unitary(rng, dim), random_state(rng, dim)
    out = phase_check_circuit(u, t, m) @ embed(psi, t, m)
    a_dim = 2 ** (t * m)
    brute = sum(abs(out[k * a_dim]) ** 2 for k in range(dim))
    assert check_probability(u, psi, spec(t, m)) == pytest.approx(brute, abs=1e-8)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("t, m", [(1, 1), (2, 1), (2, 2)])
def test_reflection_matches_circuit(seed, t, m):
    rng = np.random.default_rng(100 + seed)
    dim = int(rng.integers(2, 5))
    u, psi = random_unitary(rng, dim), random_state(rng, dim)
    targets = [random_state(rng, dim) for _ in range(3)] + [psi]
    out = reflection_circuit(u, t, m) @ embed(psi, t, m)
    got, _ = reflection_overlaps(u, psi, targets, spec(t, m))
    for tg, g in zip(targets, got):
        assert abs(np.vdot(embed(tg, t, m), out) - g) < 1e-8
    # distance form of the same check
    dist = np.linalg.norm(out - embed(psi, t, m))
    assert np.sqrt(max(2 - 2 * got[-1].real, 0)) == pytest.approx(dist, abs=1e-7)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("t, m", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_measurement_matches_circuit(seed, t, m):
    rng = np.random.default_rng(200 + seed)
    dim = int(rng.integers(2, 5))
    u, psi = random_unitary(rng, dim), random_state(rng, dim)
    out = reflection_circuit(u, t, m) @ embed(psi, t, m)
    a_dim = 2 ** (t * m)
    brute = [np.sum(np.abs(out[k * a_dim:(k + 1) * a_dim]) ** 2) for k in range(dim)]
    got = measurement_distribution(u, psi, spec(t, m), [[k] for k in range(dim)])
    assert np.allclose(got, brute, atol=1e-8)
    mats = [np.diag(np.eye(dim)[k]) for k in range(dim)]
    assert np.allclose(measurement_distribution(u, psi, spec(t, m), mats), brute, atol=1e-8)


def test_reflection_examples():
    u = np.diag([1.0, -1.0])
    s = spec(1, 1)
    got, _ = reflection_overlaps(u, [1, 0], [[1, 0]], s)
    assert got[0] == pytest.approx(1.0)
    got, _ = reflection_overlaps(u, [0, 1], [[0, 1]], s)
    assert got[0] == pytest.approx(-1.0)


def test_measurement_aligned_eigenvector():
    u = np.diag([1.0, 1j, -1.0])
    p = measurement_distribution(u, [0, 0, 1.0], spec(1, 1), [[0], [1], [2]])
    # a(pi) = 0 at t = 1, so R flips the sign and leaves the register alone
    assert np.allclose(p, [0, 0, 1])
    p = measurement_distribution(u, [1.0, 0, 0], spec(2, 2), [[0], [1], [2]])
    assert np.allclose(p, [1, 0, 0])


def test_measurement_rejects_partial_partition():
    with pytest.raises(PhaseSimError):
        measurement_distribution(np.eye(3), [1.0, 0, 0], spec(1, 1), [[0], [1]])
    with pytest.raises(PhaseSimError):
        measurement_distribution(np.eye(2), [1.0, 0], spec(1, 1), [np.diag([1.0, 0])])


@pytest.mark.parametrize("seed", range(100))
def test_measurement_sums_to_one(seed):
    rng = np.random.default_rng(300 + seed)
    dim = int(rng.integers(2, 7))
    u, psi = random_unitary(rng, dim), random_state(rng, dim)
    s = PhaseCheckSpec(0.3, 0.1, int(rng.integers(1, 5)), int(rng.integers(1, 4)))
    p = measurement_distribution(u, psi, s, [[k] for k in range(dim)])
    assert p.sum() == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("seed", range(100))
def test_sandwich(seed):
    rng = np.random.default_rng(400 + seed)
    dim = int(rng.integers(2, 7))
    u, psi = random_unitary(rng, dim), random_state(rng, dim)
    s = PhaseCheckSpec.from_precision(float(rng.uniform(0.05, 1.5)), float(rng.uniform(0.01, 0.5)))
    es = unitary_eigensystem(u)
    low = np.linalg.norm(es.low_phase_projector(0.0) @ psi) ** 2
    high = np.linalg.norm(es.low_phase_projector(s.theta) @ psi) ** 2 + s.eps
    p = check_probability(es, psi, s)
    assert low - 1e-9 <= p <= high + 1e-9


@pytest.mark.parametrize("seed", range(30))
def test_leakage_and_reflection_fidelity(seed):
    rng = np.random.default_rng(500 + seed)
    dim = int(rng.integers(2, 7))
    u = random_unitary(rng, dim)
    s = PhaseCheckSpec.from_precision(float(rng.uniform(0.05, 1.5)), float(rng.uniform(0.01, 0.5)))
    es = unitary_eigensystem(u)
    high = np.eye(dim) - es.low_phase_projector(s.theta)
    v = high @ random_state(rng, dim)
    if np.linalg.norm(v) < 1e-6:
        return
    v /= np.linalg.norm(v)
    assert check_probability(es, v, s) <= s.eps + 1e-12
    # ||(R + I) v|0>||^2 = 2 + 2 Re<v|R|v> because the output has norm one
    got, _ = reflection_overlaps(es, v, [v], s)
    assert np.sqrt(max(2 + 2 * got[0].real, 0.0)) < s.eps


def test_sampling_and_ledger():
    rng = np.random.default_rng(7)
    ledger = QueryLedger()
    s = spec(2, 1)
    u = np.diag([1.0, -1.0])
    assert all(sample_phase_check(u, [1, 0], s, rng, ledger).sampled for _ in range(20))
    assert not any(sample_phase_check(u, [0, 1], s, rng, ledger).sampled for _ in range(20))
    assert ledger.oracle_queries == 40 * phase_check_cost(s)
    psi = np.array([1, 1]) / np.sqrt(2)
    hits = [sample_phase_check(np.diag([1.0, 1j]), psi, spec(1, 1), rng).sampled
            for _ in range(10_000)]
    # a(pi/2) at t = 1 has |a|^2 = 1/2, so p = 1/2 + 1/4
    assert np.mean(hits) == pytest.approx(0.75, abs=0.02)


def test_ledger_rejects_negative():
    with pytest.raises(PhaseSimError):
        QueryLedger().charge(-1)
