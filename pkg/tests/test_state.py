import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import dense_kron_marginals
from dqae.state import (
    CNOT, HADAMARD, PAULI, RngStream, apply_1q, apply_2q, basis_state, bell_state,
    dense_operator, fidelity, ghz_state, haar_random_1q, pauli_expectation, product_state,
    purities, purity_bell_oracle, purity_single, random_state, random_unitary,
    reconstruction_fidelity, reduced_density_matrix, sample_purity, state_from_bytes,
    state_from_json, state_to_bytes, state_to_json, zero_state,
)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


# -- gate application ---------------------------------------------------------

def test_apply_1q_identity_and_hadamard():
    assert np.allclose(apply_1q(zero_state(1), 0, np.eye(2)), KET0)
    assert np.allclose(apply_1q(zero_state(1), 0, HADAMARD), PLUS)


def test_apply_1q_matches_dense_oracle(rng):
    psi = random_state(3, rng)
    u = random_unitary(2, rng)
    out = apply_1q(psi, 1, u)
    dense = np.kron(np.eye(2), np.kron(u, np.eye(2)))
    assert np.allclose(out, dense @ psi, atol=1e-12)
    assert abs(np.linalg.norm(out) - 1) < 1e-12


def test_apply_1q_rejects_bad_input():
    with pytest.raises(IndexError):
        apply_1q(zero_state(2), 2, np.eye(2))
    with pytest.raises(ValueError):
        apply_1q(zero_state(2), 0, np.array([[1, 0], [0, 2]]))


def test_cnot_truth_table():
    # |10> in qubit order (q0=1, q1=0) is index 1
    out = apply_2q(basis_state(2, 1), 0, 1, CNOT)
    assert np.allclose(out, basis_state(2, 3))
    assert np.allclose(apply_2q(zero_state(2), 1, 0, CNOT), zero_state(2))


def test_apply_2q_matches_dense_oracle(rng):
    psi = random_state(4, rng)
    u = random_unitary(4, rng)
    out = apply_2q(psi, 2, 0, u)
    # build the 16x16 matrix element by element: local index 2*b2 + b0
    full = np.zeros((16, 16), dtype=complex)
    for i in range(16):
        for j in range(16):
            rest_i, rest_j = i & ~0b101, j & ~0b101
            if rest_i != rest_j:
                continue
            li = 2 * ((i >> 2) & 1) + (i & 1)
            lj = 2 * ((j >> 2) & 1) + (j & 1)
            full[i, j] = u[li, lj]
    assert np.allclose(out, full @ psi, atol=1e-12)


def test_apply_2q_needs_distinct_qubits():
    with pytest.raises(ValueError):
        apply_2q(zero_state(2), 1, 1, CNOT)


def test_norm_drift_over_many_gates():
    gen = np.random.default_rng(5)
    psi = random_state(5, gen)
    us = [random_unitary(2, gen) for _ in range(50)]
    for i in range(10_000):
        psi = apply_1q(psi, i % 5, us[i % 50])
    assert abs(np.linalg.norm(psi) - 1) < 1e-8


# -- observables --------------------------------------------------------------

def test_pauli_expectation_examples():
    assert pauli_expectation(zero_state(1), 0, "z") == pytest.approx(1)
    assert pauli_expectation(PLUS, 0, "x") == pytest.approx(1)
    for a in "xyz":
        assert abs(pauli_expectation(bell_state(), 0, a)) < 1e-15


def test_purity_examples():
    assert purity_single(zero_state(2), 0) == pytest.approx(1)
    assert purity_single(bell_state(), 0) == pytest.approx(0.5)
    for k in range(3):
        assert purity_single(ghz_state(3), k) == pytest.approx(0.5)


def test_bell_route_examples(rng):
    assert purity_bell_oracle(zero_state(1), 0) == pytest.approx(1)
    assert purity_bell_oracle(bell_state(), 0) == pytest.approx(0.5)
    psi = random_state(4, rng)
    assert abs(purity_bell_oracle(psi, 2) - purity_single(psi, 2)) < 1e-10


def test_bell_route_register_limit():
    with pytest.raises(ValueError):
        purity_bell_oracle(zero_state(13), 0)


def test_reduced_matrix_against_explicit_partial_trace(rng):
    psi = random_state(3, rng)
    full = np.outer(psi, psi.conj()).reshape([2] * 6)
    # axes: (q2, q1, q0, q2', q1', q0'); trace out q2 and q0
    rho1 = np.einsum("aibajb->ij", full)
    assert np.allclose(reduced_density_matrix(psi, 1), rho1, atol=1e-14)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_three_purity_routes_agree(n, seed):
    psi = random_state(n, seed)
    for k in range(n):
        tr = purity_single(psi, k, "trace")
        assert abs(tr - purity_single(psi, k, "pauli")) <= 1e-12
        assert abs(tr - purity_single(psi, k, "bell")) <= 1e-10
        assert 0.5 - 1e-12 <= tr <= 1 + 1e-12


def test_fidelity_examples(rng):
    assert fidelity(KET0, KET0) == 1
    assert fidelity(KET0, KET1) == 0
    a, b = random_state(3, rng), random_state(3, rng)
    direct = abs(sum(x.conjugate() * y for x, y in zip(a, b))) ** 2
    assert abs(fidelity(a, b) - direct) < 1e-12


class _Dense:
    def __init__(self, u):
        self.u, self.n_qubits = u, u.shape[0].bit_length() - 1

    def apply(self, theta, psi):
        return self.u @ psi


def test_reconstruction_fidelity_examples(rng):
    assert reconstruction_fidelity(product_state([PLUS, KET1, KET0])) == pytest.approx(1)
    assert reconstruction_fidelity(ghz_state(2)) == pytest.approx(0.25)
    psi = random_state(4, rng)
    u = random_unitary(16, rng)
    phi = u @ psi
    oracle = np.vdot(phi, dense_kron_marginals(phi) @ phi).real
    assert abs(reconstruction_fidelity(psi, _Dense(u)) - oracle) < 1e-10


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_reconstruction_fidelity_bounds(n, seed):
    gen = np.random.default_rng(seed)
    f = reconstruction_fidelity(random_state(n, gen), _Dense(random_unitary(1 << n, gen)))
    assert 2.0 ** -n - 1e-12 <= f <= 1 + 1e-12


@given(st.integers(2, 5), st.floats(1e-9, 1e-6), st.integers(0, 2**32 - 1))
def test_near_product_has_near_unit_fidelity(n, eps, seed):
    gen = np.random.default_rng(seed)
    psi = product_state([haar_random_1q(gen) for _ in range(n)]) + eps * random_state(n, gen)
    psi /= np.linalg.norm(psi)
    if np.sum(1 - purities(psi)) <= 1e-10:
        assert reconstruction_fidelity(psi) >= 1 - 1e-9


# -- random states and products -------------------------------------------------

def test_haar_1q_moments_and_determinism():
    gen = RngStream(3, "haar").generator()
    zs = np.array([pauli_expectation(haar_random_1q(gen), 0, "z") for _ in range(100_000)])
    assert abs(zs.mean()) < 0.01
    # second moment of a uniform Bloch coordinate is 1/3
    assert abs((zs ** 2).mean() - 1 / 3) < 0.01
    a = haar_random_1q(RngStream(9, 1))
    b = haar_random_1q(RngStream(9, 1))
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1) < 1e-12


def test_rng_streams_are_independent():
    a = RngStream(1, 0).generator().random(1000)
    b = RngStream(1, 1).generator().random(1000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.15


def test_product_state_ordering():
    assert np.allclose(product_state([KET0, KET0]), basis_state(2, 0))
    # |+> on qubit 0, |1> on qubit 1: indices 2 (q1=1,q0=0) and 3
    expect = np.zeros(4, dtype=complex)
    expect[[2, 3]] = 1 / np.sqrt(2)
    assert np.allclose(product_state([PLUS, KET1]), expect)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_product_state_is_pure_everywhere(n, seed):
    gen = np.random.default_rng(seed)
    psi = product_state([haar_random_1q(gen) for _ in range(n)])
    assert np.all(np.abs(purities(psi) - 1) < 1e-12)


def test_dense_operator_agrees_with_apply(rng):
    psi = random_state(3, rng)
    u = random_unitary(4, rng)
    assert np.allclose(dense_operator(3, (0, 2), u) @ psi, apply_2q(psi, 0, 2, u))


def test_sampled_purity_is_unbiased_enough():
    psi = random_state(2, 11)
    exact = purity_single(psi, 0)
    est = np.mean([sample_purity(psi, 0, 2000, RngStream(4, i)) for i in range(50)])
    assert abs(est - exact) < 0.02
    est_b = np.mean([sample_purity(psi, 0, 2000, RngStream(5, i), "bell") for i in range(50)])
    assert abs(est_b - exact) < 0.02


# -- serialization --------------------------------------------------------------

def test_json_and_binary_roundtrip(rng):
    psi = random_state(3, rng)
    assert np.array_equal(state_from_json(state_to_json(psi)), psi)
    blob = state_to_bytes(psi)
    assert blob[:4] == b"DQAE"
    assert np.array_equal(state_from_bytes(blob), psi)
    with pytest.raises(ValueError):
        state_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        state_from_bytes(blob[:-8])
