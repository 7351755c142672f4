import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqae.capacity import (
    CapacityConfig, Encoded, capacity_cost, capacity_objective, decode, encode_measure,
    generate_capacity_dataset, round_trip_fidelity,
)
from dqae.circuits import Circuit, build_he
from dqae.state import (
    fidelity, haar_random_1q, pauli_expectation, product_state, purity_single, random_state,
)
from dqae.training import (
    TrainConfig, cost_and_gradient, cost_train, generate_dataset, purity_objective, train,
)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


def identity(n):
    return Circuit(n, [], 0)


def oracle_cost(phi, cfg, corrected=True):
    n = cfg.n_total
    c_train = 1 - np.mean([purity_single(phi, k) for k in range(n)])
    z = [pauli_expectation(phi, k, "z") for k in cfg.reference_qubits]
    ref = sum(1 - v ** 2 for v in z) if corrected else sum(v ** 2 for v in z)
    return c_train + ref


def test_config():
    cfg = CapacityConfig(2, 1)
    assert cfg.n_total == 3 and list(cfg.reference_qubits) == [2]
    with pytest.raises(ValueError):
        CapacityConfig(0, 1)
    with pytest.raises(ValueError):
        CapacityConfig(2, -1)


def test_cost_examples():
    cfg = CapacityConfig(2, 1)
    gen = np.random.default_rng(0)
    prod = [haar_random_1q(gen), haar_random_1q(gen)]
    assert capacity_cost(identity(3), [], product_state(prod + [KET0]), cfg) < 1e-12
    assert capacity_cost(identity(3), [], product_state(prod + [KET1]), cfg) < 1e-12
    assert capacity_cost(identity(3), [], product_state(prod + [PLUS]), cfg) == pytest.approx(1.0)
    # the literal sign rewards <Z> = 0 instead
    lit = CapacityConfig(2, 1, corrected=False)
    assert capacity_cost(identity(3), [], product_state(prod + [PLUS]), lit) < 1e-12
    assert capacity_cost(identity(3), [], product_state(prod + [KET0]), lit) == pytest.approx(1.0)


@given(st.integers(1, 3), st.integers(1, 2), st.integers(0, 2**31), st.booleans())
def test_cost_matches_term_by_term_oracle(N, K, seed, corrected):
    cfg = CapacityConfig(N, K, corrected)
    psi = random_state(N + K, seed)
    val = capacity_cost(identity(N + K), [], psi, cfg)
    assert val >= 0
    assert abs(val - oracle_cost(psi, cfg, corrected)) < 1e-12
    # added term is non-negative
    assert val >= cost_train(identity(N + K), [], psi) - 1e-15


def test_objective_cotangent_matches_finite_difference():
    cfg = CapacityConfig(2, 2)
    c = build_he(4, 2)
    gen = np.random.default_rng(3)
    data = np.array([random_state(4, gen) for _ in range(2)])
    theta = gen.uniform(0, 2 * np.pi, c.n_params)
    _, g = cost_and_gradient(c, theta, data, objective=capacity_objective(cfg))
    h = 1e-6
    for j in range(0, c.n_params, 5):
        e = np.zeros_like(theta)
        e[j] = h
        fd = (capacity_cost(c, theta + e, data, cfg) - capacity_cost(c, theta - e, data, cfg)) / (2 * h)
        assert abs(fd - g[j]) < 1e-7


def test_k0_is_plain_objective():
    assert capacity_objective(CapacityConfig(3, 0)) is purity_objective
    base = generate_dataset("he", 3, 2, 0, 5)
    c = build_he(3, 2)
    tc = TrainConfig(max_epochs=15, convergence_tol=1e-12, seed=5)
    a = train(c, base.train, tc)
    b = train(c, base.train, tc, objective=capacity_objective(CapacityConfig(3, 0)))
    assert np.array_equal(a.theta, b.theta)
    assert np.array_equal(a.trajectory.column("c_train"), b.trajectory.column("c_train"))


def test_dimension_mismatch():
    cfg = CapacityConfig(2, 1)
    with pytest.raises(ValueError):
        capacity_cost(identity(2), [], random_state(2, 0), cfg)
    with pytest.raises(ValueError):
        encode_measure(random_state(2, 0), identity(3), [], cfg)
    with pytest.raises(ValueError):
        decode([KET0, KET0], [], identity(3), [], cfg)


def test_encode_reference_one_through_identity():
    cfg = CapacityConfig(2, 1)
    psi = product_state([PLUS, KET0, KET1])
    enc = encode_measure(psi, identity(3), [], cfg, rng=0)
    assert enc.bits == [1] and enc.probability == pytest.approx(1.0)
    assert round_trip_fidelity(psi, identity(3), [], cfg) == pytest.approx(1.0)


def test_k0_encode_is_plain_dqae():
    cfg = CapacityConfig(3, 0)
    gen = np.random.default_rng(1)
    fs = [haar_random_1q(gen) for _ in range(3)]
    psi = product_state(fs)
    enc = encode_measure(psi, identity(3), [], cfg)
    assert enc.bits == [] and enc.probability == pytest.approx(1.0)
    out = decode(enc.factors, enc.bits, identity(3), [], cfg)
    assert fidelity(out, psi) == pytest.approx(1.0)


def test_measurement_samples_born_rule():
    cfg = CapacityConfig(1, 1)
    psi = product_state([KET0, np.array([np.sqrt(0.3), np.sqrt(0.7)], dtype=complex)])
    bits = [encode_measure(psi, identity(2), [], cfg, rng=s).bits[0] for s in range(400)]
    assert 0.6 < np.mean(bits) < 0.8


def test_encoded_json_round_trip():
    enc = Encoded([PLUS, KET1], [1, 0], 1.0)
    d = json.loads(enc.to_json())
    assert set(d) == {"factors", "bits"} and d["bits"] == [1, 0]
    back = Encoded.from_dict(d)
    assert np.allclose(back.factors[0], PLUS) and back.bits == [1, 0]


def test_dataset_bits_span_all_values():
    cfg = CapacityConfig(2, 2)
    ds = generate_capacity_dataset(cfg, 6, seed=4, depth=2)
    assert ds.bits.tolist() == [[0, 0], [1, 0], [0, 1], [1, 1], [0, 0], [1, 0]]
    assert ds.states.shape == (6, 16)
    # undoing the scrambler leaves the references in their basis states
    for s, b in zip(ds.states, ds.bits):
        raw = ds.scrambler.apply_adjoint(ds.scrambler_theta, s)
        for j, k in enumerate(cfg.reference_qubits):
            assert pauli_expectation(raw, k, "z") == pytest.approx(1 - 2 * b[j])
    again = generate_capacity_dataset(cfg, 6, seed=4, depth=2)
    assert np.array_equal(again.states, ds.states)


def test_trained_toy_round_trip():
    cfg = CapacityConfig(2, 1)
    ds = generate_capacity_dataset(cfg, 2, seed=0)
    c = build_he(3, 6)
    tc = TrainConfig(optimizer="lbfgs", max_epochs=3000, convergence_tol=1e-12, seed=0, restarts=3)
    r = train(c, ds.states, tc, objective=capacity_objective(cfg))
    assert capacity_cost(c, r.theta, ds.states, cfg) < 1e-10
    for i, (s, b) in enumerate(zip(ds.states, ds.bits)):
        enc = encode_measure(s, c, r.theta, cfg, rng=i)
        assert enc.probability > 1 - 1e-6
        # post-measurement product part: block of U psi selected by the outcome
        block = c.apply(r.theta, s).reshape(2, 4)[enc.bits[0]]
        chi = block / np.linalg.norm(block)
        assert min(purity_single(chi, k) for k in range(2)) > 1 - 1e-10
        assert round_trip_fidelity(s, c, r.theta, cfg, rng=i) >= 1 - 1e-9
        # a flipped bit decodes to something else
        bad = decode(enc.factors, [1 - enc.bits[0]], c, r.theta, cfg)
        assert fidelity(bad, s) < 1 - 1e-3
