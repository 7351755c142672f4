import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqae.clifford import (
    LABELS, AnnealSchedule, CliffordCircuit, InvalidMove, StabilizerDataset, Tableau,
    apply_clifford_move, c1_words, clifford_cost, clifford_to_gate_circuit,
    generate_stabilizer_dataset, label_state, metropolis_train, random_clifford_scrambler,
    stab_pauli_expectation, stab_product_input, stab_purity, stabilizer_cost,
)
from dqae.state import (
    CNOT, HADAMARD, RngStream, fidelity, ghz_state, pauli_expectation, product_state,
    purity_single, random_product_state, zero_state,
)

S_GATE = np.diag([1, 1j])


def random_moves(n, length, gen):
    return random_clifford_scrambler(n, length, gen).moves


def ghz_tableau(n):
    t = Tableau(n).h(0)
    for k in range(1, n):
        t.cnot(0, k)
    return t


# -- tableau basics -----------------------------------------------------------------

def test_product_inputs():
    assert Tableau(3).stabilizer_strings() == ["+ZII", "+IZI", "+IIZ"]
    assert stab_product_input(["Z+"] * 3) == Tableau(3)
    t = stab_product_input(["X+"] * 2)
    assert t.stabilizer_strings() == ["+XI", "+IX"]
    assert np.allclose(t.to_statevector(), np.full(4, 0.5))


@pytest.mark.parametrize("n", [1, 3, 6])
def test_mixed_labels_match_product_state(n):
    gen = np.random.default_rng(n)
    labels = [LABELS[i] for i in gen.integers(6, size=n)]
    t = stab_product_input(labels, n)
    t.check_valid()
    assert fidelity(t.to_statevector(), label_state(labels)) > 1 - 1e-12


def test_product_input_validation():
    with pytest.raises(ValueError):
        stab_product_input(["Z+", "Q+"])
    with pytest.raises(ValueError):
        stab_product_input(["Z+"], n=2)


def test_hadamard_and_bell():
    t = apply_clifford_move(Tableau(1), ("c1", 0, c1_words().index("h")))
    assert t.stabilizer_strings() == ["+X"]
    bell = apply_clifford_move(stab_product_input(["X+", "Z+"]), ("cnot", 0, 1))
    assert sorted(bell.stabilizer_strings()) == ["+XX", "+ZZ"]
    # the move returns a copy
    assert Tableau(1).stabilizer_strings() == ["+Z"]


def test_invalid_moves():
    t = Tableau(3)
    for bad in [("cnot", 1, 1), ("cnot", 2, 1), ("cnot", 0, 3), ("c1", 3, 0), ("c1", 0, 24),
                ("swap", 0, 1)]:
        with pytest.raises(InvalidMove):
            apply_clifford_move(t, bad)
    with pytest.raises(InvalidMove):
        CliffordCircuit(2, [("cnot", 1, 0)])


def test_pauli_expectation_examples():
    t = Tableau(1)
    assert stab_pauli_expectation(t, 0, "z") == 1
    assert stab_pauli_expectation(t, 0, "x") == 0
    minus = stab_product_input(["Y-"])
    assert stab_pauli_expectation(minus, 0, "y") == -1
    bell = Tableau(2).h(0).cnot(0, 1)
    assert all(stab_pauli_expectation(bell, 0, a) == 0 for a in "xyz")


def test_purity_examples():
    t = stab_product_input(["X-", "Y+", "Z-", "Z+"])
    assert [stab_purity(t, k) for k in range(4)] == [1.0] * 4
    g = ghz_tableau(5)
    assert [stab_purity(g, k) for k in range(5)] == [0.5] * 5
    assert np.array_equal(g.purities(), np.full(5, 0.5))
    assert fidelity(g.to_statevector(), ghz_state(5)) > 1 - 1e-12


# -- tableau vs statevector oracle ------------------------------------------------------

def _gate_by_gate(n, moves, psi):
    from dqae.state import apply_1q, apply_2q
    for m in moves:
        if m[0] == "cnot":
            psi = apply_2q(psi, m[1], m[2], CNOT)
        else:
            for ch in c1_words()[m[2]]:
                psi = apply_1q(psi, m[1], HADAMARD if ch == "h" else S_GATE)
    return psi


def test_200_move_sequence_matches_statevector():
    gen = np.random.default_rng(5)
    moves = random_moves(5, 200, gen)
    t = Tableau(5)
    for m in moves:
        t = apply_clifford_move(t, m)
    t.check_valid()
    psi = _gate_by_gate(5, moves, zero_state(5))
    # tableau states are defined up to global phase
    assert abs(abs(np.vdot(t.to_statevector(), psi)) - 1) < 1e-10


@given(st.integers(1, 6), st.integers(0, 2**31))
def test_tableau_and_statevector_observables_agree(n, seed):
    gen = np.random.default_rng(seed)
    labels = [LABELS[i] for i in gen.integers(6, size=n)]
    cc = random_clifford_scrambler(n, 4 * n, gen)
    t = cc.apply(stab_product_input(labels))
    psi = clifford_to_gate_circuit(cc).apply([], label_state(labels))
    for k in range(n):
        for a in "xyz":
            assert abs(t.pauli_expectation(k, a) - pauli_expectation(psi, k, a)) < 1e-10
        assert abs(t.purity(k) - purity_single(psi, k)) < 1e-10
        assert t.purities()[k] == t.purity(k)
    cost_sv = 1 - np.mean([purity_single(psi, k) for k in range(n)])
    assert abs(stabilizer_cost([t]) - cost_sv) < 1e-10


@given(st.integers(2, 6), st.integers(0, 2**31))
def test_scrambled_tableaux_stay_valid(n, seed):
    gen = np.random.default_rng(seed)
    t = random_clifford_scrambler(n, 30, gen).apply(Tableau(n))
    t.check_valid()  # commuting and independent
    assert set(t.purities()) <= {0.5, 1.0}


def test_gate_circuit_on_all_product_inputs():
    gen = np.random.default_rng(11)
    cc = random_clifford_scrambler(4, 40, gen)
    u = clifford_to_gate_circuit(cc)
    assert u.n_params == 0
    import itertools
    inputs = [list(lab) for lab in itertools.product(LABELS, repeat=4)]
    states = u.apply([], np.array([label_state(lab) for lab in inputs]))
    tabs = cc.apply_many([stab_product_input(lab) for lab in inputs])
    for psi, t in zip(states, tabs):
        assert np.allclose([purity_single(psi, k) for k in range(4)], t.purities(), atol=1e-10)


def test_gate_circuit_trivial_cases():
    assert len(clifford_to_gate_circuit(CliffordCircuit(2)).gates) == 0
    h = clifford_to_gate_circuit(CliffordCircuit(1, [("c1", 0, c1_words().index("h"))]))
    assert len(h.gates) == 1
    assert np.allclose(h.apply([], zero_state(1)), HADAMARD @ zero_state(1))


# -- single-qubit Clifford group ------------------------------------------------------

def test_c1_words_form_the_group():
    words = c1_words()
    assert len(words) == 24 and words[0] == ""
    assert words[1:3] == ("h", "s")
    mats = []
    for w in words:
        m = np.eye(2, dtype=complex)
        for ch in w:
            m = (HADAMARD if ch == "h" else S_GATE) @ m
        mats.append(m)
    # distinct up to phase
    for i in range(24):
        for j in range(i):
            assert abs(abs(np.trace(mats[i].conj().T @ mats[j])) - 2) > 1e-9


# -- circuits and scramblers ------------------------------------------------------------

def test_scrambler_determinism_and_length():
    assert len(random_clifford_scrambler(3, 0, 1)) == 0
    assert random_clifford_scrambler(4, None, 7).moves == random_clifford_scrambler(4, None, 7).moves
    assert len(random_clifford_scrambler(4, None, 7)) == 80
    with pytest.raises(ValueError):
        random_clifford_scrambler(3, -1, 0)


def test_scrambler_entangles_frequently():
    hits = 0
    for seed in range(100):
        t = random_clifford_scrambler(4, None, seed).apply(Tableau(4))
        hits += bool(np.any(t.purities() == 0.5))
    assert hits / 100 > 0.9


def test_circuit_json_round_trip():
    cc = random_clifford_scrambler(3, 12, 2)
    d = json.loads(cc.to_json())
    assert d["n"] == 3 and all(m["m"] in ("cnot", "c1") for m in d["moves"])
    assert CliffordCircuit.from_json(cc.to_json()) == cc


def test_compose_order():
    a = CliffordCircuit(2, [("c1", 0, c1_words().index("h"))])
    b = CliffordCircuit(2, [("cnot", 0, 1)])
    assert sorted(a.compose(b).apply(Tableau(2)).stabilizer_strings()) == ["+XX", "+ZZ"]


def test_dataset_round_trip_and_views():
    ds = generate_stabilizer_dataset(4, 3, 2, seed=9)
    again = StabilizerDataset.from_dict(json.loads(ds.to_json()))
    assert again.to_dict() == ds.to_dict()
    for t, psi in zip(ds.tableaux("test"), ds.statevectors("test")):
        assert abs(abs(np.vdot(t.to_statevector(), psi)) - 1) < 1e-10
    with pytest.raises(ValueError):
        generate_stabilizer_dataset(4, 0, 2, seed=0)


# -- annealing ----------------------------------------------------------------------------

def test_schedule():
    s = AnnealSchedule()
    t = s.temperature(np.arange(0, 100000, 1000))
    assert t[0] == pytest.approx(0.1) and np.all(t > 0) and np.all(np.diff(t) <= 0)
    h = AnnealSchedule("harmonic", tau=10.0)
    assert h.temperature(10) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        AnnealSchedule("linear")
    with pytest.raises(ValueError):
        AnnealSchedule(beta=1.5)


def test_product_data_returns_identity_at_step_zero():
    data = [stab_product_input(["X+", "Y-", "Z+"])]
    res = metropolis_train(data, rng=0)
    assert res.steps == 0 and res.converged and len(res.circuit) == 0


def test_bell_pair_converges():
    bell = Tableau(2).h(0).cnot(0, 1)
    cc, steps, ok = metropolis_train([bell], AnnealSchedule(max_steps=1000), rng=3)
    assert ok and steps <= 1000
    out = cc.apply(bell)
    assert [stab_purity(out, k) for k in range(2)] == [1.0, 1.0]
    assert all(m[0] == "c1" or m[1] < m[2] for m in cc.moves)


def test_cost_quantization():
    ds = generate_stabilizer_dataset(5, 3, 0, seed=1)
    c = stabilizer_cost(ds.tableaux())
    m = c * 2 * 3 * 5
    assert abs(m - round(m)) < 1e-12 and 0 <= round(m) <= 15


def test_training_reaches_zero_cost_and_is_seeded():
    ds = generate_stabilizer_dataset(5, 4, 20, seed=2)
    sched = AnnealSchedule(max_steps=50000)
    a = metropolis_train(ds.tableaux(), sched, RngStream(0, "anneal"))
    b = metropolis_train(ds.tableaux(), sched, RngStream(0, "anneal"))
    assert a.converged and a.circuit.moves == b.circuit.moves
    assert clifford_cost(a.circuit, ds.tableaux()) == 0.0
    assert a.cost == 0.0


def test_budget_exhaustion_reports_best():
    ds = generate_stabilizer_dataset(6, 6, 0, seed=4)
    res = metropolis_train(ds.tableaux(), AnnealSchedule(max_steps=3), rng=0)
    assert not res.converged and res.steps == 3
    assert 0 < res.best_cost <= stabilizer_cost(ds.tableaux())
    assert res.cost == clifford_cost(res.circuit, ds.tableaux())


def test_restarts_double_the_budget():
    ds = generate_stabilizer_dataset(6, 6, 0, seed=4)
    res = metropolis_train(ds.tableaux(), AnnealSchedule(max_steps=3, restarts=2), rng=0)
    assert not res.converged and res.attempts == 3 and res.steps == 3 + 6 + 12


def test_zero_temperature_is_greedy():
    # with T -> 0 only non-increasing moves are kept, so the cost never rises
    ds = generate_stabilizer_dataset(5, 4, 0, seed=6)
    tabs = ds.tableaux()
    sched = AnnealSchedule(t0=1e-300, max_steps=2000)
    res = metropolis_train(tabs, sched, rng=1)
    cur = stabilizer_cost(tabs)
    prefix = CliffordCircuit(5)
    for m in res.circuit.moves:
        prefix = CliffordCircuit(5, prefix.moves + [m])
        nxt = clifford_cost(prefix, tabs)
        assert nxt <= cur + 1e-15
        cur = nxt


def test_hot_anneal_accepts_uphill_moves():
    ds = generate_stabilizer_dataset(5, 4, 0, seed=6)
    tabs = ds.tableaux()
    res = metropolis_train(tabs, AnnealSchedule(t0=1e6, beta=1.0, max_steps=400), rng=1)
    costs = [clifford_cost(CliffordCircuit(5, res.circuit.moves[:i]), tabs)
             for i in range(len(res.circuit) + 1)]
    assert np.any(np.diff(costs) > 0)


def test_training_validation():
    with pytest.raises(ValueError):
        metropolis_train([])
    with pytest.raises(ValueError):
        metropolis_train([Tableau(2), Tableau(3)])


def test_out_of_distribution_generalization():
    ds = generate_stabilizer_dataset(4, 8, 50, seed=3)
    res = metropolis_train(ds.tableaux(), AnnealSchedule(max_steps=50000), RngStream(1, "anneal"))
    assert res.converged
    assert clifford_cost(res.circuit, ds.tableaux("test")) == 0.0
    full = clifford_to_gate_circuit(ds.scrambler).compose(clifford_to_gate_circuit(res.circuit))
    gen = np.random.default_rng(0)
    for _ in range(10):
        phi = full.apply([], random_product_state(4, gen))
        assert 1 - np.mean([purity_single(phi, k) for k in range(4)]) < 1e-6
