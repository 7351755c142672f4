import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqae.loss_channel import (
    MODES, SWEEP_HEADER, InfeasibleBudget, LossSpec, approx_copies, failure, failure_product,
    failure_unencoded, marginals_after_loss, min_copies, scaling_fits, simulate_transport,
    sweep, sweep_csv, wilson_interval,
)
from dqae.state import ghz_state, random_product_state, zero_state
from dqae.training import scrambler_circuit


def mc_within(rate, p, trials, k=3.0):
    sigma = np.sqrt(max(p * (1 - p), 1e-12) / trials)
    return abs(rate - p) <= k * sigma


# -- closed forms -------------------------------------------------------------------

def test_failure_edge_cases():
    for R in (1, 5):
        assert failure_unencoded(7, 0.0, R) == 0.0
        assert failure_unencoded(7, 1.0, R) == 1.0
        assert failure_product(7, 0.0, R) == 0.0
        assert failure_product(7, 1.0, R) == 1.0
    assert failure_product(1, 0.3, 4) == pytest.approx(0.3 ** 4)
    with pytest.raises(ValueError):
        failure_unencoded(3, 0.1, 0)
    with pytest.raises(ValueError):
        failure_product(3, 1.5, 2)


def test_failure_reference_values():
    qe = failure_unencoded(20, 0.1, 36)
    assert abs(qe - 0.00940) < 1e-5 and qe <= 0.01
    # direct evaluation, written out
    assert qe == pytest.approx((1 - 0.9 ** 20) ** 36, rel=1e-12)
    assert abs(failure_product(20, 0.1, 4) - 1.998e-3) < 1e-6
    assert failure_product(20, 0.1, 4) == pytest.approx(1 - (1 - 1e-4) ** 20, rel=1e-12)


@given(st.integers(1, 40), st.floats(0.01, 0.9), st.integers(1, 50))
def test_failure_monotone_in_R(n, q, R):
    for f in (failure_unencoded, failure_product):
        assert 0 <= f(n, q, R + 1) <= f(n, q, R) <= 1


def test_heterogeneous_failure_matches_homogeneous():
    spec = LossSpec.homogeneous(6, 0.15)
    assert spec.is_homogeneous and spec.n == 6
    assert failure(spec, 3, "unencoded") == pytest.approx(failure_unencoded(6, 0.15, 3))
    assert failure(spec, 3, "product") == pytest.approx(failure_product(6, 0.15, 3))
    het = LossSpec((0.1, 0.3))
    assert failure(het, 2, "product") == pytest.approx(1 - (1 - 0.01) * (1 - 0.09))
    assert failure(het, 2, "unencoded") == pytest.approx((1 - 0.9 * 0.7) ** 2)
    with pytest.raises(ValueError):
        failure(het, 2, "teleport")


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        LossSpec((0.1, 1.2))
    with pytest.raises(ValueError):
        LossSpec(())
    assert LossSpec(0.2).q == (0.2,)


# -- approximations and copy counts -----------------------------------------------------

def test_approx_reference_values():
    assert approx_copies(20, 0.1, 0.01, "unencoded") == pytest.approx(37.88, abs=5e-3)
    assert approx_copies(20, 0.1, 0.01, "product") == pytest.approx(3.30, abs=5e-3)
    with pytest.raises(ValueError):
        approx_copies(20, 0.0, 0.01, "product")
    with pytest.raises(ValueError):
        approx_copies(20, 0.1, 0.01, "other")


def test_approx_tracks_exact_in_validity_regime():
    # -ln(Q)/p replaces -ln(Q)/-ln(1-p); for small p the gap tends to ln(1/Q)/2
    # (2.30 at Q = 0.01), plus at most one from rounding up
    gap = np.log(100) / 2 + 1
    for q in (0.05, 0.1, 0.2):
        for n in range(4, 65, 4):
            if (1 - q) ** n <= 0.25:
                d = approx_copies(n, q, 0.01, "unencoded") - min_copies(n, q, 0.01, "unencoded")
                assert 0 <= d <= gap
            assert abs(approx_copies(n, q, 0.01, "product") - min_copies(n, q, 0.01, "product")) <= 2


def test_min_copies_examples():
    assert min_copies(20, 0.1, 0.01, "unencoded") == 36
    assert min_copies(20, 0.1, 0.01, "product") == 4
    for mode in MODES:
        assert min_copies(20, 0.0, 0.01, mode) == 1


@given(st.integers(1, 30), st.floats(0.01, 0.6), st.floats(1e-4, 0.5),
       st.sampled_from(MODES))
def test_min_copies_is_minimal(n, q, budget, mode):
    R = min_copies(n, q, budget, mode)
    f = failure_unencoded if mode == "unencoded" else failure_product
    assert f(n, q, R) <= budget
    assert R == 1 or f(n, q, R - 1) > budget


@given(st.lists(st.floats(0.0, 0.5), min_size=1, max_size=10), st.sampled_from(MODES))
def test_heterogeneous_bounded_by_worst_qubit(qs, mode):
    spec = LossSpec(tuple(qs))
    assert min_copies(spec.n, spec, 0.01, mode) <= min_copies(spec.n, spec.q_max, 0.01, mode)


def test_min_copies_errors():
    with pytest.raises(InfeasibleBudget):
        min_copies(2, LossSpec((0.1, 1.0)), 0.01, "product")
    with pytest.raises(ValueError):
        min_copies(2, 0.1, 1.0, "product")
    with pytest.raises(ValueError):
        min_copies(3, LossSpec((0.1, 0.1)), 0.01, "product")
    with pytest.raises(ValueError):
        min_copies(3, 0.1, 0.01, "nope")


def test_scaling_separation():
    fit = scaling_fits(range(4, 65), 0.1)
    assert fit["product_within_log_envelope"]
    assert fit["unencoded_r2"] > 0.99
    assert fit["unencoded_log_slope"] == pytest.approx(fit["expected_log_slope"], rel=0.1)
    assert fit["R_product"][-1] <= 5 and fit["R_unencoded"][-1] > 1000


def test_sweep_csv():
    rows = sweep([4, 8], [0.1], 0.01)
    text = sweep_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert tuple(parsed[0]) == SWEEP_HEADER == ("n", "q", "budget", "mode", "R_exact",
                                                 "R_approx", "Q_at_R")
    assert len(parsed) == 1 + 2 * 2
    for r in rows:
        assert r["Q_at_R"] <= r["budget"]


# -- Wilson intervals -------------------------------------------------------------------

def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi and hi - lo == pytest.approx(0.1918, abs=1e-3)
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(10, 10)[1] == pytest.approx(1.0)
    assert 0 < wilson_interval(0, 10)[1] < 1
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


# -- Monte Carlo transport --------------------------------------------------------------

def test_perfect_disentangler_without_loss():
    v = scrambler_circuit("he", 4, 3)
    theta = np.random.default_rng(0).uniform(0, 2 * np.pi, v.n_params)
    psi = v.apply(theta, random_product_state(4, 1))
    out = simulate_transport(psi, v.inverse(), -theta, LossSpec.homogeneous(4, 0.0),
                             R=1, trials=50)
    assert out.rate_product == 1.0 and out.rate_unencoded == 1.0
    assert out.min_fidelity > 1 - 1e-10


def test_forced_survival_on_ghz():
    out = simulate_transport(ghz_state(3), None, None, LossSpec.homogeneous(3, 0.5), R=2,
                             trials=10, force_survival=True)
    assert out.rate_product == 1.0
    assert np.allclose(out.fidelity, 0.125)
    assert np.allclose(marginals_after_loss(ghz_state(3)), np.eye(2) / 2)


def test_mc_product_rate_within_3_sigma():
    trials = 100_000
    out = simulate_transport(zero_state(8), None, None, LossSpec.homogeneous(8, 0.2), R=6,
                             trials=trials, rng=3)
    assert mc_within(1 - out.rate_product, failure_product(8, 0.2, 6), trials)
    assert mc_within(1 - out.rate_unencoded, failure_unencoded(8, 0.2, 6), trials)


def test_masks_consistent_with_success_flags():
    out = simulate_transport(zero_state(3), None, None, LossSpec((0.2, 0.5, 0.7)), R=3,
                             trials=2000, rng=4)
    m = out.masks
    assert np.array_equal(out.success_product, m.any(axis=1).all(axis=1))
    assert np.array_equal(out.success_unencoded, m.all(axis=2).any(axis=1))
    # unencoded success implies product success
    assert np.all(out.success_product[out.success_unencoded])
    for t in range(50):
        for j in range(3):
            if out.selected[t, j] >= 0:
                r = out.selected[t, j]
                assert m[t, r, j] and not m[t, :r, j].any()
            else:
                assert not m[t, :, j].any()
    f = out.fidelity
    assert np.all(np.isnan(f[~out.success_product]))


@given(st.integers(2, 5), st.integers(0, 2**31))
def test_fidelity_bounds(n, seed):
    gen = np.random.default_rng(seed)
    v = scrambler_circuit("he", n, 2)
    psi = v.apply(gen.uniform(0, 2 * np.pi, v.n_params), random_product_state(n, gen))
    out = simulate_transport(psi, None, None, LossSpec.homogeneous(n, 0.3), R=2, trials=20,
                             rng=seed)
    f = out.fidelity[np.isfinite(out.fidelity)]
    assert np.all(f >= 2.0 ** -n - 1e-12) and np.all(f <= 1 + 1e-12)


def test_transport_determinism_and_report():
    args = (zero_state(2), None, None, LossSpec.homogeneous(2, 0.3), 2, 500)
    a = simulate_transport(*args, rng=8)
    b = simulate_transport(*args, rng=8)
    assert np.array_equal(a.masks, b.masks)
    rep = json.loads(a.to_json())
    assert set(rep) >= {"success_product", "ci_product", "success_unencoded", "ci_unencoded",
                        "fidelity_mean", "fidelity_min", "trials", "R"}
    lo, hi = rep["ci_product"]
    assert lo <= rep["success_product"] <= hi


def test_transport_validation():
    with pytest.raises(ValueError):
        simulate_transport(zero_state(2), None, None, LossSpec.homogeneous(3, 0.1), 1, 10)
    with pytest.raises(ValueError):
        simulate_transport(zero_state(2), None, None, LossSpec.homogeneous(2, 0.1), 1, 0)
    with pytest.raises(ValueError):
        simulate_transport(zero_state(2), None, None, LossSpec.homogeneous(2, 0.1), 0, 10)
