"""Data quantum Fisher information metric and the rank diagnostics built on it.

The metric of a circuit ``U(theta)`` over a training ensemble ``rho_L`` is

    Q_nm = 4 Re[ tr(d_n U rho_L d_m U^dag) - tr(d_n U rho_L U^dag) tr(U rho_L d_m U^dag) ]

and is assembled here from derivative states ``d_n U |psi_l>``. Its maximal
numerical rank over random ``theta`` tells when the circuit is
overparameterized (``M_c``) and how many training states generalize
(``L_c``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .circuits import Circuit, build_with_params, derivative_state, derivative_states
from .state import RngStream

RANK_TOL = 1e-10


@dataclass
class DqfimReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    rank: int
    tol: float = RANK_TOL
    thetas: list = field(default_factory=list)


def dqfim_matrix(c: Circuit, theta, data) -> np.ndarray:
    """DQFIM of ``c`` at ``theta`` for the uniform mixture of ``data`` states."""
    states = np.atleast_2d(np.asarray(data, dtype=complex))
    if states.shape[-1] != 1 << c.n_qubits:
        raise ValueError("data states do not match circuit width")
    L = len(states)
    phi, dphi = derivative_states(c, theta, states)
    # dphi: (M, L, D)
    flat = dphi.transpose(1, 0, 2)  # (L, M, D)
    gram = np.einsum("lmd,lnd->mn", flat.conj(), flat) / L
    a = np.einsum("ld,lmd->m", phi.conj(), flat) / L
    q = 4.0 * (gram.real - np.outer(a.conj(), a).real)
    return 0.5 * (q + q.T)


def qfim_pure(c: Circuit, theta, state) -> np.ndarray:
    """Pure-state quantum Fisher information metric, directly from ``|d psi>``."""
    psi = c.apply(theta, state)
    m = c.n_params
    d = np.array([derivative_state(c, theta, state, j) for j in range(m)])
    overlap = d.conj() @ psi
    return 4.0 * (d.conj() @ d.T - np.outer(overlap, overlap.conj())).real


def numerical_rank(matrix, rel_tol: float = RANK_TOL) -> int:
    """Number of eigenvalues above ``rel_tol * lambda_max``."""
    q = np.asarray(matrix, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("rank needs a square matrix")
    if not np.allclose(q, q.T, atol=1e-10, rtol=0):
        raise ValueError("matrix is not symmetric")
    ev = np.linalg.eigvalsh(q)
    top = ev[-1] if ev.size else 0.0
    if top <= 0:
        return 0
    return int(np.sum(ev > rel_tol * top))


def dqfim_report(c: Circuit, theta, data, rel_tol: float = RANK_TOL) -> DqfimReport:
    q = dqfim_matrix(c, theta, data)
    ev = np.linalg.eigvalsh(q)[::-1]
    return DqfimReport(q, ev, numerical_rank(q, rel_tol), rel_tol, [np.asarray(theta)])


# -- rank estimation over random instances -----------------------------------


def rank_dataset(family: str, n: int, L: int, seed: int, depth: Optional[int] = None):
    """``L`` states ``V (x)_j |phi_j>`` with ``V`` drawn from ``family``."""
    from .training import generate_dataset
    return generate_dataset(family, n, L, 0, seed, depth=depth).train


def estimate_RL(family: str, n: int, L: int, M: int, n_theta_samples: int = 5,
                seed: int = 0, data=None, rel_tol: float = RANK_TOL) -> int:
    """Largest DQFIM rank over ``n_theta_samples`` random parameter draws."""
    if M < 1:
        raise ValueError("need M >= 1")
    circ = build_with_params(family, n, M)
    if data is None:
        data = rank_dataset(family, n, L, seed)
    gen = RngStream(seed, ("theta", L, M)).generator()
    best = 0
    for _ in range(n_theta_samples):
        theta = gen.uniform(0, 2 * np.pi, circ.n_params)
        best = max(best, numerical_rank(dqfim_matrix(circ, theta, data), rel_tol))
    return best


class SweepCapExceeded(RuntimeError):
    pass


def critical_params(family: str, n: int, L: int, seed: int = 0,
                    n_theta_samples: int = 5, m_cap: int = 4096,
                    data=None) -> tuple:
    """Smallest ``M`` with ``R_L(M) = R_L(2M)``; returns ``(M_c, saturated rank)``.

    Doubling finds a saturated bracket; bisection then locates the first
    ``M`` whose rank already equals the saturated value.
    """
    if data is None:
        data = rank_dataset(family, n, L, seed)

    ranks = {}

    def rank_at(m):
        if m not in ranks:
            ranks[m] = estimate_RL(family, n, L, m, n_theta_samples, seed, data)
        return ranks[m]

    m = 1
    while True:
        if 2 * m > m_cap:
            raise SweepCapExceeded(
                f"rank still growing at M={m} (rank {rank_at(m)}); raise m_cap")
        if rank_at(m) == rank_at(2 * m):
            break
        m *= 2
    sat = rank_at(m)
    lo, hi = m // 2, m  # rank(lo) < sat (or lo == 0), rank(hi) == sat
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rank_at(mid) >= sat:
            hi = mid
        else:
            lo = mid
    return hi, sat


def saturated_rank(family: str, n: int, L: int, seed: int = 0,
                   n_theta_samples: int = 5, m_cap: int = 4096, data=None) -> int:
    return critical_params(family, n, L, seed, n_theta_samples, m_cap, data)[1]


def critical_data(family: str, n: int, seed: int = 0, n_theta_samples: int = 3,
                  m_over: Optional[int] = None, l_cap: int = 64) -> dict:
    """Exact ``L_c`` (first ``L`` with ``R_L = R_{L+1}``) and ``2 R_inf / R_1``.

    With ``m_over`` given, ranks are evaluated at that single
    overparameterized ``M``. By default each ``R_L`` is the saturated rank
    found by :func:`critical_params`, which avoids building ``4^n``-sized
    matrices for families whose ranks saturate early.
    """
    full = rank_dataset(family, n, l_cap + 1, seed)
    ranks = {}

    def r(L):
        if L not in ranks:
            if m_over is None:
                ranks[L] = critical_params(family, n, L, seed, n_theta_samples,
                                           data=full[:L])[1]
            else:
                ranks[L] = estimate_RL(family, n, L, m_over, n_theta_samples, seed, full[:L])
        return ranks[L]

    L = 1
    while r(L) != r(L + 1):
        L += 1
        if L >= l_cap:
            raise SweepCapExceeded(f"rank still growing at L={L}")
    r_inf = r(L)
    return {"lc_exact": L, "lc_approx": 2.0 * r_inf / r(1), "r1": r(1),
            "r_inf": r_inf, "ranks": dict(sorted(ranks.items()))}


def he_rank_formula(n: int, L: int) -> int:
    """Closed-form saturated rank for the hardware-efficient ansatz.

    The expression peaks at ``L = 2^n``; larger ensembles keep ``4^n - 1``.
    """
    L = min(L, 2 ** n)
    return min(2 ** (n + 1) * L - L * L - 1, 4 ** n - 1)


def report_json(report: dict) -> str:
    keys = ("ansatz", "n", "L", "M", "rank", "eigenvalues", "mc", "lc_exact", "lc_approx")
    out = {k: report.get(k) for k in keys}
    if out["eigenvalues"] is not None:
        out["eigenvalues"] = [float(x) for x in out["eigenvalues"]]
    return json.dumps(out)
