"""Qubit-loss channel: failure probabilities, copy counts and transport simulation.

Each of ``R`` copies of an ``n``-qubit register loses qubit ``j`` with
probability ``q_j``. Sending the entangled state directly needs one copy to
arrive intact; after disentangling it suffices that every qubit index
survives in at least one copy.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .state import RngLike, all_marginals, as_generator, product_marginal_fidelity

MODES = ("unencoded", "product")
SWEEP_HEADER = ("n", "q", "budget", "mode", "R_exact", "R_approx", "Q_at_R")


class InfeasibleBudget(ValueError):
    """No finite number of copies meets the failure budget."""


@dataclass(frozen=True)
class LossSpec:
    q: tuple

    def __post_init__(self):
        q = tuple(float(v) for v in np.atleast_1d(self.q))
        if not q:
            raise ValueError("need at least one qubit")
        if any(not 0.0 <= v <= 1.0 for v in q):
            raise ValueError("loss probabilities must lie in [0, 1]")
        object.__setattr__(self, "q", q)

    @classmethod
    def homogeneous(cls, n: int, q: float) -> "LossSpec":
        return cls((q,) * n)

    @property
    def n(self) -> int:
        return len(self.q)

    @property
    def q_max(self) -> float:
        return max(self.q)

    @property
    def is_homogeneous(self) -> bool:
        return len(set(self.q)) == 1


def _check_R(R):
    if R < 1:
        raise ValueError("need R >= 1 copies")


def failure_unencoded(n: int, q: float, R: int) -> float:
    """``(1 - (1-q)^n)^R``: no copy arrives complete."""
    _check_R(R)
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    p_intact = (1.0 - q) ** n
    return float((1.0 - p_intact) ** R)


def failure_product(n: int, q: float, R: int) -> float:
    """``1 - (1 - q^R)^n``: some qubit index is lost in every copy."""
    _check_R(R)
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    qr = q ** R
    if qr >= 1.0:
        return 1.0
    return float(-np.expm1(n * np.log1p(-qr)))


def failure(loss: LossSpec, R: int, mode: str) -> float:
    """Exact failure probability for per-qubit loss rates."""
    _check_R(R)
    q = np.asarray(loss.q)
    if mode == "unencoded":
        return float((1.0 - np.prod(1.0 - q)) ** R)
    if mode == "product":
        qr = q ** R
        if np.any(qr >= 1.0):
            return 1.0
        return float(-np.expm1(np.sum(np.log1p(-qr))))
    raise ValueError(f"unknown mode {mode!r}")


def approx_copies(n: int, q: float, Q: float, mode: str) -> float:
    """Large-``n`` / small-``Q`` copy estimates (natural logs).

    unencoded: ``-ln(Q) / (1-q)^n``, valid once ``(1-q)^n`` is small.
    product:   ``ln(Q/n) / ln(q)``, valid when ``Q`` and ``q^R`` are small.
    """
    if not (0 < Q < 1 and 0 < q < 1):
        raise ValueError("need 0 < Q < 1 and 0 < q < 1")
    if mode == "unencoded":
        return float(-np.log(Q) / (1.0 - q) ** n)
    if mode == "product":
        return float(np.log(Q / n) / np.log(q))
    raise ValueError(f"unknown mode {mode!r}")


def min_copies(n: int, loss, budget: float, mode: str, r_cap: int = 1 << 40) -> int:
    """Smallest ``R`` with exact failure probability at most ``budget``.

    ``loss`` is either a scalar rate (homogeneous) or a :class:`LossSpec`.
    Raises :class:`InfeasibleBudget` if no ``R`` works (some ``q_j = 1``).
    """
    if not 0 < budget < 1:
        raise ValueError("budget must lie in (0, 1)")
    spec = loss if isinstance(loss, LossSpec) else LossSpec.homogeneous(n, float(loss))
    if spec.n != n:
        raise ValueError("loss spec width does not match n")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if spec.q_max >= 1.0:
        raise InfeasibleBudget(f"a qubit is lost with certainty; {mode} transport cannot succeed")

    def ok(R):
        return failure(spec, R, mode) <= budget

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > r_cap:
            raise InfeasibleBudget("copy count exceeds search cap")
    lo = hi // 2  # fails (or 0)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# -- Monte Carlo transport ---------------------------------------------------------


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple:
    if trials <= 0:
        raise ValueError("need trials >= 1")
    z = norm.ppf(0.5 + confidence / 2)
    p = successes / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return float(max(0.0, centre - half)), float(min(1.0, centre + half))


@dataclass
class TransportOutcome:
    trials: int
    R: int
    success_product: np.ndarray
    success_unencoded: np.ndarray
    selected: Optional[np.ndarray] = None  # (trials, n) lowest surviving copy, -1 if none
    masks: Optional[np.ndarray] = None  # (trials, R, n) survival flags
    fidelity: np.ndarray = field(default_factory=lambda: np.zeros(0))  # nan on failure

    @property
    def rate_product(self) -> float:
        return float(self.success_product.mean())

    @property
    def rate_unencoded(self) -> float:
        return float(self.success_unencoded.mean())

    def ci(self, mode: str, confidence: float = 0.95) -> tuple:
        s = self.success_product if mode == "product" else self.success_unencoded
        return wilson_interval(int(s.sum()), self.trials, confidence)

    @property
    def mean_fidelity(self) -> float:
        f = self.fidelity[np.isfinite(self.fidelity)]
        return float(f.mean()) if f.size else float("nan")

    @property
    def min_fidelity(self) -> float:
        f = self.fidelity[np.isfinite(self.fidelity)]
        return float(f.min()) if f.size else float("nan")

    def report(self) -> dict:
        return {
            "trials": self.trials, "R": self.R,
            "success_product": self.rate_product, "ci_product": list(self.ci("product")),
            "success_unencoded": self.rate_unencoded, "ci_unencoded": list(self.ci("unencoded")),
            "fidelity_mean": self.mean_fidelity, "fidelity_min": self.min_fidelity,
        }

    def to_json(self) -> str:
        return json.dumps(self.report())


def simulate_transport(psi, circuit, theta, loss: LossSpec, R: int, trials: int,
                       rng: RngLike = 0, force_survival: bool = False,
                       keep_masks: Optional[bool] = None, chunk: int = 20000) -> TransportOutcome:
    """Monte Carlo of the disentangle / send ``R`` copies / reconstruct protocol.

    Leakage detection is an ideal erasure flag per qubit. For a product
    success the receiver keeps the lowest-index surviving copy of each
    qubit and re-entangles; the reconstruction fidelity is then
    ``<phi| (x)_k rho_k |phi>`` with ``phi = U psi`` (copies are identical,
    so the choice of copy does not matter).
    """
    _check_R(R)
    if trials < 1:
        raise ValueError("need trials >= 1")
    psi = np.asarray(psi, dtype=complex)
    n = loss.n
    if psi.shape[-1] != 1 << n:
        raise ValueError("state width does not match loss spec")
    phi = psi if circuit is None else circuit.apply(theta, psi)
    f_rec = product_marginal_fidelity(phi)
    if keep_masks is None:
        keep_masks = trials * R * n <= 20_000_000
    gen = as_generator(rng)
    q = np.asarray(loss.q)
    succ_p = np.empty(trials, dtype=bool)
    succ_u = np.empty(trials, dtype=bool)
    selected = np.empty((trials, n), dtype=np.int64)
    masks = np.empty((trials, R, n), dtype=bool) if keep_masks else None
    for start in range(0, trials, chunk):
        stop = min(trials, start + chunk)
        if force_survival:
            alive = np.ones((stop - start, R, n), dtype=bool)
        else:
            alive = gen.random((stop - start, R, n)) >= q
        any_copy = alive.any(axis=1)
        succ_p[start:stop] = any_copy.all(axis=1)
        succ_u[start:stop] = alive.all(axis=2).any(axis=1)
        selected[start:stop] = np.where(any_copy, alive.argmax(axis=1), -1)
        if keep_masks:
            masks[start:stop] = alive
    fid = np.where(succ_p, f_rec, np.nan)
    return TransportOutcome(trials, R, succ_p, succ_u, selected, masks, fid)


def marginals_after_loss(phi) -> np.ndarray:
    """Single-qubit marginals available to the receiver (same for all copies)."""
    return all_marginals(np.asarray(phi, dtype=complex))


# -- copy-count sweeps -----------------------------------------------------------


def sweep(ns: Sequence[int], qs: Sequence[float], budget: float = 0.01) -> list:
    """Exact and approximate copy counts over an ``(n, q)`` grid."""
    rows = []
    for q in qs:
        for n in ns:
            for mode in MODES:
                R = min_copies(n, q, budget, mode)
                fail = failure_unencoded(n, q, R) if mode == "unencoded" else failure_product(n, q, R)
                rows.append({"n": n, "q": q, "budget": budget, "mode": mode, "R_exact": R,
                             "R_approx": approx_copies(n, q, budget, mode), "Q_at_R": fail})
    return rows


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([r["n"], repr(float(r["q"])), repr(float(r["budget"])), r["mode"],
                    r["R_exact"], repr(float(r["R_approx"])), repr(float(r["Q_at_R"]))])
    return buf.getvalue()


def _r2(x, y, deg=1):
    coef = np.polyfit(x, y, deg)
    resid = y - np.polyval(coef, x)
    ss = np.sum((y - y.mean()) ** 2)
    return coef, (1.0 - np.sum(resid ** 2) / ss) if ss > 0 else 1.0


def scaling_fits(ns: Sequence[int], q: float, budget: float = 0.01) -> dict:
    """Growth of the exact copy counts with ``n``.

    Unencoded counts are fit as ``ln R`` linear in ``n`` (slope compared
    with ``-ln(1-q)``). Product counts are compared against the logarithmic
    envelope ``ln(n/Q)/ln(1/q) + 1``.
    """
    ns = np.asarray(ns, dtype=float)
    r_u = np.array([min_copies(int(n), q, budget, "unencoded") for n in ns], dtype=float)
    r_p = np.array([min_copies(int(n), q, budget, "product") for n in ns], dtype=float)
    (slope, _), r2_u = _r2(ns, np.log(r_u))
    envelope = np.log(ns / budget) / np.log(1.0 / q) + 1.0
    (c_log, _), r2_p = _r2(np.log(ns), r_p)
    return {
        "R_unencoded": r_u.astype(int).tolist(), "R_product": r_p.astype(int).tolist(),
        "unencoded_log_slope": float(slope), "expected_log_slope": float(-np.log1p(-q)),
        "unencoded_r2": float(r2_u),
        "product_within_log_envelope": bool(np.all(r_p <= envelope)),
        "product_log_coef": float(c_log), "product_r2": float(r2_p),
    }
