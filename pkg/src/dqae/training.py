"""Datasets, purity cost functions and the gradient-descent training loop."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from . import circuits
from .circuits import Circuit, build, shift_rule_gradient, vjp
from .state import (
    RngStream,
    all_marginals,
    haar_random_1q,
    product_state,
    purities,
    sample_purity,
)

# -- datasets -----------------------------------------------------------------

FAMILIES = ("he", "ising", "fermion", "identity")


def default_scrambler_depth(family: str, n: int) -> int:
    if family == "he":
        return 2 ** n if n <= 6 else 64
    if family == "ising":
        return 10
    if family == "fermion":
        return 2 * n
    return 0


def scrambler_circuit(family: str, n: int, depth: Optional[int] = None) -> Circuit:
    if family == "identity":
        return Circuit(n, [], 0)
    if depth is None:
        depth = default_scrambler_depth(family, n)
    return build(family, n, depth)


@dataclass
class Dataset:
    """Training and test states ``V (x)_j |phi_j>`` plus how to regenerate them."""

    family: str
    n: int
    depth: int
    scrambler: Circuit
    scrambler_theta: np.ndarray
    train: np.ndarray
    test: np.ndarray
    seed: int
    inputs_train: np.ndarray = field(repr=False, default=None)
    inputs_test: np.ndarray = field(repr=False, default=None)

    @property
    def L(self) -> int:
        return len(self.train)

    def to_dict(self, inline_states: bool = False) -> dict:
        d = {
            "kind": "dqae-dataset",
            "family": self.family,
            "n": self.n,
            "depth": self.depth,
            "L": len(self.train),
            "L_test": len(self.test),
            "seed": self.seed,
            "scrambler": self.scrambler.to_dict(),
            "scrambler_theta": [float(x) for x in self.scrambler_theta],
        }
        if inline_states:
            d["train"] = {"re": self.train.real.tolist(), "im": self.train.imag.tolist()}
            d["test"] = {"re": self.test.real.tolist(), "im": self.test.imag.tolist()}
        return d

    def to_json(self, inline_states: bool = False) -> str:
        return json.dumps(self.to_dict(inline_states), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        ds = generate_dataset(d["family"], d["n"], d["L"], d["L_test"], d["seed"],
                              depth=d["depth"])
        if "train" in d:
            ds.train = np.asarray(d["train"]["re"]) + 1j * np.asarray(d["train"]["im"])
            ds.test = np.asarray(d["test"]["re"]) + 1j * np.asarray(d["test"]["im"])
        return ds


def _product_inputs(n: int, count: int, stream: RngStream) -> np.ndarray:
    gen = stream.generator()
    if count == 0:
        return np.zeros((0, 1 << n), dtype=complex)
    return np.array([product_state([haar_random_1q(gen) for _ in range(n)])
                     for _ in range(count)])


def generate_dataset(family: str, n: int, L: int, L_test: int, seed: int,
                     depth: Optional[int] = None) -> Dataset:
    """Draw a scrambler ``V`` from ``family`` and push Haar product states through it.

    ``U = V^dag`` always solves the resulting disentangling task exactly.
    Scrambler angles, training inputs and test inputs use separate streams
    of ``seed``, so train and test never share draws.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown ansatz family {family!r}")
    if L < 1 or L_test < 0 or n < 1:
        raise ValueError("need n >= 1, L >= 1 and L_test >= 0")
    if depth is None:
        depth = default_scrambler_depth(family, n)
    v = scrambler_circuit(family, n, depth)
    root = RngStream(seed)
    theta = root.child(0).generator().uniform(0, 2 * np.pi, v.n_params)
    x_train = _product_inputs(n, L, root.child(1))
    x_test = _product_inputs(n, L_test, root.child(2))
    apply = (lambda x: v.apply(theta, x) if len(x) else x)
    return Dataset(family, n, depth, v, theta, apply(x_train), apply(x_test), seed,
                   x_train, x_test)


# -- cost functions -----------------------------------------------------------


def _as_batch(data) -> np.ndarray:
    states = np.asarray(data, dtype=complex)
    if states.ndim == 1:
        states = states[None]
    return states


def purity_objective(phi: np.ndarray) -> tuple:
    """``C = 1 - mean_{l,k} E_k(phi_l)`` and its cotangent for :func:`vjp`.

    With ``dE_k = 4 Re <(rho_k (x) 1) phi | d phi>`` the cotangent is
    ``-(2 / LN) sum_k (rho_k (x) 1) phi``.
    """
    phi = _as_batch(phi)
    L, dim = phi.shape
    n = dim.bit_length() - 1
    rho = all_marginals(phi)  # (L, n, 2, 2)
    pur = np.sum(np.abs(rho) ** 2, axis=(-2, -1))
    cot = np.zeros_like(phi)
    for k in range(n):
        # rho_k acts locally, differing per batch member
        t = phi.reshape(L, 1 << (n - 1 - k), 2, 1 << k)
        cot += np.einsum("lij,lajb->laib", rho[:, k], t).reshape(L, dim)
    value = 1.0 - pur.sum() / (L * n)
    return value, cot * (-2.0 / (L * n))


def cost_train(c: Circuit, theta, data) -> float:
    states = _as_batch(data)
    if states.shape[-1] != 1 << c.n_qubits:
        raise ValueError("data states do not match circuit width")
    pur = purities(c.apply(theta, states))
    return float(1.0 - pur.mean())


def cost_test(c: Circuit, theta, testset, return_stderr: bool = False):
    """Empirical test error over held-out states (optionally with its standard error)."""
    states = _as_batch(testset)
    if len(states) == 0 or states.shape[-1] == 0:
        raise ValueError("test set is empty")
    if states.shape[-1] != 1 << c.n_qubits:
        raise ValueError("test states do not match circuit width")
    per_state = 1.0 - purities(c.apply(theta, states)).mean(axis=-1)
    mean = float(per_state.mean())
    if not return_stderr:
        return mean
    se = float(per_state.std(ddof=1) / math.sqrt(len(per_state))) if len(per_state) > 1 else float("nan")
    return mean, se


def cost_and_gradient(c: Circuit, theta, data, objective: Callable = purity_objective) -> tuple:
    states = _as_batch(data)
    phi = c.apply(theta, states)
    value, cot = objective(phi)
    return value, vjp(c, theta, states, cot)


def gradient(c: Circuit, theta, data, method: str = "adjoint") -> np.ndarray:
    """Gradient of :func:`cost_train`.

    ``adjoint``: reverse sweep through the circuit (default);
    ``derivative``: contract all derivative states ``d_m U |psi>``;
    ``shift``: parameter-shift rule on doubled-register singlet overlaps
    (single Pauli rotations with scale 1/2 only).
    """
    states = _as_batch(data)
    if states.shape[-1] != 1 << c.n_qubits:
        raise ValueError("data states do not match circuit width")
    if method == "adjoint":
        return cost_and_gradient(c, theta, states)[1]
    if method == "derivative":
        phi, dphi = circuits.derivative_states(c, theta, states)
        _, cot = purity_objective(phi)
        return 2.0 * np.einsum("ld,mld->m", cot.conj(), dphi).real
    if method in ("shift", "shift-fast"):
        return np.array([shift_rule_gradient(c, theta, states, j, fast=method == "shift-fast")
                         for j in range(c.n_params)])
    raise ValueError(f"unknown gradient method {method!r}")


# -- optimisation ---------------------------------------------------------------


OPTIMIZERS = ("adam", "plain-gd", "lbfgs")


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.05
    max_epochs: int = 2000
    convergence_tol: float = 1e-3
    init: Union[str, Sequence[float]] = "uniform"
    shots: Optional[int] = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    restarts: int = 0  # extra attempts from fresh random inits if not converged

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if self.shots and self.optimizer == "lbfgs":
            raise ValueError("shot-noise training needs a first-order optimizer")

    def to_dict(self) -> dict:
        d = asdict(self)
        if not isinstance(self.init, str):
            d["init"] = [float(x) for x in self.init]
        return d


def initial_theta(c: Circuit, cfg: TrainConfig, attempt: int = 0) -> np.ndarray:
    if isinstance(cfg.init, str):
        if cfg.init == "uniform":
            key = ("init",) if attempt == 0 else ("init", attempt)
            gen = RngStream(cfg.seed, key).generator()
            return gen.uniform(0, 2 * np.pi, c.n_params)
        if cfg.init == "zeros":
            return np.zeros(c.n_params)
        raise ValueError(f"unknown init {cfg.init!r}")
    theta = np.asarray(cfg.init, dtype=float)
    if theta.shape != (c.n_params,):
        raise ValueError("explicit init has the wrong length")
    return theta.copy()


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad ** 2
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class PlainGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, theta, grad):
        return theta - self.lr * grad


TRAJECTORY_HEADER = ("epoch", "c_train", "c_test", "grad_norm", "wall_ms")


@dataclass
class Trajectory:
    records: list = field(default_factory=list)

    def append(self, epoch, c_train, c_test, grad_norm, wall_ms):
        if self.records and epoch <= self.records[-1][0]:
            raise ValueError("epochs must increase")
        self.records.append((int(epoch), float(c_train), float(c_test),
                             float(grad_norm), float(wall_ms)))

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[TRAJECTORY_HEADER.index(name)] for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for r in self.records:
            w.writerow([r[0]] + [repr(x) for x in r[1:]])
        return buf.getvalue()


@dataclass
class TrainResult:
    theta: np.ndarray
    trajectory: Trajectory
    converged: bool
    cost: float
    epochs: int


def _shot_cost_and_gradient(c, theta, states, shots, gen):
    phi = c.apply(theta, states)
    n = c.n_qubits
    est = np.mean([[sample_purity(p, k, shots, gen) for k in range(n)] for p in phi])
    value = 1.0 - est
    grad = np.zeros(c.n_params)
    shift = np.pi / 2
    for j in range(c.n_params):
        circuits._check_shiftable(c, j)
        e = np.zeros_like(theta)
        e[j] = shift
        plus = c.apply(theta + e, states)
        minus = c.apply(theta - e, states)
        total = 0.0
        for b in range(len(states)):
            for k in range(n):
                fp = min(max(circuits._singlet_overlap_fast(plus[b], phi[b], k), 0.0), 1.0)
                fm = min(max(circuits._singlet_overlap_fast(minus[b], phi[b], k), 0.0), 1.0)
                total += -2.0 * (gen.binomial(shots, fp) - gen.binomial(shots, fm)) / shots
        grad[j] = -total / (len(states) * n)
    return value, grad


def _first_order(c, states, cfg, theta, test, objective, callback, log, shot_gen):
    opt = (Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
           if cfg.optimizer == "adam" else PlainGD(cfg.learning_rate))
    for it in range(cfg.max_epochs + 1):
        if cfg.shots:
            value, grad = _shot_cost_and_gradient(c, theta, states, cfg.shots, shot_gen)
        else:
            value, grad = cost_and_gradient(c, theta, states, objective)
        if log(theta, value, grad):
            return
        if it < cfg.max_epochs:
            theta = opt.step(theta, grad)


def _lbfgs(c, states, cfg, theta, test, objective, callback, log, shot_gen):
    cache = {}

    def fun(x):
        value, grad = cost_and_gradient(c, x, states, objective)
        cache["last"] = (x.copy(), value, grad)
        return value, grad

    value, grad = fun(theta)
    if log(theta, value, grad):
        return

    def cb(intermediate_result):
        x = intermediate_result.x
        lx, value, grad = cache["last"]
        if not np.array_equal(lx, x):
            value, grad = fun(x)
        if log(x, value, grad):
            raise StopIteration

    minimize(fun, theta, jac=True, method="L-BFGS-B", callback=cb,
             options={"maxiter": cfg.max_epochs, "maxfun": 4 * cfg.max_epochs + 10,
                      "ftol": 0.0, "gtol": 1e-14, "maxcor": 30})


def train(c: Circuit, data, cfg: TrainConfig, test=None,
          objective: Callable = purity_objective, callback=None) -> TrainResult:
    """Minimise ``objective`` over the circuit parameters.

    An attempt stops as soon as the training cost reaches
    ``cfg.convergence_tol`` (epoch 0 is the initial point) or after
    ``cfg.max_epochs`` updates. Failed attempts are retried from fresh
    random initial points ``cfg.restarts`` times; the trajectory numbers
    epochs continuously across attempts. Returns the best parameters seen.
    """
    states = _as_batch(data)
    if states.shape[-1] != 1 << c.n_qubits:
        raise ValueError("data states do not match circuit width")
    shot_gen = RngStream(cfg.seed, ("shots",)).generator() if cfg.shots else None
    traj = Trajectory()
    best = {"theta": None, "cost": np.inf}
    start = time.perf_counter()
    state = {"epoch": -1, "converged": False}

    def log(theta, value, grad):
        """Record one epoch; True means stop this attempt."""
        state["epoch"] += 1
        epoch = state["epoch"]
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise FloatingPointError(
                f"non-finite cost or gradient at epoch {epoch} (cost={value})")
        c_test = cost_test(c, theta, test) if test is not None and len(test) else float("nan")
        traj.append(epoch, value, c_test, np.linalg.norm(grad),
                    1e3 * (time.perf_counter() - start))
        if callback is not None:
            callback(epoch, value, theta)
        if value < best["cost"]:
            best["cost"], best["theta"] = float(value), np.array(theta, dtype=float)
        if value <= cfg.convergence_tol:
            state["converged"] = True
            return True
        return False

    runner = _lbfgs if cfg.optimizer == "lbfgs" else _first_order
    for attempt in range(cfg.restarts + 1):
        theta = initial_theta(c, cfg, attempt)
        runner(c, states, cfg, theta, test, objective, callback, log, shot_gen)
        if state["converged"]:
            break
    return TrainResult(best["theta"], traj, state["converged"], best["cost"], state["epoch"])


# -- barren-plateau study ---------------------------------------------------------


# ansatz depth per family for the variance study ("auto")
VARIANCE_DEPTH = {"he": "n", "fermion": "n", "ising": "4n"}


def _depth_fn(rule, family: Optional[str] = None) -> Callable[[int], int]:
    if rule == "auto":
        rule = VARIANCE_DEPTH.get(family, "n")
    if callable(rule):
        return rule
    if isinstance(rule, int):
        return lambda n: rule
    rule = str(rule).strip()
    if rule.endswith("n"):
        factor = int(rule[:-1] or 1)
        return lambda n: factor * n
    return lambda n: int(rule)


def _linear_fit(x, y) -> tuple:
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = np.sum((y - pred) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


@dataclass
class VarianceStudy:
    family: str
    ns: list
    depths: list
    variances: list
    gamma: float = float("nan")
    power_r2: float = float("nan")
    exp_rate: float = float("nan")
    exp_r2: float = float("nan")

    def to_csv(self) -> str:
        lines = ["family,n,depth,mean_grad_variance"]
        lines += [f"{self.family},{n},{d},{v!r}" for n, d, v in
                  zip(self.ns, self.depths, self.variances)]
        return "\n".join(lines) + "\n"


def fit_decay(ns, variances) -> dict:
    """Fit ``var = c n^-gamma`` (log-log) and ``var = a e^{-b n}`` (log-linear)."""
    if len(ns) < 3:
        raise ValueError("need at least three system sizes to fit")
    x = np.asarray(ns, dtype=float)
    y = np.log(np.asarray(variances, dtype=float))
    g, _, r2p = _linear_fit(np.log(x), y)
    b, _, r2e = _linear_fit(x, y)
    return {"gamma": -g, "power_r2": r2p, "exp_rate": -b, "exp_r2": r2e}


def gradient_variance_experiment(family: str, ns: Sequence[int], depth_rule="auto",
                                 samples: int = 10, seed: int = 0, L: int = 1,
                                 fit: bool = True, theta_samples: int = 20) -> VarianceStudy:
    """Variance of ``d_j C_train`` over random parameters.

    For every ``n`` and each of ``samples`` data instances (scrambler plus
    training states) the gradient variance is taken over ``theta_samples``
    random parameter draws, per parameter; the result is averaged over
    parameters and instances.
    """
    if samples < 2 or theta_samples < 2:
        raise ValueError("need samples >= 2 and theta_samples >= 2")
    depth = _depth_fn(depth_rule, family)
    out = []
    depths = []
    for n in ns:
        c = build(family, n, depth(n))
        per_instance = []
        for s in range(samples):
            data = generate_dataset(family, n, L, 0, seed=hash_seed(seed, n, s))
            gen = RngStream(seed, ("vartheta", n, s)).generator()
            grads = [gradient(c, gen.uniform(0, 2 * np.pi, c.n_params), data.train)
                     for _ in range(theta_samples)]
            per_instance.append(np.var(np.array(grads), axis=0, ddof=1).mean())
        out.append(float(np.mean(per_instance)))
        depths.append(depth(n))
    study = VarianceStudy(family, list(ns), depths, out)
    if fit:
        for k, v in fit_decay(ns, out).items():
            setattr(study, k, v)
    return study


def hash_seed(*parts: int) -> int:
    """Deterministic 63-bit seed derived from integers."""
    a = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, dtype=np.uint32)
    return (int(a[0]) << 31) | (int(a[1]) >> 1)
