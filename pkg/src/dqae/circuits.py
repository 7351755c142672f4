"""Parameterized circuits and the three ansatz families.

A rotation gate with slot ``p`` and scale ``s`` implements
``exp(-i s theta_p G)`` for its generator ``G``. All generators used here
satisfy ``G^3 = G`` (Pauli strings, and the Givens generator which is a
Pauli-Y on the single-excitation subspace), which gives a closed-form
exponential.

Two-qubit matrices use the index ``2 b(q[0]) + b(q[1])``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .state import (
    CNOT,
    HADAMARD,
    PAULI,
    PHASE_S,
    SINGLET,
    apply_local,
    doubled_singlet_overlap,
    n_qubits,
    reduced_density_matrix,
)

_FIXED = {
    "cnot": CNOT,
    "h": HADAMARD,
    "s": PHASE_S,
    "sdg": PHASE_S.conj().T,
    "x": PAULI["x"],
    "y": PAULI["y"],
    "z": PAULI["z"],
}
_ARITY = {"cnot": 2, "h": 1, "s": 1, "sdg": 1, "x": 1, "y": 1, "z": 1,
          "rot": 1, "xx": 2, "givens": 2}

# i(|10><01| - |01><10|) in the (00, 01, 10, 11) basis
_GIVENS_GEN = np.zeros((4, 4), dtype=complex)
_GIVENS_GEN[2, 1] = 1j
_GIVENS_GEN[1, 2] = -1j
_XX_GEN = np.kron(PAULI["x"], PAULI["x"])


# -- fast gate kernels ----------------------------------------------------------
#
# Every gate and generator used here maps psi to ``a * psi + b * psi[perm]``
# with ``perm`` an involution on basis indices (an XOR pattern). ``a``/``b``
# are length-2^n vectors; ``b`` is None for diagonal operators.


@lru_cache(maxsize=None)
def _bits(n: int, q: int) -> np.ndarray:
    return (np.arange(1 << n) >> q) & 1


@lru_cache(maxsize=None)
def _flip(n: int, mask: int) -> np.ndarray:
    return np.arange(1 << n) ^ mask


@lru_cache(maxsize=None)
def _static_action(n: int, kind: str, qubits: tuple, axis: Optional[str]) -> tuple:
    """``(a, b, perm)`` of a fixed gate or of a rotation's generator."""
    one = np.ones(1 << n, dtype=complex)
    if kind in ("rot", "x", "y", "z"):
        q = qubits[0]
        ax = axis if kind == "rot" else kind
        sign = 1.0 - 2.0 * _bits(n, q)  # +1 on |0>, -1 on |1>
        if ax == "z":
            return sign.astype(complex), None, None
        if ax == "x":
            return np.zeros_like(one), one, _flip(n, 1 << q)
        return np.zeros_like(one), -1j * sign.astype(complex), _flip(n, 1 << q)
    if kind == "xx":
        mask = (1 << qubits[0]) | (1 << qubits[1])
        return np.zeros_like(one), one, _flip(n, mask)
    if kind == "givens":
        q1, q2 = qubits
        diff = _bits(n, q1) ^ _bits(n, q2)
        b = np.where(diff == 1, 1j * (2.0 * _bits(n, q1) - 1.0), 0.0).astype(complex)
        return np.zeros_like(one), b, _flip(n, (1 << q1) | (1 << q2))
    if kind == "cnot":
        c, t = qubits
        perm = np.arange(1 << n) ^ (_bits(n, c) << t)
        return np.zeros_like(one), one, perm
    if kind == "h":
        q = qubits[0]
        sign = (1.0 - 2.0 * _bits(n, q)).astype(complex)
        return sign / np.sqrt(2), one / np.sqrt(2), _flip(n, 1 << q)
    if kind in ("s", "sdg"):
        ph = 1j if kind == "s" else -1j
        return np.where(_bits(n, qubits[0]) == 1, ph, 1.0).astype(complex), None, None
    raise ValueError(f"no kernel for gate kind {kind!r}")


def _action(n: int, g: "Gate", theta: Optional[float]) -> tuple:
    a, b, perm = _static_action(n, g.kind, g.qubits, g.axis)
    if not g.parameterized:
        return a, b, perm
    phi = g.scale * theta
    c, s = np.cos(phi), np.sin(phi)
    if g.kind == "givens":
        diff = (_bits(n, g.qubits[0]) ^ _bits(n, g.qubits[1])) == 1
        return np.where(diff, c, 1.0).astype(complex), -1j * s * b, perm
    # Pauli generator: exp(-i phi P) = cos(phi) - i sin(phi) P
    return c - 1j * s * a, (None if b is None else -1j * s * b), perm


def _generator_action(n: int, g: "Gate") -> tuple:
    a, b, perm = _static_action(n, g.kind, g.qubits, g.axis)
    f = -1j * g.scale
    return f * a, (None if b is None else f * b), perm


def _adjoint_action(act: tuple) -> tuple:
    a, b, perm = act
    return a.conj(), (None if b is None else b[perm].conj()), perm


def _run(psi: np.ndarray, act: tuple) -> np.ndarray:
    a, b, perm = act
    if b is None:
        return psi * a
    return psi * a + psi[..., perm] * b


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple
    slot: Optional[int] = None
    scale: float = 0.5
    axis: Optional[str] = None

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {_ARITY[self.kind]} qubit(s)")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("gate qubits must be distinct")
        if self.kind == "rot" and self.axis not in ("x", "y", "z"):
            raise ValueError("rotation gate needs axis x, y or z")
        if self.parameterized and self.slot is None:
            raise ValueError(f"{self.kind} gate needs a parameter slot")

    @property
    def parameterized(self) -> bool:
        return self.kind in ("rot", "xx", "givens")

    @property
    def generator(self) -> np.ndarray:
        if self.kind == "rot":
            return PAULI[self.axis]
        if self.kind == "xx":
            return _XX_GEN
        if self.kind == "givens":
            return _GIVENS_GEN
        raise ValueError(f"{self.kind} gate has no generator")

    @property
    def is_pauli(self) -> bool:
        return self.kind in ("rot", "xx")

    def matrix(self, theta: Optional[float] = None) -> np.ndarray:
        if not self.parameterized:
            return _FIXED[self.kind]
        g = self.generator
        phi = self.scale * theta
        g2 = g @ g
        return np.eye(len(g)) - g2 + np.cos(phi) * g2 - 1j * np.sin(phi) * g

    def to_dict(self) -> dict:
        d = {"g": self.kind, "q": list(self.qubits)}
        if self.kind == "rot":
            d["axis"] = self.axis
        if self.parameterized:
            d["p"] = self.slot
            if self.kind != "givens" or self.scale != 1.0:
                d["s"] = self.scale
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        kind = d["g"]
        slot = d.get("p")
        scale = d.get("s", 1.0 if kind == "givens" else 0.5)
        return cls(kind, tuple(d["q"]), slot, float(scale), d.get("axis"))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple
    n_params: int = field(default=-1)

    def __post_init__(self):
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        slots = {g.slot for g in gates if g.parameterized}
        m = self.n_params if self.n_params >= 0 else (max(slots) + 1 if slots else 0)
        object.__setattr__(self, "n_params", m)
        for g in gates:
            if any(not 0 <= q < self.n_qubits for q in g.qubits):
                raise ValueError(f"gate {g} addresses a qubit outside 0..{self.n_qubits - 1}")
        if slots != set(range(m)):
            raise ValueError("parameter slots must cover 0..M-1 exactly")

    # -- evaluation --------------------------------------------------------

    def _theta(self, theta) -> np.ndarray:
        if theta is None:
            theta = np.zeros(self.n_params)
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        return theta

    def _mats(self, theta):
        return [g.matrix(theta[g.slot] if g.parameterized else None) for g in self.gates]

    def _actions(self, theta):
        n = self.n_qubits
        return [_action(n, g, theta[g.slot] if g.parameterized else None) for g in self.gates]

    def _check_state(self, state) -> np.ndarray:
        psi = np.asarray(state, dtype=complex)
        if n_qubits(psi) != self.n_qubits:
            raise ValueError("state width does not match circuit")
        return psi

    def apply(self, theta, state: np.ndarray) -> np.ndarray:
        theta = self._theta(theta)
        psi = self._check_state(state)
        for act in self._actions(theta):
            psi = _run(psi, act)
        return psi

    def apply_adjoint(self, theta, state: np.ndarray) -> np.ndarray:
        theta = self._theta(theta)
        psi = self._check_state(state)
        for act in reversed(self._actions(theta)):
            psi = _run(psi, _adjoint_action(act))
        return psi

    def apply_dense(self, theta, state: np.ndarray) -> np.ndarray:
        """Reference path through explicit gate matrices (slow; for checks)."""
        theta = self._theta(theta)
        psi = self._check_state(state)
        for g, u in zip(self.gates, self._mats(theta)):
            psi = apply_local(psi, g.qubits, u)
        return psi

    def unitary(self, theta=None) -> np.ndarray:
        """Dense matrix; intended for small test oracles."""
        eye = np.eye(1 << self.n_qubits, dtype=complex)
        return self.apply_dense(theta, eye).T

    def inverse(self) -> "Circuit":
        """Reversed gate list; evaluate with negated angles to get ``U^dag``.

        Fixed gates are replaced by their adjoints where that is another
        named gate (``s`` <-> ``sdg``); the rest are self-inverse.
        """
        swap = {"s": "sdg", "sdg": "s"}
        gates = [Gate(swap.get(g.kind, g.kind), g.qubits, g.slot, g.scale, g.axis)
                 for g in reversed(self.gates)]
        return Circuit(self.n_qubits, gates, self.n_params)

    def slot_gates(self, slot: int) -> list:
        if not 0 <= slot < self.n_params:
            raise IndexError(f"slot {slot} out of range for {self.n_params} parameters")
        return [i for i, g in enumerate(self.gates) if g.slot == slot]

    def truncated(self, m: int) -> "Circuit":
        """Keep only gates that are fixed or use a slot below ``m``.

        Fixed gates after the last kept parameterized gate are dropped too.
        """
        keep = [g for g in self.gates if not g.parameterized or g.slot < m]
        while keep and not keep[-1].parameterized:
            keep.pop()
        return Circuit(self.n_qubits, keep, m)

    def compose(self, other: "Circuit") -> "Circuit":
        """``other`` applied after ``self``; ``other``'s slots are shifted."""
        if other.n_qubits != self.n_qubits:
            raise ValueError("circuit widths differ")
        shifted = [Gate(g.kind, g.qubits, None if g.slot is None else g.slot + self.n_params,
                        g.scale, g.axis) for g in other.gates]
        return Circuit(self.n_qubits, self.gates + tuple(shifted),
                       self.n_params + other.n_params)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {"n": self.n_qubits, "m": self.n_params,
                "gates": [g.to_dict() for g in self.gates]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(int(d["n"]), [Gate.from_dict(g) for g in d["gates"]], int(d["m"]))

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


def apply_circuit(c: Circuit, theta, state) -> np.ndarray:
    return c.apply(theta, state)


# -- ansatz builders ----------------------------------------------------------


def _check_size(n, d):
    if int(n) != n or n < 2:
        raise ValueError(f"need at least 2 qubits, got {n}")
    if int(d) != d or d < 1:
        raise ValueError(f"need at least 1 layer, got {d}")


def build_he(n: int, d: int, axes: Sequence[str] = ("y", "z"), scale: float = 0.5) -> Circuit:
    """Hardware-efficient ansatz.

    Each layer is a CNOT ladder (control ``j``, target ``j+1``) followed by an
    ``axes[0]`` rotation on every qubit and then an ``axes[1]`` rotation on
    every qubit. Layer ``l`` uses slots ``2nl + k`` and ``2nl + n + k``, so
    ``M = 2nd``. ``scale=1`` reproduces the ``exp(-i theta sigma)`` form.
    """
    _check_size(n, d)
    a1, a2 = (a.lower() for a in axes)
    gates = []
    for layer in range(d):
        gates += [Gate("cnot", (j, j + 1)) for j in range(n - 1)]
        base = 2 * n * layer
        gates += [Gate("rot", (k,), base + k, scale, a1) for k in range(n)]
        gates += [Gate("rot", (k,), base + n + k, scale, a2) for k in range(n)]
    return Circuit(n, gates, 2 * n * d)


def build_ising(n: int, d: int, periodic: bool = True, scale: float = 1.0) -> Circuit:
    """Transverse-field Ising evolution, ``d`` layers of XX then Z rotations.

    Layer ``l`` first applies ``exp(-i H_xx x_l)`` as commuting XX bond
    rotations sharing slot ``2l``, then ``exp(-i H_z z_l)`` as Z rotations
    sharing slot ``2l + 1``. The ring closes with bond ``(n-1, 0)`` unless
    ``periodic=False``. ``scale`` defaults to 1 to match the Hamiltonian form.
    """
    _check_size(n, d)
    bonds = [(j, j + 1) for j in range(n - 1)]
    if periodic and n > 2:
        bonds.append((n - 1, 0))
    gates = []
    for layer in range(d):
        gates += [Gate("xx", b, 2 * layer, scale) for b in bonds]
        gates += [Gate("rot", (k,), 2 * layer + 1, scale, "z") for k in range(n)]
    return Circuit(n, gates, 2 * d)


def givens_pairs(n: int, d: int) -> list:
    """Brickwork pair list: each layer is pairs (0,1),(2,3),... then (1,2),(3,4),..."""
    pairs = []
    for _ in range(d):
        pairs += [(j, j + 1) for j in range(0, n - 1, 2)]
        pairs += [(j, j + 1) for j in range(1, n - 1, 2)]
    return pairs


def build_fermion(n: int, d: int) -> Circuit:
    """Free-fermion ansatz of Givens rotations in a brickwork.

    One layer is two sublayers (even bonds, then odd bonds), i.e. ``n - 1``
    Givens gates, each with its own parameter: ``M = d (n - 1)``. A Givens
    gate rotates by ``theta`` inside ``span{|01>, |10>}``.
    """
    _check_size(n, d)
    gates = [Gate("givens", p, i, 1.0) for i, p in enumerate(givens_pairs(n, d))]
    return Circuit(n, gates, len(gates))


ANSATZE = {"he": build_he, "ising": build_ising, "fermion": build_fermion}


def params_per_layer(family: str, n: int) -> int:
    return {"he": 2 * n, "ising": 2, "fermion": n - 1}[family]


def build(family: str, n: int, depth: int, **kw) -> Circuit:
    try:
        builder = ANSATZE[family]
    except KeyError:
        raise ValueError(f"unknown ansatz {family!r}") from None
    return builder(n, depth, **kw)


def build_with_params(family: str, n: int, m: int, **kw) -> Circuit:
    """Ansatz truncated to exactly ``m`` parameters (partial last layer)."""
    if m < 1:
        raise ValueError("need at least one parameter")
    per = params_per_layer(family, n)
    circ = build(family, n, -(-m // per), **kw)
    return circ if circ.n_params == m else circ.truncated(m)


# -- derivatives --------------------------------------------------------------


def _gen_step(g: Gate) -> np.ndarray:
    return -1j * g.scale * g.generator


def derivative_state(c: Circuit, theta, state, slot: int) -> np.ndarray:
    """``d/dtheta_slot [U(theta)] |state>`` by the product rule.

    For every gate holding ``slot`` the generator ``-i s G`` is inserted
    right after it and the resulting branches are summed.
    """
    theta = c._theta(theta)
    positions = c.slot_gates(slot)
    mats = c._mats(theta)
    psi = c._check_state(state)
    out = np.zeros_like(psi)
    for pos in positions:
        branch = psi
        for i, (g, u) in enumerate(zip(c.gates, mats)):
            branch = apply_local(branch, g.qubits, u)
            if i == pos:
                branch = apply_local(branch, g.qubits, _gen_step(g))
        out = out + branch
    return out


def derivative_states(c: Circuit, theta, states) -> tuple:
    """All derivative vectors at once (forward mode).

    Returns ``(phi, dphi)`` with ``phi = U states`` and ``dphi[m] =
    d_m U states``; ``dphi`` has shape ``(M,) + states.shape``.
    """
    theta = c._theta(theta)
    psi = c._check_state(states)
    m = c.n_params
    stack = np.zeros((m + 1,) + psi.shape, dtype=complex)
    stack[0] = psi
    n = c.n_qubits
    for g, act in zip(c.gates, c._actions(theta)):
        stack = _run(stack, act)
        if g.parameterized:
            stack[1 + g.slot] += _run(stack[0], _generator_action(n, g))
    return stack[0], stack[1:]


def vjp(c: Circuit, theta, states, cotangent) -> np.ndarray:
    """Reverse-mode product ``g_m = sum_b 2 Re <cot_b | d_m U |state_b>``.

    ``states`` and ``cotangent`` share shape ``(B, 2^n)`` (or a single
    vector). One forward and one backward sweep, independent of ``M``.
    """
    theta = c._theta(theta)
    acts = c._actions(theta)
    psi = c._check_state(states)
    for act in acts:
        psi = _run(psi, act)
    pair = np.stack([psi, np.asarray(cotangent, dtype=complex)])
    grad = np.zeros(c.n_params)
    n = c.n_qubits
    for g, act in zip(reversed(c.gates), reversed(acts)):
        if g.parameterized:
            d = _run(pair[0], _generator_action(n, g))
            grad[g.slot] += 2.0 * np.vdot(pair[1], d).real
        pair = _run(pair, _adjoint_action(act))
    return grad


# -- parameter-shift rule -----------------------------------------------------


def _check_shiftable(c: Circuit, slot: int) -> Gate:
    pos = c.slot_gates(slot)
    if len(pos) != 1:
        raise NotImplementedError(
            f"slot {slot} is shared by {len(pos)} gates; use derivative_state instead")
    g = c.gates[pos[0]]
    if not g.is_pauli or g.scale != 0.5:
        raise NotImplementedError(
            f"slot {slot} is not a single Pauli rotation with scale 1/2")
    return g


def shift_rule_purity_gradient(c: Circuit, theta, state, slot: int, k: int) -> float:
    """``d E_k / d theta_slot`` from two shifted two-copy singlet overlaps.

    ``dE_k = -2 (<+|<0| Pi_k |+>|0> - <-|<0| Pi_k |->|0>)`` where ``|+-> =
    U(theta +- pi/2 e_slot)|state>`` and ``|0> = U(theta)|state>``.
    """
    _check_shiftable(c, slot)
    theta = c._theta(theta)
    shift = np.zeros_like(theta)
    shift[slot] = np.pi / 2
    mid = c.apply(theta, state)
    plus = c.apply(theta + shift, state)
    minus = c.apply(theta - shift, state)
    return -2.0 * (doubled_singlet_overlap(plus, mid, k)
                   - doubled_singlet_overlap(minus, mid, k))


def _singlet_overlap_fast(a, b, k):
    # <a|<b| Pi_k |a>|b> = <S| rho_a^k (x) rho_b^k |S>
    ra = reduced_density_matrix(a, k)
    rb = reduced_density_matrix(b, k)
    return float(np.vdot(SINGLET, np.kron(ra, rb) @ SINGLET).real)


def shift_rule_gradient(c: Circuit, theta, states, slot: int, fast: bool = False) -> float:
    """``d C_train / d theta_slot`` assembled from shift-rule purity gradients.

    ``fast=True`` evaluates the singlet overlaps from single-qubit marginals
    instead of building the doubled register.
    """
    _check_shiftable(c, slot)
    theta = c._theta(theta)
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    n = c.n_qubits
    if not fast:
        total = sum(shift_rule_purity_gradient(c, theta, s, slot, k)
                    for s in states for k in range(n))
        return -total / (len(states) * n)
    shift = np.zeros_like(theta)
    shift[slot] = np.pi / 2
    mid = c.apply(theta, states)
    plus = c.apply(theta + shift, states)
    minus = c.apply(theta - shift, states)
    total = 0.0
    for b in range(len(states)):
        for k in range(n):
            total += -2.0 * (_singlet_overlap_fast(plus[b], mid[b], k)
                             - _singlet_overlap_fast(minus[b], mid[b], k))
    return -total / (len(states) * n)
