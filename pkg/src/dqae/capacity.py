"""Increased-capacity autoencoder: N+K qubits -> N product qubits + K bits.

The last ``K`` qubits (indices ``N..N+K-1``) are reference qubits. A good
disentangler leaves them in computational basis states, so measuring them
yields ``K`` classical bits without disturbing the product part. Decoding
prepares the product part with ``|bits>`` and applies ``U^dag``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .circuits import Circuit
from .state import (
    RngLike,
    RngStream,
    as_generator,
    fidelity,
    haar_random_1q,
    product_state,
    reduced_density_matrix,
)
from .training import _as_batch, purity_objective, scrambler_circuit


@dataclass(frozen=True)
class CapacityConfig:
    n_product: int
    n_reference: int = 0
    corrected: bool = True  # False: reference term +<Z>^2 instead

    def __post_init__(self):
        if self.n_product < 1 or self.n_reference < 0:
            raise ValueError("need N >= 1 and K >= 0")

    @property
    def n_total(self) -> int:
        return self.n_product + self.n_reference

    @property
    def reference_qubits(self) -> range:
        return range(self.n_product, self.n_total)


def _z_expect(phi, k):
    n = phi.shape[-1].bit_length() - 1
    t = np.abs(phi.reshape(phi.shape[:-1] + (1 << (n - 1 - k), 2, 1 << k))) ** 2
    return t[..., 0, :].sum(axis=(-2, -1)) - t[..., 1, :].sum(axis=(-2, -1))


def _z_apply(phi, k):
    n = phi.shape[-1].bit_length() - 1
    sign = 1.0 - 2.0 * ((np.arange(1 << n) >> k) & 1)
    return phi * sign


def capacity_objective(cfg: CapacityConfig):
    """Cost ``C_train + mean_l sum_k (1 - <Z_{N+k}>^2)`` with its cotangent.

    With ``cfg.corrected = False`` the reference term is ``+<Z>^2`` instead.
    For ``K = 0`` the plain purity objective is returned unchanged.
    """
    if cfg.n_reference == 0:
        return purity_objective

    def objective(phi):
        phi = _as_batch(phi)
        if phi.shape[-1] != 1 << cfg.n_total:
            raise ValueError("state width does not match capacity config")
        value, cot = purity_objective(phi)
        L = len(phi)
        for k in cfg.reference_qubits:
            z = _z_expect(phi, k)
            if cfg.corrected:
                value += float(np.sum(1.0 - z ** 2)) / L
                fprime = -2.0 * z
            else:
                value += float(np.sum(z ** 2)) / L
                fprime = 2.0 * z
            cot = cot + (fprime / L)[:, None] * _z_apply(phi, k)
        return value, cot

    return objective


def capacity_cost(c: Circuit, theta, data, cfg: CapacityConfig) -> float:
    states = _as_batch(data)
    if c.n_qubits != cfg.n_total or states.shape[-1] != 1 << cfg.n_total:
        raise ValueError("circuit/data width does not match capacity config")
    return float(capacity_objective(cfg)(c.apply(theta, states))[0])


def _top_eigvec(rho):
    w, v = np.linalg.eigh(rho)
    vec = v[:, -1]
    lead = vec[np.argmax(np.abs(vec))]
    return vec * (abs(lead) / lead)


@dataclass
class Encoded:
    factors: list  # N single-qubit states
    bits: list  # K outcomes
    probability: float

    def to_dict(self) -> dict:
        return {"factors": [{"re": f.real.tolist(), "im": f.imag.tolist()} for f in self.factors],
                "bits": [int(b) for b in self.bits]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Encoded":
        fs = [np.asarray(f["re"]) + 1j * np.asarray(f["im"]) for f in d["factors"]]
        return cls(fs, list(d["bits"]), float("nan"))


def encode_measure(psi, c: Circuit, theta, cfg: CapacityConfig, rng: RngLike = 0) -> Encoded:
    """Apply ``U``, Born-sample the reference qubits and keep the product part.

    Factors are the dominant eigenvectors of the post-measurement
    single-qubit marginals (exact when that part is a product state).
    """
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (1 << cfg.n_total,) or c.n_qubits != cfg.n_total:
        raise ValueError("state/circuit width does not match capacity config")
    N, K = cfg.n_product, cfg.n_reference
    phi = c.apply(theta, psi)
    # index = (reference bits) * 2^N + product index
    blocks = phi.reshape(1 << K, 1 << N)
    probs = np.sum(np.abs(blocks) ** 2, axis=1)
    probs = probs / probs.sum()
    outcome = int(as_generator(rng).choice(1 << K, p=probs)) if K else 0
    chi = blocks[outcome] / np.sqrt(probs[outcome])
    factors = [_top_eigvec(reduced_density_matrix(chi, k)) for k in range(N)]
    bits = [(outcome >> j) & 1 for j in range(K)]
    return Encoded(factors, bits, float(probs[outcome]))


def decode(factors: Sequence, bits: Sequence[int], c: Circuit, theta, cfg: CapacityConfig) -> np.ndarray:
    if len(factors) != cfg.n_product or len(bits) != cfg.n_reference:
        raise ValueError("need N factors and K bits")
    if c.n_qubits != cfg.n_total:
        raise ValueError("circuit width does not match capacity config")
    refs = [np.array([1, 0], dtype=complex) if b == 0 else np.array([0, 1], dtype=complex)
            for b in bits]
    return c.apply_adjoint(theta, product_state(list(factors) + refs))


def round_trip_fidelity(psi, c: Circuit, theta, cfg: CapacityConfig, rng: RngLike = 0) -> float:
    enc = encode_measure(psi, c, theta, cfg, rng)
    return fidelity(psi, decode(enc.factors, enc.bits, c, theta, cfg))


@dataclass
class CapacityDataset:
    cfg: CapacityConfig
    scrambler: Circuit
    scrambler_theta: np.ndarray
    states: np.ndarray
    bits: np.ndarray  # (L, K)
    seed: int


def generate_capacity_dataset(cfg: CapacityConfig, L: int, seed: int, family: str = "he",
                              depth: Optional[int] = None) -> CapacityDataset:
    """``V`` applied to Haar product factors on the first ``N`` qubits and basis
    states on the references; member ``l`` carries bits ``l mod 2^K``."""
    if L < 1:
        raise ValueError("need L >= 1")
    n = cfg.n_total
    v = scrambler_circuit(family, n, depth)
    root = RngStream(seed, "capacity")
    theta = root.child(0).generator().uniform(0, 2 * np.pi, v.n_params)
    gen = root.child(1).generator()
    K = cfg.n_reference
    bits = np.array([[(l % (1 << K) >> j) & 1 for j in range(K)] for l in range(L)], dtype=int)
    inputs = []
    for l in range(L):
        fs = [haar_random_1q(gen) for _ in range(cfg.n_product)]
        fs += [np.eye(2, dtype=complex)[b] for b in bits[l]]
        inputs.append(product_state(fs))
    states = v.apply(theta, np.array(inputs))
    return CapacityDataset(cfg, v, theta, states, bits.reshape(L, K), seed)
