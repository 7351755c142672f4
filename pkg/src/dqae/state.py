"""Dense statevector primitives.

States are plain ``complex128`` numpy arrays of length ``2**n``. Amplitude
index bit ``j`` addresses qubit ``j`` (little-endian), so ``|q_{n-1} ... q_1 q_0>``
has index ``sum_j q_j 2**j``. Leading batch axes are allowed everywhere a
state is accepted by the internal helpers.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

UNITARY_TOL = 1e-8

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PHASE_S = np.array([[1, 0], [0, 1j]], dtype=complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
SINGLET = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)

MAX_BELL_QUBITS = 12


# -- random streams ---------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream addressed by ``(master_seed, stream_id)``.

    Backed by numpy's Philox generator; distinct ids are derived through
    ``SeedSequence`` spawn keys, so streams never overlap.
    """

    master_seed: int
    stream_id: Union[int, tuple] = 0

    @property
    def key(self) -> tuple:
        sid = self.stream_id
        parts = tuple(sid) if isinstance(sid, (tuple, list)) else (sid,)
        # string labels map to a stable 32-bit code
        return tuple(zlib.crc32(p.encode()) if isinstance(p, str) else int(p) for p in parts)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *ids) -> "RngStream":
        return RngStream(self.master_seed, self.key + tuple(ids))


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        raise ValueError("an explicit seed or RngStream is required")
    return RngStream(int(rng)).generator()


# -- basic helpers ----------------------------------------------------------


def n_qubits(state: np.ndarray) -> int:
    dim = np.shape(state)[-1]
    n = int(dim).bit_length() - 1
    if n < 1 or 1 << n != dim:
        raise ValueError(f"state length {dim} is not a power of two >= 2")
    return n


def zero_state(n: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1.0
    return psi


def basis_state(n: int, index: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[index] = 1.0
    return psi


def ghz_state(n: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def bell_state() -> np.ndarray:
    """The singlet ``(|01> - |10>)/sqrt(2)`` on two qubits."""
    return SINGLET.copy()


def random_state(n: int, rng: RngLike) -> np.ndarray:
    """Haar-random pure state on ``n`` qubits."""
    gen = as_generator(rng)
    v = gen.normal(size=1 << n) + 1j * gen.normal(size=1 << n)
    return v / np.linalg.norm(v)


def random_unitary(dim: int, rng: RngLike) -> np.ndarray:
    """Haar-random unitary via QR with phase fix."""
    gen = as_generator(rng)
    z = (gen.normal(size=(dim, dim)) + 1j * gen.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _check_qubit(k: int, n: int) -> None:
    if not 0 <= k < n:
        raise IndexError(f"qubit index {k} out of range for {n} qubits")


def _check_unitary(u: np.ndarray, dim: int) -> None:
    if u.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix, got shape {u.shape}")
    dev = np.max(np.abs(u.conj().T @ u - np.eye(dim)))
    if dev > UNITARY_TOL:
        raise ValueError(f"matrix is not unitary (deviation {dev:.2e})")


# -- gate application -------------------------------------------------------


def apply_local(state: np.ndarray, qubits: Sequence[int], op: np.ndarray) -> np.ndarray:
    """Apply a ``2^k x 2^k`` operator (not necessarily unitary) to ``qubits``.

    The operator's row index is ``sum_i b(qubits[i]) 2**(k-1-i)``, i.e. the
    first listed qubit is the most significant bit of the local index.
    No validation; batch axes in front of the amplitude axis are kept.
    """
    psi = np.asarray(state)
    n = n_qubits(psi)
    batch = psi.shape[:-1]
    k = len(qubits)
    t = psi.reshape(batch + (2,) * n)
    nb = len(batch)
    axes = [nb + n - 1 - q for q in qubits]
    opt = np.asarray(op).reshape((2,) * (2 * k))
    out = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(psi.shape)


def apply_1q(state: np.ndarray, k: int, u: np.ndarray) -> np.ndarray:
    """Apply a single-qubit unitary ``u`` to qubit ``k``."""
    n = n_qubits(state)
    _check_qubit(k, n)
    u = np.asarray(u, dtype=complex)
    _check_unitary(u, 2)
    return apply_local(state, (k,), u)


def apply_2q(state: np.ndarray, k1: int, k2: int, u: np.ndarray) -> np.ndarray:
    """Apply a two-qubit unitary; ``k1`` is the high bit of ``u``'s index.

    For ``u = CNOT`` this makes ``k1`` the control and ``k2`` the target.
    """
    n = n_qubits(state)
    _check_qubit(k1, n)
    _check_qubit(k2, n)
    if k1 == k2:
        raise ValueError("two-qubit gate needs distinct qubits")
    u = np.asarray(u, dtype=complex)
    _check_unitary(u, 4)
    return apply_local(state, (k1, k2), u)


def dense_operator(n: int, qubits: Sequence[int], op: np.ndarray) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix of a local operator (test oracle helper)."""
    eye = np.eye(1 << n, dtype=complex)
    # columns of the result are op applied to basis vectors
    return apply_local(eye, qubits, op).T


# -- observables ------------------------------------------------------------


def reduced_density_matrix(state: np.ndarray, k: int) -> np.ndarray:
    """Single-qubit marginal ``tr_{not k} |psi><psi|``; batch axes allowed."""
    psi = np.asarray(state)
    n = n_qubits(psi)
    _check_qubit(k, n)
    t = psi.reshape(psi.shape[:-1] + (1 << (n - 1 - k), 2, 1 << k))
    return np.einsum("...aib,...ajb->...ij", t, t.conj())


def all_marginals(state: np.ndarray) -> np.ndarray:
    """Stack of all single-qubit marginals, shape ``batch + (n, 2, 2)``."""
    n = n_qubits(state)
    return np.stack([reduced_density_matrix(state, k) for k in range(n)], axis=-3)


def pauli_expectation(state: np.ndarray, k: int, axis: str) -> float:
    """``<psi| sigma_k^axis |psi>`` for axis in ``x``, ``y``, ``z``."""
    n = n_qubits(state)
    _check_qubit(k, n)
    p = PAULI[axis.lower()]
    val = np.vdot(state, apply_local(state, (k,), p)).real
    return float(np.clip(val, -1.0, 1.0))


def _purity_trace(state, k):
    rho = reduced_density_matrix(state, k)
    return float(np.sum(np.abs(rho) ** 2))


def _purity_pauli(state, k):
    s = sum(pauli_expectation(state, k, a) ** 2 for a in "xyz")
    return 0.5 * (1.0 + s)


def purity_single(state: np.ndarray, k: int, route: str = "trace") -> float:
    """Purity ``tr(rho_k^2)`` of qubit ``k``.

    ``route="trace"`` contracts the reduced matrix directly; ``route="pauli"``
    uses ``(1 + sum_a <sigma_k^a>^2)/2``; ``route="bell"`` goes through the
    singlet projector on a doubled register.
    """
    if route == "trace":
        return _purity_trace(state, k)
    if route == "pauli":
        return _purity_pauli(state, k)
    if route == "bell":
        return purity_bell_oracle(state, k)
    raise ValueError(f"unknown purity route {route!r}")


def purities(state: np.ndarray) -> np.ndarray:
    """Vector of all single-qubit purities (trace route); batch axes allowed."""
    rho = all_marginals(state)
    return np.sum(np.abs(rho) ** 2, axis=(-2, -1))


def doubled_singlet_overlap(a: np.ndarray, b: np.ndarray, k: int) -> float:
    """``<a|<b| Pi_k |a>|b>`` with ``Pi_k`` the singlet projector on pair k.

    The doubled register holds ``a`` on qubits ``0..n-1`` and ``b`` on
    ``n..2n-1``; pair ``k`` is ``(k, n + k)``. The register is built
    explicitly, so this is limited to ``n <= MAX_BELL_QUBITS``.
    """
    n = n_qubits(a)
    if n_qubits(b) != n:
        raise ValueError("register halves differ in size")
    if n > MAX_BELL_QUBITS:
        raise ValueError(f"doubled register limited to n <= {MAX_BELL_QUBITS}")
    _check_qubit(k, n)
    ab = np.kron(b, a)  # a occupies the low bits
    proj = np.outer(SINGLET, SINGLET.conj())
    return float(np.vdot(ab, apply_local(ab, (k, n + k), proj)).real)


def purity_bell_oracle(state: np.ndarray, k: int) -> float:
    """Purity from the two-copy singlet projector, ``1 - 2 <psi psi|Pi_k|psi psi>``."""
    return 1.0 - 2.0 * doubled_singlet_overlap(state, state, k)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    if np.shape(a) != np.shape(b):
        raise ValueError("states have different dimensions")
    return float(abs(np.vdot(a, b)) ** 2)


def product_marginal_fidelity(phi: np.ndarray) -> float:
    """``<phi| (x)_k rho_k |phi>`` where ``rho_k`` are the marginals of ``phi``.

    Each marginal is applied as a local operator; the tensor product is never
    materialised.
    """
    n = n_qubits(phi)
    chi = np.asarray(phi)
    for k in range(n):
        chi = apply_local(chi, (k,), reduced_density_matrix(phi, k))
    return float(np.vdot(phi, chi).real)


def reconstruction_fidelity(psi: np.ndarray, circuit=None, theta=None) -> float:
    """Fidelity of ``psi`` with ``U^dag (x)_k tr_{not k}(U psi) U``.

    ``circuit`` is anything with an ``apply(theta, state)`` method (see
    :class:`dqae.circuits.Circuit`); ``None`` means the identity.
    """
    if circuit is not None:
        if circuit.n_qubits != n_qubits(psi):
            raise ValueError("circuit width does not match the state")
        phi = circuit.apply(theta, psi)
    else:
        phi = np.asarray(psi)
    return product_marginal_fidelity(phi)


# -- state construction -----------------------------------------------------


def haar_random_1q(rng: RngLike) -> np.ndarray:
    """Single-qubit state uniform on the Bloch sphere."""
    gen = as_generator(rng)
    v = gen.normal(size=2) + 1j * gen.normal(size=2)
    return v / np.linalg.norm(v)


def product_state(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product with ``factors[j]`` on qubit ``j``."""
    if len(factors) == 0:
        raise ValueError("need at least one factor")
    out = np.ones(1, dtype=complex)
    for f in factors:
        f = np.asarray(f, dtype=complex)
        if f.shape != (2,):
            raise ValueError("factors must be 2-amplitude states")
        out = np.kron(f, out)
    return out


def random_product_state(n: int, rng: RngLike) -> np.ndarray:
    gen = as_generator(rng)
    return product_state([haar_random_1q(gen) for _ in range(n)])


# -- finite-shot estimators -------------------------------------------------


def sample_pauli(state, k, axis, shots, rng) -> float:
    """Binomial estimate of ``<sigma_k^axis>`` from ``shots`` measurements."""
    gen = as_generator(rng)
    p_plus = 0.5 * (1.0 + pauli_expectation(state, k, axis))
    hits = gen.binomial(shots, min(max(p_plus, 0.0), 1.0))
    return 2.0 * hits / shots - 1.0


def sample_purity(state, k, shots, rng, route="pauli") -> float:
    """Shot-noise estimate of ``E_k`` via Pauli or Bell-basis sampling."""
    gen = as_generator(rng)
    if route == "pauli":
        s = sum(sample_pauli(state, k, a, shots, gen) ** 2 for a in "xyz")
        return 0.5 * (1.0 + s)
    if route == "bell":
        p = min(max(doubled_singlet_overlap(state, state, k), 0.0), 1.0)
        return 1.0 - 2.0 * gen.binomial(shots, p) / shots
    raise ValueError(f"unknown route {route!r}")


# -- serialization ----------------------------------------------------------

_MAGIC = b"DQAE"
_VERSION = 1


def state_to_json(state: np.ndarray) -> str:
    psi = np.asarray(state, dtype=complex)
    return json.dumps(
        {"n": n_qubits(psi), "re": psi.real.tolist(), "im": psi.imag.tolist()}
    )


def state_from_json(text: str) -> np.ndarray:
    d = json.loads(text) if isinstance(text, str) else text
    psi = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
    if psi.shape != (1 << int(d["n"]),):
        raise ValueError("amplitude count does not match n")
    return psi


def state_to_bytes(state: np.ndarray) -> bytes:
    psi = np.asarray(state, dtype=complex)
    header = _MAGIC + struct.pack("<II", _VERSION, n_qubits(psi))
    body = np.empty(2 * psi.size, dtype="<f8")
    body[0::2] = psi.real
    body[1::2] = psi.imag
    return header + body.tobytes()


def state_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:4] != _MAGIC:
        raise ValueError("bad magic")
    version, n = struct.unpack("<II", blob[4:12])
    if version != _VERSION:
        raise ValueError(f"unsupported version {version}")
    body = np.frombuffer(blob[12:], dtype="<f8")
    if body.size != 2 << n:
        raise ValueError("truncated state payload")
    return body[0::2] + 1j * body[1::2]
