"""Stabilizer tableaux, Clifford move sequences and a Metropolis disentangler.

The tableau follows the CHP layout: rows ``0..n-1`` are destabilizers and
rows ``n..2n-1`` the stabilizer generators, each stored as x/z bit vectors
plus a sign bit. Row entry ``(x, z)`` means ``X`` for (1, 0), ``Z`` for
(0, 1) and ``Y`` for (1, 1).

Single-qubit Cliffords are indexed 0..23 in breadth-first order over words
in ``H`` and ``S`` (gate order, left to right; ``H`` tried before ``S``).
The table is fixed by :func:`c1_words` and printed in the README.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .circuits import Circuit, Gate
from .state import RngLike, RngStream, as_generator, product_state

LABELS = ("Z+", "Z-", "X+", "X-", "Y+", "Y-")
_LABEL_VEC = {
    "Z+": np.array([1, 0], dtype=complex),
    "Z-": np.array([0, 1], dtype=complex),
    "X+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "X-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "Y+": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "Y-": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}
_AXIS_BITS = {"x": (1, 0), "y": (1, 1), "z": (0, 1)}


class InvalidMove(ValueError):
    pass


# -- tableau -------------------------------------------------------------------


def _g(x1, z1, x2, z2):
    """Power of i picked up when multiplying single-qubit Paulis (CHP)."""
    return np.where(
        (x1 == 0) & (z1 == 0), 0,
        np.where((x1 == 1) & (z1 == 1), z2.astype(int) - x2,
                 np.where(x1 == 1, z2 * (2 * x2.astype(int) - 1), x2 * (1 - 2 * z2.astype(int)))))


# Gate updates act on stacked arrays ``x, z: (..., rows, n)``, ``r: (..., rows)``.


def _h(x, z, r, q):
    r ^= x[..., q] & z[..., q]
    tmp = x[..., q].copy()
    x[..., q] = z[..., q]
    z[..., q] = tmp


def _s(x, z, r, q):
    r ^= x[..., q] & z[..., q]
    z[..., q] ^= x[..., q]


def _cnot(x, z, r, c, t):
    r ^= x[..., c] & z[..., t] & (x[..., t] ^ z[..., c] ^ 1)
    x[..., t] ^= x[..., c]
    z[..., c] ^= z[..., t]


def _apply_moves(x, z, r, moves):
    words = c1_words()
    for m in moves:
        if m[0] == "cnot":
            _cnot(x, z, r, m[1], m[2])
        else:
            for ch in words[m[2]]:
                (_h if ch == "h" else _s)(x, z, r, m[1])


class Tableau:
    def __init__(self, n: int, x=None, z=None, r=None):
        if n < 1:
            raise ValueError("need n >= 1")
        self.n = n
        if x is None:
            # |0...0>: destabilizers X_k, stabilizers Z_k
            x = np.zeros((2 * n, n), dtype=np.uint8)
            z = np.zeros((2 * n, n), dtype=np.uint8)
            x[np.arange(n), np.arange(n)] = 1
            z[n + np.arange(n), np.arange(n)] = 1
            r = np.zeros(2 * n, dtype=np.uint8)
        self.x = np.asarray(x, dtype=np.uint8)
        self.z = np.asarray(z, dtype=np.uint8)
        self.r = np.asarray(r, dtype=np.uint8)

    def copy(self) -> "Tableau":
        return Tableau(self.n, self.x.copy(), self.z.copy(), self.r.copy())

    def __eq__(self, other) -> bool:
        return (isinstance(other, Tableau) and self.n == other.n
                and self.stabilizer_strings() == other.stabilizer_strings())

    # gates
    def _check(self, *qs):
        for q in qs:
            if not 0 <= q < self.n:
                raise InvalidMove(f"qubit {q} out of range for n={self.n}")

    def h(self, q: int) -> "Tableau":
        self._check(q)
        _h(self.x, self.z, self.r, q)
        return self

    def s(self, q: int) -> "Tableau":
        self._check(q)
        _s(self.x, self.z, self.r, q)
        return self

    def cnot(self, c: int, t: int) -> "Tableau":
        self._check(c, t)
        if c == t:
            raise InvalidMove("cnot needs distinct qubits")
        _cnot(self.x, self.z, self.r, c, t)
        return self

    # views
    @property
    def stab_x(self):
        return self.x[self.n:]

    @property
    def stab_z(self):
        return self.z[self.n:]

    def stabilizer_strings(self) -> list:
        out = []
        for i in range(self.n, 2 * self.n):
            chars = "".join("IXZY"[self.x[i, k] + 2 * self.z[i, k]] for k in range(self.n))
            out.append(("-" if self.r[i] else "+") + chars)
        return out

    def check_valid(self) -> None:
        """Raise if generators fail to commute or are dependent over GF(2)."""
        sx, sz = self.stab_x.astype(int), self.stab_z.astype(int)
        sym = (sx @ sz.T + sz @ sx.T) % 2
        if sym.any():
            raise ValueError("stabilizer rows do not commute")
        if gf2_rank(np.hstack([sx, sz])) != self.n:
            raise ValueError("stabilizer rows are dependent")

    # observables
    def _rowsum_into(self, hx, hz, hr, i):
        g = int(np.sum(_g(self.x[i], self.z[i], hx, hz)))
        phase = (2 * hr + 2 * int(self.r[i]) + g) % 4
        return hx ^ self.x[i], hz ^ self.z[i], phase // 2

    def pauli_expectation(self, k: int, axis: str) -> int:
        """``<sigma_k^axis>``: +1 / -1 if plus/minus it stabilizes, else 0."""
        self._check(k)
        px, pz = _AXIS_BITS[axis.lower()]
        sx, sz = self.stab_x[:, k], self.stab_z[:, k]
        if np.any((sx * pz + sz * px) % 2):
            return 0
        hx = np.zeros(self.n, dtype=np.uint8)
        hz = np.zeros(self.n, dtype=np.uint8)
        hr = 0
        dx, dz = self.x[: self.n, k], self.z[: self.n, k]
        for i in np.flatnonzero((dx * pz + dz * px) % 2):
            hx, hz, hr = self._rowsum_into(hx, hz, hr, self.n + i)
        return -1 if hr else 1

    def purity(self, k: int) -> float:
        return 0.5 * (1 + sum(self.pauli_expectation(k, a) ** 2 for a in "xyz"))

    def purities(self) -> np.ndarray:
        return np.where(impure_columns(self.stab_x[None], self.stab_z[None])[0], 0.5, 1.0)

    def to_statevector(self) -> np.ndarray:
        """Dense state (global phase: first nonzero amplitude real positive)."""
        n = self.n
        dim = 1 << n
        idx = np.arange(dim)
        ops = []
        for i in range(n, 2 * n):
            xm = int(sum(int(b) << k for k, b in enumerate(self.x[i])))
            zm = int(sum(int(b) << k for k, b in enumerate(self.z[i])))
            ny = bin(xm & zm).count("1")
            par = np.array([bin(v).count("1") & 1 for v in (idx & zm)])
            coef = (1j ** ny) * (1 - 2 * par) * (-1 if self.r[i] else 1)
            ops.append((xm, coef))
        for b in range(dim):
            psi = np.zeros(dim, dtype=complex)
            psi[b] = 1.0
            for xm, coef in ops:
                out = np.empty_like(psi)
                out[idx ^ xm] = coef * psi
                psi = 0.5 * (psi + out)
            nrm = np.linalg.norm(psi)
            if nrm > 1e-6:
                psi = psi / nrm
                lead = psi[np.flatnonzero(np.abs(psi) > 1e-9)[0]]
                return psi * (abs(lead) / lead)
        raise RuntimeError("tableau does not describe a state")


def gf2_rank(m) -> int:
    a = np.array(m, dtype=np.uint8) % 2
    rank = 0
    rows, cols = a.shape
    for c in range(cols):
        piv = np.flatnonzero(a[rank:, c])
        if piv.size == 0:
            continue
        p = rank + piv[0]
        a[[rank, p]] = a[[p, rank]]
        others = np.flatnonzero(a[:, c])
        others = others[others != rank]
        a[others] ^= a[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def impure_columns(sx, sz) -> np.ndarray:
    """Per (state, qubit) impurity flags from sign-free stabilizer bits.

    ``sx``/``sz`` have shape ``(L, rows, n)``. Qubit ``k`` is pure iff all
    nonzero Pauli codes in column ``k`` coincide (a single-qubit Pauli then
    lies in the group); otherwise its marginal is maximally mixed.
    """
    xb = sx.astype(bool)
    zb = sz.astype(bool)
    h1 = (xb & ~zb).any(axis=1)
    h2 = (~xb & zb).any(axis=1)
    h3 = (xb & zb).any(axis=1)
    return (h1.astype(np.int8) + h2 + h3) >= 2


def stab_product_input(labels: Sequence[str], n: Optional[int] = None) -> Tableau:
    """Tableau of ``(x)_k |label_k>`` with labels from ``LABELS``."""
    labels = list(labels)
    if n is not None and len(labels) != n:
        raise ValueError(f"expected {n} labels, got {len(labels)}")
    t = Tableau(len(labels))
    for k, lab in enumerate(labels):
        if lab not in _LABEL_VEC:
            raise ValueError(f"unknown label {lab!r}")
        if lab[0] == "X":
            t.h(k)
        elif lab[0] == "Y":
            t.h(k).s(k)
        if lab[1] == "-":
            t.r[t.n + k] ^= 1
    return t


def label_state(labels: Sequence[str]) -> np.ndarray:
    return product_state([_LABEL_VEC[lab] for lab in labels])


def stab_pauli_expectation(t: Tableau, k: int, axis: str) -> int:
    return t.pauli_expectation(k, axis)


def stab_purity(t: Tableau, k: int) -> float:
    return t.purity(k)


# -- single-qubit Clifford group -----------------------------------------------


@lru_cache(maxsize=None)
def c1_words() -> tuple:
    """The 24 single-qubit Cliffords as canonical H/S words (BFS order)."""

    def action(word):
        t = Tableau(1)
        t.x[:] = [[1], [0]]  # rows: image of X, image of Z
        t.z[:] = [[0], [1]]
        for ch in word:
            (t.h if ch == "h" else t.s)(0)
        return tuple(t.x[:, 0]) + tuple(t.z[:, 0]) + tuple(t.r)

    seen = {action(""): ""}
    frontier = [""]
    while frontier:
        nxt = []
        for w in frontier:
            for ch in "hs":
                key = action(w + ch)
                if key not in seen:
                    seen[key] = w + ch
                    nxt.append(w + ch)
        frontier = nxt
    words = tuple(seen.values())
    assert len(words) == 24
    return words


@lru_cache(maxsize=None)
def _c1_code_perm() -> np.ndarray:
    """Sign-free action of each C1 element on Pauli codes 0..3 (x + 2z)."""
    table = np.zeros((24, 4), dtype=np.uint8)
    for idx, word in enumerate(c1_words()):
        for code in range(4):
            t = Tableau(1, [[code & 1]], [[code >> 1]], [0])
            for ch in word:
                (t.h if ch == "h" else t.s)(0)
            table[idx, code] = t.x[0, 0] + 2 * t.z[0, 0]
    return table


# -- move sequences --------------------------------------------------------------


def _check_move(move, n):
    kind = move[0]
    if kind == "cnot":
        _, i, j = move
        if not (0 <= i < j < n):
            raise InvalidMove(f"cnot needs 0 <= i < j < n, got {move}")
    elif kind == "c1":
        _, k, idx = move
        if not (0 <= k < n and 0 <= idx < 24):
            raise InvalidMove(f"bad c1 move {move}")
    else:
        raise InvalidMove(f"unknown move {move!r}")


def apply_clifford_move(t: Tableau, move) -> Tableau:
    """Return a new tableau with ``move`` applied (``("cnot", i, j)`` or ``("c1", k, idx)``)."""
    _check_move(move, t.n)
    out = t.copy()
    if move[0] == "cnot":
        out.cnot(move[1], move[2])
    else:
        for ch in c1_words()[move[2]]:
            (out.h if ch == "h" else out.s)(move[1])
    return out


@dataclass
class CliffordCircuit:
    n: int
    moves: list = field(default_factory=list)

    def __post_init__(self):
        self.moves = [tuple(m) for m in self.moves]
        for m in self.moves:
            _check_move(m, self.n)

    def __len__(self):
        return len(self.moves)

    def apply(self, t: Tableau) -> Tableau:
        if t.n != self.n:
            raise ValueError("tableau width does not match circuit")
        out = t.copy()
        _apply_moves(out.x, out.z, out.r, self.moves)
        return out

    def apply_many(self, tableaux: Sequence[Tableau]) -> list:
        """Vectorized :meth:`apply` over a list of tableaux."""
        if not tableaux:
            return []
        if any(t.n != self.n for t in tableaux):
            raise ValueError("tableau width does not match circuit")
        x = np.array([t.x for t in tableaux])
        z = np.array([t.z for t in tableaux])
        r = np.array([t.r for t in tableaux])
        _apply_moves(x, z, r, self.moves)
        return [Tableau(self.n, x[i], z[i], r[i]) for i in range(len(tableaux))]

    def compose(self, other: "CliffordCircuit") -> "CliffordCircuit":
        """``other`` applied after ``self``."""
        return CliffordCircuit(self.n, self.moves + other.moves)

    def to_dict(self) -> dict:
        ms = []
        for m in self.moves:
            if m[0] == "cnot":
                ms.append({"m": "cnot", "q": [int(m[1]), int(m[2])]})
            else:
                ms.append({"m": "c1", "q": [int(m[1])], "idx": int(m[2])})
        return {"n": self.n, "moves": ms}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CliffordCircuit":
        moves = []
        for m in d["moves"]:
            if m["m"] == "cnot":
                moves.append(("cnot", *m["q"]))
            else:
                moves.append(("c1", m["q"][0], m["idx"]))
        return cls(int(d["n"]), moves)

    @classmethod
    def from_json(cls, text: str) -> "CliffordCircuit":
        return cls.from_dict(json.loads(text))


def clifford_to_gate_circuit(cc: CliffordCircuit) -> Circuit:
    gates = []
    for m in cc.moves:
        if m[0] == "cnot":
            gates.append(Gate("cnot", (m[1], m[2])))
        else:
            gates.extend(Gate(ch, (m[1],)) for ch in c1_words()[m[2]])
    return Circuit(cc.n, gates, 0)


def _random_move(n: int, gen: np.random.Generator):
    if n > 1 and gen.integers(2) == 0:
        i, j = sorted(gen.choice(n, 2, replace=False))
        return ("cnot", int(i), int(j))
    return ("c1", int(gen.integers(n)), int(gen.integers(24)))


def random_clifford_scrambler(n: int, length: Optional[int] = None, rng: RngLike = 0) -> CliffordCircuit:
    """Uniform random moves from the annealer's move set; default ``5 n^2`` of them."""
    if length is None:
        length = 5 * n * n
    if length < 0:
        raise ValueError("length must be >= 0")
    gen = as_generator(rng)
    return CliffordCircuit(n, [_random_move(n, gen) for _ in range(length)])


# -- stabilizer datasets ---------------------------------------------------------


def random_labels(n: int, gen: np.random.Generator) -> list:
    return [LABELS[i] for i in gen.integers(6, size=n)]


@dataclass
class StabilizerDataset:
    n: int
    scrambler: CliffordCircuit
    train_labels: list
    test_labels: list
    seed: int

    def tableaux(self, which: str = "train") -> list:
        labels = self.train_labels if which == "train" else self.test_labels
        return self.scrambler.apply_many([stab_product_input(lab) for lab in labels])

    def statevectors(self, which: str = "train") -> np.ndarray:
        v = clifford_to_gate_circuit(self.scrambler)
        labels = self.train_labels if which == "train" else self.test_labels
        return np.array([v.apply([], label_state(lab)) for lab in labels])

    def to_dict(self) -> dict:
        return {"kind": "stabilizer", "n": self.n, "seed": self.seed,
                "scrambler": self.scrambler.to_dict(),
                "train_labels": self.train_labels, "test_labels": self.test_labels}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "StabilizerDataset":
        return cls(int(d["n"]), CliffordCircuit.from_dict(d["scrambler"]),
                   [list(x) for x in d["train_labels"]], [list(x) for x in d["test_labels"]],
                   int(d["seed"]))


def generate_stabilizer_dataset(n: int, L: int, L_test: int, seed: int,
                                length: Optional[int] = None) -> StabilizerDataset:
    if L < 1 or L_test < 0:
        raise ValueError("need L >= 1 and L_test >= 0")
    root = RngStream(seed, "stabilizer")
    scr = random_clifford_scrambler(n, length, root.child(0).generator())
    g_train = root.child(1).generator()
    g_test = root.child(2).generator()
    train = [random_labels(n, g_train) for _ in range(L)]
    test = [random_labels(n, g_test) for _ in range(L_test)]
    return StabilizerDataset(n, scr, train, test, seed)


# -- Metropolis annealing ------------------------------------------------------


@dataclass
class AnnealSchedule:
    kind: str = "geometric"
    t0: float = 0.1
    beta: float = 0.9995  # geometric: T(b) = t0 * beta^b
    tau: float = 1000.0  # harmonic: T(b) = t0 / (1 + b / tau)
    max_steps: int = 200_000
    restarts: int = 0  # extra attempts, each with a fresh stream and doubled budget

    def __post_init__(self):
        if self.kind not in ("geometric", "harmonic"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.t0 <= 0 or not 0 < self.beta <= 1 or self.tau <= 0:
            raise ValueError("schedule parameters out of range")

    def temperature(self, b):
        b = np.asarray(b, dtype=float)
        if self.kind == "geometric":
            t = self.t0 * np.exp(b * np.log(self.beta))
        else:
            t = self.t0 / (1.0 + b / self.tau)
        return np.maximum(t, np.finfo(float).tiny)


@dataclass
class AnnealResult:
    circuit: CliffordCircuit
    steps: int
    converged: bool
    cost: float
    best_cost: float
    attempts: int = 1

    def __iter__(self):
        return iter((self.circuit, self.steps, self.converged))


def stabilizer_cost(tableaux: Sequence[Tableau]) -> float:
    """``1 - (1/LN) sum E_k``; each impure qubit contributes ``1/(2LN)``."""
    sx = np.array([t.stab_x for t in tableaux])
    sz = np.array([t.stab_z for t in tableaux])
    L, _, n = sx.shape
    return int(impure_columns(sx, sz).sum()) / (2.0 * L * n)


def _anneal_once(sx, sz, schedule: AnnealSchedule, budget: int, gen: np.random.Generator):
    L, _, n = sx.shape
    # column-major working copies: (n, L, rows)
    X = np.ascontiguousarray(sx.transpose(2, 0, 1)).astype(bool)
    Z = np.ascontiguousarray(sz.transpose(2, 0, 1)).astype(bool)

    def col_impure(k):
        h1 = (X[k] & ~Z[k]).any(axis=1)
        h2 = (~X[k] & Z[k]).any(axis=1)
        h3 = (X[k] & Z[k]).any(axis=1)
        return int(((h1.astype(np.int8) + h2 + h3) >= 2).sum())

    per_col = np.array([col_impure(k) for k in range(n)])
    count = int(per_col.sum())
    best = count
    scale = 2.0 * L * n
    perm = _c1_code_perm()
    moves = []
    step = 0
    chunk = 4096
    while count > 0 and step < budget:
        a = gen.integers(2, size=chunk) if n > 1 else np.ones(chunk, dtype=int)
        u = gen.random(chunk)
        pairs = gen.integers(n, size=(chunk, 2))
        c1 = gen.integers(24, size=chunk)
        temps = schedule.temperature(np.arange(step, step + chunk))
        for s in range(chunk):
            if count == 0 or step >= budget:
                break
            step += 1
            if a[s] == 1:
                # single-qubit Cliffords permute Pauli codes: purity is unchanged
                k, idx = int(pairs[s, 0]), int(c1[s])
                code = X[k].astype(np.uint8) + 2 * Z[k].astype(np.uint8)
                code = perm[idx][code]
                X[k] = (code & 1).astype(bool)
                Z[k] = (code >> 1).astype(bool)
                moves.append(("c1", k, idx))
                continue
            i, j = int(pairs[s, 0]), int(pairs[s, 1])
            if i == j:
                j = (i + 1 + int(c1[s]) % (n - 1)) % n
            if i > j:
                i, j = j, i
            X[j] ^= X[i]
            Z[i] ^= Z[j]
            ni, nj = col_impure(i), col_impure(j)
            delta = ni + nj - per_col[i] - per_col[j]
            if delta <= 0 or u[s] < np.exp(-delta / scale / temps[s]):
                per_col[i], per_col[j] = ni, nj
                count += delta
                best = min(best, count)
                moves.append(("cnot", i, j))
            else:
                X[j] ^= X[i]
                Z[i] ^= Z[j]
    return moves, step, count, best


def metropolis_train(data: Sequence[Tableau], schedule: Optional[AnnealSchedule] = None,
                     rng: RngLike = 0) -> AnnealResult:
    """Learn a Clifford disentangler by Metropolis annealing over CNOT/C1 moves.

    The cost is evaluated on entry; if the data is already product the
    identity circuit is returned at step 0.
    """
    data = list(data)
    if not data:
        raise ValueError("need at least one training tableau")
    n = data[0].n
    if any(t.n != n for t in data):
        raise ValueError("training tableaux differ in width")
    schedule = schedule or AnnealSchedule()
    sx = np.array([t.stab_x for t in data])
    sz = np.array([t.stab_z for t in data])
    L = len(data)
    if isinstance(rng, RngStream):
        streams = [rng.child(a) for a in range(schedule.restarts + 1)]
        gens = [s.generator() for s in streams]
    else:
        g0 = as_generator(rng)
        gens = [g0] + [np.random.Generator(np.random.Philox(g0.integers(2**63)))
                       for _ in range(schedule.restarts)]
    budget = schedule.max_steps
    total = 0
    best_overall = None
    for attempt, gen in enumerate(gens):
        moves, steps, count, best = _anneal_once(sx, sz, schedule, budget, gen)
        total += steps
        best_overall = best if best_overall is None else min(best_overall, best)
        if count == 0:
            return AnnealResult(CliffordCircuit(n, moves), total, True, 0.0,
                                0.0, attempt + 1)
        budget *= 2
    return AnnealResult(CliffordCircuit(n, moves), total, False, count / (2.0 * L * n),
                        best_overall / (2.0 * L * n), len(gens))


def clifford_cost(cc: CliffordCircuit, tableaux: Sequence[Tableau]) -> float:
    return stabilizer_cost(cc.apply_many(list(tableaux)))
