"""Binary-symplectic stabilizer tools.

A Pauli string on ``n`` qubits is ``i^phase * P_0 (x) ... (x) P_{n-1}`` with
``P_j`` determined by the bits ``(x_j, z_j)``: ``(0,0)=I``, ``(1,0)=X``,
``(0,1)=Z``, ``(1,1)=Y``.  Qubit indices are 0-based and qubit 0 is the
most significant bit of a dense basis index, matching the MPS code.

Text form: an optional sign ``+``/``-``, an optional ``i``, then one letter
from ``IXYZ`` per qubit, e.g. ``+XXI``, ``-ZIZ``, ``-iXY``.  Rendering always
writes the sign.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_PAULI_RE = re.compile(r"^([+-]?)(i?)([IXYZ]+)$")
_LETTER = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
_BITS = {v: k for k, v in _LETTER.items()}
_PHASE_TEXT = {0: "+", 1: "+i", 2: "-", 3: "-i"}


class DeterministicOutcome(ValueError):
    """The measured Z is already in the stabilizer group; no correction is needed."""


def _g(x1, z1, x2, z2) -> np.ndarray:
    """Exponent of ``i`` picked up by the product ``P(x1,z1) P(x2,z2)`` per qubit."""
    x1, z1, x2, z2 = (np.asarray(v, dtype=np.int64) for v in (x1, z1, x2, z2))
    return np.where(
        (x1 == 0) & (z1 == 0), 0,
        np.where((x1 == 1) & (z1 == 1), z2 - x2,
                 np.where(x1 == 1, z2 * (2 * x2 - 1), x2 * (1 - 2 * z2))))


@dataclass(frozen=True)
class PauliString:
    x: np.ndarray
    z: np.ndarray
    phase: int = 0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.uint8) & 1
        z = np.asarray(self.z, dtype=np.uint8) & 1
        if x.shape != z.shape or x.ndim != 1:
            raise ValueError("x and z must be bit vectors of equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "phase", int(self.phase) % 4)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def bits(self) -> np.ndarray:
        """Binary vector ``(r_x | r_z)`` of length ``2n``."""
        return np.concatenate([self.x, self.z])

    @classmethod
    def from_bits(cls, r, phase: int = 0) -> PauliString:
        r = np.asarray(r, dtype=np.uint8)
        n = r.size // 2
        return cls(r[:n], r[n:], phase)

    @classmethod
    def identity(cls, n: int) -> PauliString:
        return cls(np.zeros(n, np.uint8), np.zeros(n, np.uint8))

    @classmethod
    def single(cls, n: int, k: int, letter: str) -> PauliString:
        x = np.zeros(n, np.uint8)
        z = np.zeros(n, np.uint8)
        x[k], z[k] = _BITS[letter]
        return cls(x, z)

    @classmethod
    def parse(cls, text: str) -> PauliString:
        mt = _PAULI_RE.match(text.strip())
        if mt is None:
            raise ValueError(f"not a Pauli string: {text!r}")
        sign, imag, letters = mt.groups()
        phase = (2 if sign == "-" else 0) + (1 if imag else 0)
        bits = np.array([_BITS[c] for c in letters], dtype=np.uint8)
        return cls(bits[:, 0], bits[:, 1], phase)

    def __str__(self) -> str:
        return _PHASE_TEXT[self.phase] + "".join(
            _LETTER[(int(a), int(b))] for a, b in zip(self.x, self.z))

    def __repr__(self) -> str:
        return f"PauliString({str(self)!r})"

    def __eq__(self, other) -> bool:
        return (isinstance(other, PauliString) and self.phase == other.phase
                and np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z))

    def __hash__(self):
        return hash(str(self))

    def __mul__(self, other: PauliString) -> PauliString:
        if self.n != other.n:
            raise ValueError("length mismatch")
        ph = self.phase + other.phase + int(_g(self.x, self.z, other.x, other.z).sum())
        return PauliString(self.x ^ other.x, self.z ^ other.z, ph)

    def unsigned(self) -> PauliString:
        return PauliString(self.x, self.z, 0)

    def letter(self, k: int) -> str:
        return _LETTER[(int(self.x[k]), int(self.z[k]))]

    def restrict(self, qubits: Sequence[int]) -> PauliString:
        q = list(qubits)
        return PauliString(self.x[q], self.z[q], self.phase)

    def site_matrix(self, k: int) -> np.ndarray:
        return _MATS[self.letter(k)]

    def to_matrix(self) -> np.ndarray:
        out = np.array([[1.0 + 0j]])
        for k in range(self.n):
            out = np.kron(out, self.site_matrix(k))
        return (1j ** self.phase) * out

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Act on a dense state vector of ``2^n`` amplitudes."""
        n = self.n
        idx = np.arange(2**n)
        weights = 1 << np.arange(n - 1, -1, -1)
        xmask = int((self.x.astype(np.int64) * weights).sum())
        zmask = int((self.z.astype(np.int64) * weights).sum())
        parity = np.zeros(idx.size, dtype=np.int64)
        t = idx & zmask
        while t.any():
            parity ^= t & 1
            t = t >> 1
        n_y = int((self.x & self.z).sum())
        coeff = (1j ** ((self.phase + n_y) % 4)) * (1 - 2 * parity)
        out = np.empty_like(vec, dtype=np.complex128)
        out[idx ^ xmask] = coeff * vec
        return out


_MATS = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.diag([1.0, -1.0]).astype(np.complex128),
}


def symplectic_form(n: int) -> np.ndarray:
    """``Lambda``: the ``2n x 2n`` block swap of X and Z parts."""
    lam = np.zeros((2 * n, 2 * n), dtype=np.uint8)
    lam[:n, n:] = np.eye(n, dtype=np.uint8)
    lam[n:, :n] = np.eye(n, dtype=np.uint8)
    return lam


def commutes(g: PauliString, h: PauliString) -> int:
    """``r(g) Lambda r(h) mod 2``: 0 if the strings commute, 1 if they anticommute."""
    if g.n != h.n:
        raise ValueError("length mismatch")
    return int((np.dot(g.x, h.z) + np.dot(g.z, h.x)) % 2)


def gf2_rank(m: np.ndarray) -> int:
    a = np.array(m, dtype=np.uint8) & 1
    rank = 0
    rows, cols = a.shape
    for c in range(cols):
        piv = next((r for r in range(rank, rows) if a[r, c]), None)
        if piv is None:
            continue
        a[[rank, piv]] = a[[piv, rank]]
        for r in range(rows):
            if r != rank and a[r, c]:
                a[r] ^= a[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def gf2_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """One solution of ``a x = b`` over GF(2) with free variables set to 0."""
    a = np.array(a, dtype=np.uint8) & 1
    b = np.array(b, dtype=np.uint8) & 1
    rows, cols = a.shape
    aug = np.concatenate([a, b[:, None]], axis=1)
    pivots = []
    rank = 0
    for c in range(cols):
        piv = next((r for r in range(rank, rows) if aug[r, c]), None)
        if piv is None:
            continue
        aug[[rank, piv]] = aug[[piv, rank]]
        for r in range(rows):
            if r != rank and aug[r, c]:
                aug[r] ^= aug[rank]
        pivots.append(c)
        rank += 1
        if rank == rows:
            break
    if aug[rank:, -1].any():
        return None
    x = np.zeros(cols, dtype=np.uint8)
    for r, c in enumerate(pivots):
        x[c] = aug[r, -1]
    return x


class CheckMatrix:
    """Generators ``g_0 .. g_{n-1}`` of a stabilizer group, as Pauli strings.

    The binary matrix ``R`` (``n x 2n``) has row ``i`` equal to ``r(g_i)``.
    Construction checks that the rows pairwise commute; linear independence
    is reported by :func:`independent`.
    """

    def __init__(self, rows: Sequence[PauliString]):
        rows = [PauliString.parse(r) if isinstance(r, str) else r for r in rows]
        if not rows:
            raise ValueError("empty check matrix")
        n = rows[0].n
        if any(r.n != n for r in rows) or len(rows) != n:
            raise ValueError(f"need {n} generators on {n} qubits, got {len(rows)}")
        for i in range(n):
            for j in range(i + 1, n):
                if commutes(rows[i], rows[j]):
                    raise ValueError(f"generators {i} and {j} anticommute")
        self.rows = rows
        self.n = n

    @property
    def matrix(self) -> np.ndarray:
        return np.array([r.bits for r in self.rows], dtype=np.uint8)

    def __repr__(self) -> str:
        return "CheckMatrix([" + ", ".join(repr(str(r)) for r in self.rows) + "])"


def independent(r: CheckMatrix) -> bool:
    return gf2_rank(r.matrix) == r.n


def anticommuting_partner(r: CheckMatrix, i: int) -> PauliString:
    """Pauli string anticommuting with generator ``i`` and commuting with the rest.

    Solves ``R Lambda r(g) = e_i`` by Gaussian elimination and returns the
    canonical solution with phase ``+1``.
    """
    n = r.n
    e = np.zeros(n, dtype=np.uint8)
    e[i] = 1
    sol = gf2_solve(r.matrix @ symplectic_form(n) % 2, e)
    if sol is None:
        raise ValueError("generators are dependent; no partner exists")
    g = PauliString.from_bits(sol)
    pattern = [commutes(g, row) for row in r.rows]
    assert pattern == list(e), f"partner violates its commutation pattern: {pattern}"
    return g


def measured_group(r: CheckMatrix, ks: Sequence[int]) -> tuple[CheckMatrix, list[int]]:
    """Generators after measuring ``Z_k`` for each ``k`` in order (signs dropped).

    For every ``k`` the first anticommuting generator is multiplied into the
    other anticommuting ones and then replaced by ``Z_k``.  Returns the new
    generators and the row index holding each ``Z_k``.  Raises
    :class:`DeterministicOutcome` when some ``Z_k`` commutes with the whole
    current group.
    """
    rows = [row.unsigned() for row in r.rows]
    where = []
    for k in ks:
        zk = PauliString.single(r.n, k, "Z")
        anti = [i for i, row in enumerate(rows) if commutes(row, zk)]
        if not anti:
            raise DeterministicOutcome(f"Z_{k} has a deterministic outcome")
        p = anti[0]
        for i in anti[1:]:
            rows[i] = (rows[i] * rows[p]).unsigned()
        rows[p] = zk
        where.append(p)
    return CheckMatrix(rows), where


def post_measurement_correction(r: CheckMatrix, k: int) -> PauliString:
    """Pauli string mapping the outcome-1 state of a ``Z_k`` measurement to the outcome-0 state.

    Equality holds up to a global phase.
    """
    group, where = measured_group(r, [k])
    return anticommuting_partner(group, where[0])


def multi_measurement_correction(r: CheckMatrix, ks: Sequence[int], outcome: Sequence[int]
                                 ) -> PauliString:
    """Correction for measuring ``Z_k`` on every ``k`` of ``ks`` with bits ``outcome``.

    Qubits are processed in the given order; partners are computed on the
    final group, where each anticommutes with its own ``Z_k`` only, and the
    correction is the product of partners over the bits equal to 1.
    """
    group, where = measured_group(r, ks)
    g = PauliString.identity(r.n)
    for p, bit in zip(where, outcome):
        if bit:
            g = g * anticommuting_partner(group, p)
    return g.unsigned()


class StabTableau:
    """Stabilizer tableau with destabilizers and phases.

    Rows ``0..n-1`` are destabilizers and rows ``n..2n-1`` stabilizers; ``r``
    holds the sign bit of each row.
    """

    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        self.x[np.arange(n), np.arange(n)] = 1
        self.z[n + np.arange(n), np.arange(n)] = 1

    def copy(self) -> StabTableau:
        t = StabTableau.__new__(StabTableau)
        t.n, t.x, t.z, t.r = self.n, self.x.copy(), self.z.copy(), self.r.copy()
        return t

    def h(self, a: int) -> None:
        self.r ^= self.x[:, a] & self.z[:, a]
        self.x[:, a], self.z[:, a] = self.z[:, a].copy(), self.x[:, a].copy()

    def s(self, a: int) -> None:
        self.r ^= self.x[:, a] & self.z[:, a]
        self.z[:, a] ^= self.x[:, a]

    def cnot(self, a: int, b: int) -> None:
        if a == b:
            raise ValueError("control equals target")
        self.r ^= self.x[:, a] & self.z[:, b] & (self.x[:, b] ^ self.z[:, a] ^ 1)
        self.x[:, b] ^= self.x[:, a]
        self.z[:, a] ^= self.z[:, b]

    def apply(self, ops: Sequence[tuple]) -> StabTableau:
        """Apply ``("h", q)``, ``("s", q)``, ``("x", q)``, ``("z", q)`` or ``("cnot", c, t)``."""
        for op in ops:
            name = op[0]
            if name == "h":
                self.h(op[1])
            elif name == "s":
                self.s(op[1])
            elif name == "z":
                self.s(op[1])
                self.s(op[1])
            elif name == "x":
                self.h(op[1])
                self.s(op[1])
                self.s(op[1])
                self.h(op[1])
            elif name == "cnot":
                self.cnot(op[1], op[2])
            else:
                raise ValueError(f"unknown Clifford op {op!r}")
        return self

    def _rowsum(self, h: int, i: int) -> None:
        ph = 2 * int(self.r[h]) + 2 * int(self.r[i]) + int(
            _g(self.x[i], self.z[i], self.x[h], self.z[h]).sum())
        self.r[h] = 1 if ph % 4 == 2 else 0
        self.x[h] ^= self.x[i]
        self.z[h] ^= self.z[i]

    def measure(self, a: int, rng: np.random.Generator | None = None,
                forced: int | None = None) -> tuple[int, bool]:
        """Measure ``Z_a``; returns ``(bit, random)``.

        A random outcome is drawn from ``rng`` unless ``forced`` is given.
        """
        n = self.n
        stab = [p for p in range(n, 2 * n) if self.x[p, a]]
        if stab:
            p = stab[0]
            for i in range(2 * n):
                if i != p and self.x[i, a]:
                    self._rowsum(i, p)
            self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p], self.z[p], self.r[p]
            self.x[p] = 0
            self.z[p] = 0
            self.z[p, a] = 1
            if forced is None:
                rng = rng if rng is not None else np.random.default_rng()
                forced = int(rng.integers(2))
            self.r[p] = forced
            return int(forced), True
        scratch = StabTableau.__new__(StabTableau)
        scratch.n = n
        scratch.x = np.vstack([self.x, np.zeros((1, n), np.uint8)])
        scratch.z = np.vstack([self.z, np.zeros((1, n), np.uint8)])
        scratch.r = np.append(self.r, 0).astype(np.uint8)
        for i in range(n):
            if self.x[i, a]:
                scratch._rowsum(2 * n, i + n)
        bit = int(scratch.r[2 * n])
        if forced is not None and forced != bit:
            raise DeterministicOutcome(f"outcome of Z_{a} is fixed to {bit}")
        return bit, False

    def stabilizers(self) -> list[PauliString]:
        n = self.n
        return [PauliString(self.x[i], self.z[i], 2 * int(self.r[i])) for i in range(n, 2 * n)]

    def check_matrix(self) -> CheckMatrix:
        return CheckMatrix(self.stabilizers())

    def to_dense(self) -> np.ndarray:
        """State vector (global phase fixed by a real positive leading amplitude)."""
        n = self.n
        gens = self.stabilizers()
        for b in range(2**n):
            v = np.zeros(2**n, dtype=np.complex128)
            v[b] = 1.0
            for g in gens:
                v = 0.5 * (v + g.apply(v))
            nrm = np.linalg.norm(v)
            if nrm > 1e-8:
                v = v / nrm
                lead = v[np.argmax(np.abs(v) > 1e-12)]
                return v * (abs(lead) / lead)
        raise RuntimeError("tableau does not describe a state")


def random_clifford_ops(n: int, gate_count: int, seed=None) -> list[tuple]:
    rng = np.random.default_rng(seed)
    ops = []
    for _ in range(gate_count):
        kind = rng.integers(3) if n > 1 else rng.integers(2)
        if kind == 0:
            ops.append(("h", int(rng.integers(n))))
        elif kind == 1:
            ops.append(("s", int(rng.integers(n))))
        else:
            a, b = rng.choice(n, size=2, replace=False)
            ops.append(("cnot", int(a), int(b)))
    return ops


def random_stabilizer(n: int, gate_count: int, seed=None) -> StabTableau:
    """Tableau after a seeded random H/S/CNOT sequence on ``|0...0>``."""
    return StabTableau(n).apply(random_clifford_ops(n, gate_count, seed))
