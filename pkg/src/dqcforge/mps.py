"""Open-boundary matrix product states and the target-state constructors.

Site tensors are arrays of shape ``(left_bond, 2, right_bond)``.  Qubit 0 is
the leftmost site and the most significant bit of a computational basis
index.  MPS values are treated as immutable: every operation returns a new
state and never writes into the arrays of its input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor import DenseTensor, ShapeError

DEFAULT_MAX_BOND = 256
DEFAULT_CUTOFF = 1e-12
DEGENERATE_P = 1e-12


class DegenerateOutcome(ValueError):
    """A projected branch has (numerically) zero probability."""

    def __init__(self, probability: float):
        super().__init__(f"outcome probability {probability:.3e} below {DEGENERATE_P:g}")
        self.probability = probability


def _as_matrix(gate) -> np.ndarray:
    if isinstance(gate, DenseTensor):
        d = gate.data
        k = d.ndim // 2
        return d.reshape(2**k, 2**k)
    g = np.asarray(gate, dtype=np.complex128)
    if g.ndim != 2:
        k = g.ndim // 2
        g = g.reshape(2**k, 2**k)
    return g


def _truncated_svd(m: np.ndarray, max_bond: int, cutoff: float):
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    keep = int(np.count_nonzero(s > cutoff * s[0])) if s[0] > 0 else 1
    keep = max(1, min(keep, max_bond))
    return u[:, :keep], s[:keep], vh[:keep], float(np.sum(s[keep:] ** 2))


@dataclass(frozen=True)
class MPS:
    """Matrix product state with an optional orthogonality center."""

    tensors: tuple
    center: int | None = None
    max_bond: int = DEFAULT_MAX_BOND
    cutoff: float = DEFAULT_CUTOFF

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=np.complex128) for t in self.tensors)
        if not ts:
            raise ShapeError("an MPS needs at least one site")
        if ts[0].shape[0] != 1 or ts[-1].shape[2] != 1:
            raise ShapeError("boundary bonds must have extent 1")
        for a, b in zip(ts, ts[1:]):
            if a.shape[2] != b.shape[0]:
                raise ShapeError(f"bond mismatch {a.shape} / {b.shape}")
        object.__setattr__(self, "tensors", ts)

    # ---- basic structure -------------------------------------------------
    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def site(self, i: int) -> DenseTensor:
        return DenseTensor(self.tensors[i], (f"b{i}", f"p{i}", f"b{i + 1}"))

    def _replace(self, tensors, center) -> MPS:
        return MPS(tuple(tensors), center, self.max_bond, self.cutoff)

    def with_limits(self, max_bond: int | None = None, cutoff: float | None = None) -> MPS:
        return MPS(self.tensors, self.center,
                   self.max_bond if max_bond is None else max_bond,
                   self.cutoff if cutoff is None else cutoff)

    @classmethod
    def product(cls, vectors: Sequence, **kw) -> MPS:
        return cls(tuple(np.asarray(v, dtype=np.complex128).reshape(1, 2, 1) for v in vectors),
                   center=0, **kw)

    @classmethod
    def zeros(cls, n: int, **kw) -> MPS:
        return cls.product([[1.0, 0.0]] * n, **kw)

    @classmethod
    def from_dense(cls, psi, **kw) -> MPS:
        """Exact MPS of a dense state vector (sequential SVDs)."""
        psi = np.asarray(psi, dtype=np.complex128).reshape(-1)
        n = int(round(np.log2(psi.size)))
        if 2**n != psi.size:
            raise ShapeError("dense vector length is not a power of two")
        tensors = []
        rest = psi.reshape(1, -1)
        for _ in range(n - 1):
            chi = rest.shape[0]
            m = rest.reshape(chi * 2, -1)
            u, s, vh, _ = _truncated_svd(m, 2**n, 1e-15)
            tensors.append(u.reshape(chi, 2, -1))
            rest = s[:, None] * vh
        tensors.append(rest.reshape(rest.shape[0], 2, 1))
        return cls(tuple(tensors), center=n - 1, **kw)

    def to_dense(self) -> np.ndarray:
        out = self.tensors[0].reshape(2, -1)
        for t in self.tensors[1:]:
            out = np.tensordot(out, t, axes=(1, 0)).reshape(-1, t.shape[2])
        return out.reshape(-1)

    # ---- canonical forms -------------------------------------------------
    def canonicalize(self, center: int = 0) -> MPS:
        """Left-isometries left of ``center``, right-isometries right of it."""
        if not 0 <= center < self.n:
            raise IndexError(f"center {center} out of range")
        ts = list(self.tensors)
        if self.center is None:
            lo, hi = 0, self.n - 1
        else:
            lo = hi = self.center
        for i in range(lo, center):
            ts[i], ts[i + 1] = _qr_right(ts[i], ts[i + 1])
        for i in range(hi, center, -1):
            ts[i - 1], ts[i] = _qr_left(ts[i - 1], ts[i])
        return self._replace(ts, center)

    def norm(self) -> float:
        if self.center is not None:
            return float(np.linalg.norm(self.tensors[self.center]))
        return float(np.sqrt(abs(overlap(self, self))))

    def normalize(self) -> MPS:
        s = self if self.center is not None else self.canonicalize(0)
        c = s.center
        ts = list(s.tensors)
        nrm = np.linalg.norm(ts[c])
        if nrm == 0:
            raise ValueError("cannot normalize the zero state")
        ts[c] = ts[c] / nrm
        return s._replace(ts, c)

    def schmidt_values(self, cut: int) -> np.ndarray:
        """Normalised Schmidt coefficients across the bond left of site ``cut``."""
        if not 1 <= cut < self.n:
            raise IndexError(f"cut {cut} must lie in 1..{self.n - 1}")
        s = self.canonicalize(cut)
        t = s.tensors[cut]
        sv = np.linalg.svd(t.reshape(t.shape[0], -1), compute_uv=False)
        return sv / np.linalg.norm(sv)

    def compress(self, max_bond: int | None = None, cutoff: float | None = None) -> MPS:
        """SVD-truncate every bond (right-to-left after left canonicalization)."""
        max_bond = self.max_bond if max_bond is None else max_bond
        cutoff = self.cutoff if cutoff is None else cutoff
        s = self.canonicalize(self.n - 1)
        ts = list(s.tensors)
        for i in range(self.n - 1, 0, -1):
            t = ts[i]
            l, _, r = t.shape
            u, sv, vh, _ = _truncated_svd(t.reshape(l, 2 * r), max_bond, cutoff)
            ts[i] = vh.reshape(-1, 2, r)
            ts[i - 1] = np.tensordot(ts[i - 1], u * sv, axes=(2, 0))
        return self._replace(ts, 0)

    # ---- gates -----------------------------------------------------------
    def apply_gate(self, gate, sites: Sequence[int], check: bool = True) -> MPS:
        return apply_gate(self, gate, sites, check=check)

    # ---- serialization ---------------------------------------------------
    def to_json(self) -> str:
        sites = []
        for t in self.tensors:
            flat = np.empty(2 * t.size)
            flat[0::2] = t.real.reshape(-1)
            flat[1::2] = t.imag.reshape(-1)
            sites.append({"shape": list(t.shape), "data": flat.tolist()})
        return json.dumps({"format": "dqcforge-mps", "version": 1, "n": self.n,
                           "center": self.center, "max_bond": self.max_bond,
                           "cutoff": self.cutoff, "sites": sites})

    @classmethod
    def from_json(cls, text: str) -> MPS:
        doc = json.loads(text)
        if doc.get("format") != "dqcforge-mps":
            raise ValueError("not a dqcforge MPS document")
        ts = []
        for site in doc["sites"]:
            flat = np.asarray(site["data"], dtype=float)
            ts.append((flat[0::2] + 1j * flat[1::2]).reshape(site["shape"]))
        if len(ts) != doc["n"]:
            raise ValueError("site count does not match header")
        return cls(tuple(ts), doc["center"], doc["max_bond"], doc["cutoff"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> MPS:
        return cls.from_json(Path(path).read_text())


def _qr_right(a: np.ndarray, b: np.ndarray):
    l, d, r = a.shape
    q, rr = np.linalg.qr(a.reshape(l * d, r))
    return q.reshape(l, d, -1), np.tensordot(rr, b, axes=(1, 0))


def _qr_left(a: np.ndarray, b: np.ndarray):
    l, d, r = b.shape
    q, rr = np.linalg.qr(b.reshape(l, d * r).T)
    return np.tensordot(a, rr.T, axes=(2, 0)), q.T.reshape(-1, d, r)


def check_unitary(u: np.ndarray, atol: float = 1e-8) -> None:
    if not np.allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=atol):
        raise ValueError("gate is not unitary")


def apply_gate(s: MPS, gate, sites: Sequence[int], check: bool = True) -> MPS:
    """Apply a one- or two-site gate (matrix indexed ``[out, in]``).

    Two-site gates act on ``(i, i + 1)`` with site ``i`` as the most
    significant bit; the result is split by SVD honouring the state's
    ``max_bond`` and ``cutoff`` and leaves the center on ``i + 1``.
    """
    g = _as_matrix(gate)
    sites = tuple(int(i) for i in sites)
    if check:
        check_unitary(g)
    if len(sites) == 1:
        (i,) = sites
        if g.shape != (2, 2):
            raise ShapeError("one-site gate must be 2x2")
        ts = list(s.tensors)
        ts[i] = np.einsum("ab,lbr->lar", g, ts[i])
        return s._replace(ts, s.center)
    if len(sites) != 2 or sites[1] != sites[0] + 1:
        raise ValueError(f"two-site gates need adjacent sites (i, i+1), got {sites}")
    if g.shape != (4, 4):
        raise ShapeError("two-site gate must be 4x4")
    i = sites[0]
    if not 0 <= i < s.n - 1:
        raise IndexError(f"sites {sites} out of range")
    if s.center is None or s.center not in (i, i + 1):
        s = s.canonicalize(i if s.center is None or s.center <= i else i + 1)
    a, b = s.tensors[i], s.tensors[i + 1]
    l, r = a.shape[0], b.shape[2]
    theta = np.tensordot(a, b, axes=(2, 0)).reshape(l, 4, r)
    theta = np.einsum("ab,lbr->lar", g, theta).reshape(l * 2, 2 * r)
    u, sv, vh, _ = _truncated_svd(theta, s.max_bond, s.cutoff)
    ts = list(s.tensors)
    ts[i] = u.reshape(l, 2, -1)
    ts[i + 1] = (sv[:, None] * vh).reshape(-1, 2, r)
    return s._replace(ts, i + 1)


def overlap(a: MPS, b: MPS) -> complex:
    """``<a|b>`` by a left-to-right transfer contraction."""
    if a.n != b.n:
        raise ShapeError(f"length mismatch {a.n} vs {b.n}")
    env = np.ones((1, 1), dtype=np.complex128)
    for x, y in zip(a.tensors, b.tensors):
        env = np.tensordot(env, y, axes=(1, 0))
        env = np.tensordot(x.conj(), env, axes=((0, 1), (0, 1)))
    return complex(env[0, 0])


def _transfer_left(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    env = np.tensordot(env, ket, axes=(1, 0))
    return np.tensordot(bra.conj(), env, axes=((0, 1), (0, 1)))


def _transfer_right(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    env = np.tensordot(ket, env, axes=(2, 1))  # b s a'
    return np.tensordot(env, bra.conj(), axes=((1, 2), (1, 2))).T


def gate_environment(bra: MPS, ket: MPS, sites: Sequence[int]) -> np.ndarray:
    """Matrix ``E[in, out]`` with ``<bra| G_sites |ket> = Tr(E @ G)``.

    ``sites`` is ``(i,)`` or ``(i, i + 1)``; every other site is contracted.
    """
    if bra.n != ket.n:
        raise ShapeError("bra and ket lengths differ")
    i, k = sites[0], len(sites)
    left = np.ones((1, 1), dtype=np.complex128)
    for q in range(i):
        left = _transfer_left(left, bra.tensors[q], ket.tensors[q])
    right = np.ones((1, 1), dtype=np.complex128)
    for q in range(bra.n - 1, i + k - 1, -1):
        right = _transfer_right(right, bra.tensors[q], ket.tensors[q])
    t = np.tensordot(left, ket.tensors[i], axes=(1, 0))  # a j c
    b = bra.tensors[i].conj()
    if k == 2:
        t = np.tensordot(t, ket.tensors[i + 1], axes=(2, 0))  # a j1 j2 d
        b = np.tensordot(b, bra.tensors[i + 1].conj(), axes=(2, 0))  # a o1 o2 e
    t = np.tensordot(t, right, axes=(t.ndim - 1, 1))  # a j.. e
    e = np.tensordot(t, b, axes=((0, t.ndim - 1), (0, b.ndim - 1)))  # j.. o..
    d = 2**k
    return e.reshape(d, d)


def fidelity(a: MPS, b: MPS) -> float:
    return abs(overlap(a, b)) ** 2 / (abs(overlap(a, a)) * abs(overlap(b, b)))


def project(s: MPS, sites: Sequence[int], outcome: Sequence[int],
            min_probability: float = DEGENERATE_P) -> tuple[MPS, float]:
    """Project ``sites`` onto the bits ``outcome`` and remove them.

    Returns the normalized state on the remaining sites (original order)
    together with the outcome probability.  Raises ``DegenerateOutcome`` when
    that probability is below ``min_probability`` (or exactly zero).  With
    many measured sites every single outcome can be rarer than the default
    threshold, so samplers pass ``min_probability=0``.
    """
    sites = [int(k) for k in sites]
    outcome = [int(b) for b in outcome]
    if len(sites) != len(outcome):
        raise ValueError("outcome length differs from number of measured sites")
    if len(set(sites)) != len(sites) or any(not 0 <= k < s.n for k in sites):
        raise IndexError(f"invalid measured sites {sites}")
    if len(sites) >= s.n:
        raise ValueError("at least one site must remain unmeasured")
    norm2 = s.norm() ** 2
    chosen = dict(zip(sites, outcome))
    kept = []
    carry = None
    for i, t in enumerate(s.tensors):
        if i in chosen:
            m = t[:, chosen[i], :]
            carry = m if carry is None else carry @ m
        else:
            if carry is not None:
                t = np.tensordot(carry, t, axes=(1, 0))
                carry = None
            kept.append(t)
    if carry is not None:
        kept[-1] = np.tensordot(kept[-1], carry, axes=(2, 0))
    out = MPS(tuple(kept), None, s.max_bond, s.cutoff).canonicalize(0)
    p = out.norm() ** 2 / norm2
    if p < min_probability or p == 0.0:
        raise DegenerateOutcome(p)
    ts = list(out.tensors)
    ts[0] = ts[0] / np.linalg.norm(ts[0])
    return out._replace(ts, 0), float(p)


def marginal_probabilities(s: MPS, sites: Sequence[int]) -> dict[tuple, float]:
    """Born probabilities of every bitstring on ``sites`` (ascending site order)."""
    sites = sorted(int(k) for k in sites)
    measured = set(sites)
    envs = {(): np.ones((1, 1), dtype=np.complex128)}
    for q, a in enumerate(s.tensors):
        if q in measured:
            new = {}
            for key, e in envs.items():
                for b in (0, 1):
                    ab = a[:, b:b + 1, :]
                    new[key + (b,)] = _transfer_left(e, ab, ab)
            envs = new
        else:
            envs = {key: _transfer_left(e, a, a) for key, e in envs.items()}
    probs = {key: float(e[0, 0].real) for key, e in envs.items()}
    total = sum(probs.values())
    return {key: max(v, 0.0) / total for key, v in probs.items()}


def sample_outcome(s: MPS, sites: Sequence[int], rng_seed=None) -> tuple[tuple[int, ...], float]:
    """Draw measurement bits for ``sites`` from the Born distribution.

    Sites are sampled one after another from their conditional marginals,
    with the orthogonality center moved onto each site in turn.
    """
    rng = np.random.default_rng(rng_seed)
    order = sorted(int(k) for k in sites)
    if not order:
        return (), 1.0
    st = s.normalize()
    ts = list(st.tensors)
    center = st.center
    bits = {}
    prob = 1.0
    for k in order:
        while center < k:
            ts[center], ts[center + 1] = _qr_right(ts[center], ts[center + 1])
            center += 1
        while center > k:
            ts[center - 1], ts[center] = _qr_left(ts[center - 1], ts[center])
            center -= 1
        t = ts[k]
        w = np.array([np.vdot(t[:, b, :], t[:, b, :]).real for b in (0, 1)])
        w = w / w.sum()
        b = int(rng.random() >= w[0])
        prob *= w[b]
        new = np.zeros_like(t)
        new[:, b, :] = t[:, b, :] / np.sqrt(w[b] * np.vdot(t, t).real)
        ts[k] = new
        bits[k] = b
    return tuple(bits[int(k)] for k in sites), float(prob)


def entanglement_entropy(s: MPS, cut: int) -> float:
    """Von Neumann entropy (bits) across the bond between sites ``cut-1`` and ``cut``."""
    lam2 = s.schmidt_values(cut) ** 2
    lam2 = lam2[lam2 > 1e-300]
    return float(max(0.0, -np.sum(lam2 * np.log2(lam2))))


# ---- constructors -------------------------------------------------------------

def make_ghz(n: int) -> MPS:
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return MPS.product([[2**-0.5, 2**-0.5]])
    first = np.zeros((1, 2, 2))
    mid = np.zeros((2, 2, 2))
    last = np.zeros((2, 2, 1))
    for b in (0, 1):
        first[0, b, b] = 2**-0.5
        mid[b, b, b] = 1.0
        last[b, b, 0] = 1.0
    return MPS((first,) + (mid,) * (n - 2) + (last,)).canonicalize(0)


def basis_bits(index: int, n: int) -> list[int]:
    return [(index >> (n - 1 - q)) & 1 for q in range(n)]


def make_subset_state(n: int, k: int | None = None, seed=None,
                      indices: Sequence[int] | None = None) -> MPS:
    """Equal superposition of ``k`` distinct computational basis states.

    Either pass ``indices`` explicitly or ``k`` and a ``seed``; seeded
    indices are drawn uniformly without replacement.
    """
    if indices is None:
        if k is None:
            raise ValueError("give k or indices")
        if k > 2**n or k < 1:
            raise ValueError(f"k={k} outside 1..2^{n}")
        rng = np.random.default_rng(seed)
        indices = rng.choice(2**n, size=k, replace=False)
    indices = [int(i) for i in indices]
    if len(set(indices)) != len(indices):
        raise ValueError("subset indices must be distinct")
    if k is not None and len(indices) != k:
        raise ValueError("len(indices) != k")
    if any(not 0 <= i < 2**n for i in indices):
        raise ValueError("index out of range")
    k = len(indices)
    bits = np.array([basis_bits(i, n) for i in indices])  # (k, n)
    if n == 1:
        v = np.zeros(2)
        v[bits[:, 0]] = 1.0
        return MPS.product([v / np.linalg.norm(v)])
    tensors = []
    for q in range(n):
        l = 1 if q == 0 else k
        r = 1 if q == n - 1 else k
        t = np.zeros((l, 2, r))
        for j in range(k):
            t[0 if q == 0 else j, bits[j, q], 0 if q == n - 1 else j] = 1.0
        tensors.append(t)
    tensors[0] = tensors[0] / np.sqrt(k)
    return MPS(tuple(tensors)).compress(max_bond=k, cutoff=1e-14).normalize()


def make_random_mps(n: int, chi: int, seed=None) -> MPS:
    """Seeded random MPS: i.i.d. complex Gaussian sites, canonicalized and normalized."""
    if chi < 1:
        raise ValueError("chi must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [1] + [min(chi, 2**i, 2 ** (n - i)) for i in range(1, n)] + [1]
    ts = []
    for q in range(n):
        shape = (dims[q], 2, dims[q + 1])
        ts.append(rng.normal(size=shape) + 1j * rng.normal(size=shape))
    return MPS(tuple(ts)).canonicalize(0).normalize()


# ---- MPO / DMRG ---------------------------------------------------------------

_I2 = np.eye(2)
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.diag([1.0, -1.0])


@dataclass(frozen=True)
class MPO:
    """Operator as ``(left, out, in, right)`` site tensors."""

    tensors: tuple

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=np.complex128) for t in self.tensors)
        if ts[0].shape[0] != 1 or ts[-1].shape[3] != 1:
            raise ShapeError("boundary bonds must have extent 1")
        for a, b in zip(ts, ts[1:]):
            if a.shape[3] != b.shape[0]:
                raise ShapeError("MPO bond mismatch")
        object.__setattr__(self, "tensors", ts)

    @property
    def n(self) -> int:
        return len(self.tensors)

    def to_dense(self) -> np.ndarray:
        out = self.tensors[0][0]  # (o, i, r)
        dim = 2
        for w in self.tensors[1:]:
            out = np.einsum("abr,rcdR->acbdR", out, w).reshape(dim * 2, dim * 2, -1)
            dim *= 2
        return out[:, :, 0]


def tfi_mpo(n: int, g: float, J: float = 1.0) -> MPO:
    """MPO of ``H = -J (sum Z_i Z_{i+1} + g sum X_i)`` on an open chain."""
    if n < 2:
        raise ValueError("n must be >= 2")
    w = np.zeros((3, 2, 2, 3))
    w[0, :, :, 0] = _I2
    w[1, :, :, 0] = _Z
    w[2, :, :, 0] = -J * g * _X
    w[2, :, :, 1] = -J * _Z
    w[2, :, :, 2] = _I2
    first = w[2:3]
    last = w[:, :, :, 0:1]
    return MPO((first,) + (w,) * (n - 2) + (last,))


def mpo_expectation(h: MPO, s: MPS) -> float:
    env = np.ones((1, 1, 1), dtype=np.complex128)
    for w, a in zip(h.tensors, s.tensors):
        env = np.einsum("awb,bjr,wijR,aiq->qRr", env, a, w, a.conj(), optimize=True)
    return float((env[0, 0, 0] / overlap(s, s)).real)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, energies: list[float], state: MPS):
        super().__init__(message)
        self.energies = energies
        self.state = state


@dataclass
class DMRGResult:
    state: MPS
    energies: list[float] = field(default_factory=list)
    converged: bool = False


def dmrg(h: MPO, max_bond: int = 64, cutoff: float = 1e-12, max_sweeps: int = 30,
         tol: float = 1e-10, seed=0, init: MPS | None = None) -> DMRGResult:
    """Two-site DMRG ground state search; ``energies`` holds one value per sweep."""
    from scipy.sparse.linalg import LinearOperator, eigsh

    n = h.n
    s = (init if init is not None else make_random_mps(n, min(4, max_bond), seed)).canonicalize(0)
    ts = list(s.tensors)
    ws = h.tensors
    left = [None] * (n + 1)
    right = [None] * (n + 1)
    left[0] = np.ones((1, 1, 1), dtype=np.complex128)
    right[n] = np.ones((1, 1, 1), dtype=np.complex128)

    def grow_right(i):  # environment of sites i.. from that of i+1..
        t = np.tensordot(ts[i], right[i + 1], axes=(2, 2))  # b j q R
        t = np.tensordot(t, ws[i], axes=([1, 3], [2, 3]))  # b q w i
        t = np.tensordot(t, ts[i].conj(), axes=([3, 1], [1, 2]))  # b w a
        right[i] = t.transpose(2, 1, 0)

    def grow_left(i):
        t = np.tensordot(left[i], ts[i], axes=(2, 0))  # a w j r
        t = np.tensordot(t, ws[i], axes=([1, 2], [0, 2]))  # a r i R
        t = np.tensordot(t, ts[i].conj(), axes=([0, 2], [0, 1]))  # r R q
        left[i + 1] = t.transpose(2, 1, 0)

    for i in range(n - 1, 1, -1):
        grow_right(i)

    def solve(i):
        L, R = left[i], right[i + 2]
        W1, W2 = ws[i], ws[i + 1]
        shape = (ts[i].shape[0], 2, 2, ts[i + 1].shape[2])
        dim = int(np.prod(shape))

        def matvec(v):
            v = v.reshape(shape)
            t = np.tensordot(L, v, axes=(2, 0))  # a w j k r
            t = np.tensordot(t, W1, axes=([1, 2], [0, 2]))  # a k r i v
            t = np.tensordot(t, W2, axes=([1, 4], [2, 0]))  # a r i l R
            t = np.tensordot(t, R, axes=([1, 4], [2, 1]))  # a i l q
            return t.reshape(-1)

        theta0 = np.tensordot(ts[i], ts[i + 1], axes=(2, 0)).reshape(-1)
        if dim <= 256:
            hm = np.column_stack([matvec(e) for e in np.eye(dim)])
            hm = 0.5 * (hm + hm.conj().T)
            vals, vecs = np.linalg.eigh(hm)
            return vals[0], vecs[:, 0].reshape(shape)
        op = LinearOperator((dim, dim), matvec=matvec, dtype=np.complex128)
        vals, vecs = eigsh(op, k=1, which="SA", v0=theta0, tol=1e-13, ncv=min(dim, 20))
        return vals[0], vecs[:, 0].reshape(shape)

    energies: list[float] = []
    energy = np.inf
    for _ in range(max_sweeps):
        for i in range(n - 1):
            energy, theta = solve(i)
            l, r = theta.shape[0], theta.shape[3]
            u, sv, vh, _ = _truncated_svd(theta.reshape(2 * l, 2 * r), max_bond, cutoff)
            sv = sv / np.linalg.norm(sv)
            ts[i] = u.reshape(l, 2, -1)
            ts[i + 1] = (sv[:, None] * vh).reshape(-1, 2, r)
            grow_left(i)
        for i in range(n - 2, -1, -1):
            energy, theta = solve(i)
            l, r = theta.shape[0], theta.shape[3]
            u, sv, vh, _ = _truncated_svd(theta.reshape(2 * l, 2 * r), max_bond, cutoff)
            sv = sv / np.linalg.norm(sv)
            ts[i] = (u * sv).reshape(l, 2, -1)
            ts[i + 1] = vh.reshape(-1, 2, r)
            grow_right(i + 1)
        energies.append(float(energy))
        if len(energies) > 1 and abs(energies[-2] - energies[-1]) < tol:
            return DMRGResult(MPS(tuple(ts), 0, max_bond, cutoff).normalize(), energies, True)
    return DMRGResult(MPS(tuple(ts), 0, max_bond, cutoff).normalize(), energies, False)


def tfi_ground_state(n: int, g: float = 1.0, max_bond: int = 64, cutoff: float = 1e-12,
                     max_sweeps: int = 30, seed=0) -> MPS:
    """Ground state of the open transverse-field Ising chain (J = 1)."""
    res = dmrg(tfi_mpo(n, g), max_bond=max_bond, cutoff=cutoff, max_sweeps=max_sweeps, seed=seed)
    if not res.converged:
        raise ConvergenceError(f"DMRG not converged after {max_sweeps} sweeps", res.energies,
                               res.state)
    return res.state.with_limits(DEFAULT_MAX_BOND, DEFAULT_CUTOFF)
