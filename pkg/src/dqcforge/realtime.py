"""Real-time decoding of a single measurement outcome.

The device side runs the pre-measurement circuit and reports one Born-sampled
outcome.  The classical side then optimizes the adaptive gates for that
outcome alone by sweeping over them left to right and replacing each by the
polar factor of its environment.

Starting from identity gates, a Pauli correction that flips two or more
qubits leaves every single-site environment exactly zero, so no sweep could
move.  When the identity start has (numerically) zero overlap, the gates are
restarted before the first sweep.  The default ``"neutral"`` restart puts
``Ry(pi/2)`` on every gate except the second, which stays the identity.  An
equal-weight rotation does not prefer either value of its qubit, so the
not-yet-updated gates carry no bias between corrections that differ by a
symmetry of the target, while the identity on the second gate fixes one of
them for the first update.  The ``"random"`` restart draws real ``Ry``
angles instead.  Real gates keep all environments real for real states, so
the optimum is reached on real orthogonal gates, i.e. on Pauli operators up
to sign.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .circuit import DQCAnsatz, Gate, adaptive_layout
from .mps import MPS, make_ghz, overlap, project, sample_outcome
from .tensor import polar_matrix

DEAD_START = 1e-8


class DeviceShot(NamedTuple):
    m: tuple
    post_state: MPS
    p: float


def simulate_device(a: DQCAnsatz, seed=None) -> DeviceShot:
    """Run the pre-circuit, Born-sample the ancillae, return ``(m, post_state, p)``."""
    psi = a.pre_circuit.apply(MPS.zeros(a.n_wires))
    if a.r == 0:
        return DeviceShot((), psi.normalize(), 1.0)
    m, _ = sample_outcome(psi, a.ancilla_positions, seed)
    post, p = project(psi, a.ancilla_positions, m, min_probability=0.0)
    return DeviceShot(tuple(m), post, p)


def _ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


@dataclass
class DecodingSession:
    post_state: MPS
    target: MPS
    adaptive_gates: list = field(default_factory=list)
    sweep_trace: list = field(default_factory=list)
    update_trace: list = field(default_factory=list)
    restarted: bool = False
    converged: bool = False

    def __post_init__(self):
        if self.post_state.n != self.target.n:
            raise ValueError("post state and target differ in length")
        if not self.adaptive_gates:
            self.adaptive_gates = [Gate(np.eye(2), (q,), f"V{q}") for q in range(self.target.n)]

    @classmethod
    def with_layout(cls, post_state: MPS, target: MPS, depth_post: int = 0) -> DecodingSession:
        """Identity gates: one per wire for ``depth_post=0``, else brickwork plus idle 1q gates."""
        n = target.n
        if depth_post == 0:
            sites = [(q,) for q in range(n)]
        else:
            sites = adaptive_layout(n, depth_post)
        gates = [Gate(np.eye(2 ** len(s)), s, f"V{k}") for k, s in enumerate(sites)]
        return cls(post_state, target, gates)

    @property
    def single_site(self) -> bool:
        return all(len(g.sites) == 1 for g in self.adaptive_gates) and \
            [g.sites[0] for g in self.adaptive_gates] == list(range(self.target.n))

    def output_state(self) -> MPS:
        return decoded_state(self)

    def current_overlap(self) -> float:
        return abs(overlap(self.target, self.output_state()))


# ---- single-site sweeps -------------------------------------------------------------

def _site_arrays(s: MPS) -> list[np.ndarray]:
    return [np.asarray(t) for t in s.tensors]


def _right_envs(bra: list, ket: list, us: list) -> list:
    """``R[q]``: contraction of sites ``q..n-1`` with gates, indexed ``(bra, ket)``."""
    n = len(ket)
    envs = [None] * (n + 1)
    envs[n] = np.ones((1, 1), dtype=np.complex128)
    for q in range(n - 1, -1, -1):
        # gket[a, s', b] = sum_s U[s', s] ket[a, s, b]
        gket = np.einsum("ts,asb->atb", us[q], ket[q])
        envs[q] = np.einsum("ctd,atb,db->ca", bra[q].conj(), gket, envs[q + 1])
    return envs


def _single_site_sweep(bra: list, ket: list, us: list, trace: list) -> complex:
    rights = _right_envs(bra, ket, us)
    left = np.ones((1, 1), dtype=np.complex128)
    o = 0j
    for q in range(len(ket)):
        # F[s, s'] with overlap = Tr(F U)
        f = np.einsum("ca,asb,ctd,db->st", left, ket[q], bra[q].conj(), rights[q + 1])
        us[q] = polar_matrix(f)
        o = np.trace(f @ us[q])
        trace.append(abs(o))
        gket = np.einsum("ts,asb->atb", us[q], ket[q])
        left = np.einsum("ca,ctd,atb->db", left, bra[q].conj(), gket)
    return o


def _single_site_overlap(bra: list, ket: list, us: list) -> complex:
    return complex(_right_envs(bra, ket, us)[0][0, 0])


def _generic_sweep(session: DecodingSession, trace: list) -> complex:
    from .backends import MPSBackend as B
    gates = session.adaptive_gates
    K = len(gates)
    chain = [None] * K
    b = session.target
    chain[K - 1] = b
    for k in range(K - 1, 0, -1):
        b = B.apply(b, gates[k].unitary.conj().T, gates[k].sites)
        chain[k - 1] = b
    ket = session.post_state
    o = 0j
    for k in range(K):
        f = B.env(chain[k], ket, gates[k].sites)
        u = polar_matrix(f)
        gates[k] = gates[k].with_unitary(u)
        o = np.trace(f @ u)
        trace.append(abs(o))
        ket = B.apply(ket, u, gates[k].sites)
    return o


def _generic_overlap(session: DecodingSession) -> complex:
    from .backends import MPSBackend as B
    ket = session.post_state
    for g in session.adaptive_gates:
        ket = B.apply(ket, g.unitary, g.sites)
    return B.overlap(session.target, ket)


RESTARTS = ("neutral", "random", "none")


def restart_gates(gates: list, kind: str = "neutral", seed=0) -> list:
    """Replacement starting gates for a dead (zero-overlap) start."""
    if kind not in RESTARTS or kind == "none":
        raise ValueError(f"unknown restart {kind!r}")
    rng = np.random.default_rng(seed)
    out = []
    for k, g in enumerate(gates):
        if kind == "neutral":
            u1 = [np.eye(2) if k == 1 else _ry(math.pi / 2)] * len(g.sites)
        else:
            u1 = [_ry(rng.uniform(0, 2 * math.pi)) for _ in g.sites]
        u = u1[0]
        for extra in u1[1:]:
            u = np.kron(u, extra)
        out.append(g.with_unitary(np.asarray(u, dtype=np.complex128)))
    return out


def decode(session: DecodingSession, max_sweeps: int = 10, tol: float = 1e-9,
           restart: str = "neutral", seed=0) -> DecodingSession:
    """Sweep the adaptive gates until ``overlap >= 1 - tol`` or ``max_sweeps``.

    ``sweep_trace[0]`` is the overlap of the starting gates and
    ``sweep_trace[s]`` the overlap after sweep ``s``.  If the start has
    overlap below ``1e-8`` and ``restart`` is not ``"none"``, the gates are
    replaced by :func:`restart_gates` first (``seed`` feeds the random kind).
    """
    if restart not in RESTARTS:
        raise ValueError(f"unknown restart {restart!r}")
    single = session.single_site
    bra = _site_arrays(session.target)
    ket = _site_arrays(session.post_state)

    def current() -> float:
        if single:
            return abs(_single_site_overlap(bra, ket, [g.unitary for g in session.adaptive_gates]))
        return abs(_generic_overlap(session))

    o = current()
    session.sweep_trace = [o]
    session.update_trace = []
    if o >= 1 - tol:
        session.converged = True
        return session
    if o < DEAD_START and restart != "none":
        session.adaptive_gates = restart_gates(session.adaptive_gates, restart, seed)
        session.restarted = True
    for _ in range(max_sweeps):
        if single:
            us = [g.unitary for g in session.adaptive_gates]
            o = _single_site_sweep(bra, ket, us, session.update_trace)
            session.adaptive_gates = [g.with_unitary(u) for g, u in zip(session.adaptive_gates, us)]
        else:
            o = _generic_sweep(session, session.update_trace)
        session.sweep_trace.append(abs(o))
        if abs(o) >= 1 - tol:
            session.converged = True
            break
    return session


def decoded_state(session: DecodingSession) -> MPS:
    from .mps import apply_gate
    s = session.post_state
    for g in session.adaptive_gates:
        s = apply_gate(s, g.unitary, g.sites, check=False)
    return s


# ---- protocol -----------------------------------------------------------------------

@dataclass
class RealtimeConfig:
    max_sweeps: int = 10
    tol: float = 1e-9
    depth_post: int = 0
    restart: str = "neutral"


@dataclass
class SessionReport:
    n: int
    seed: int | None
    outcome: tuple
    probability: float
    sweep_overlaps: list
    fidelity: float
    decode_ms: float
    sweeps: int
    converged: bool
    restarted: bool
    session: DecodingSession | None = None

    def to_text(self, with_timing: bool = True) -> str:
        """``key: value`` lines; ``with_timing=False`` drops the wall-clock latency."""
        bits = "".join(map(str, self.outcome))
        lines = [
            f"n: {self.n}",
            f"seed: {self.seed}",
            f"outcome: {bits}",
            f"probability: {self.probability:.17g}",
            "sweep_overlaps: " + " ".join(f"{x:.17g}" for x in self.sweep_overlaps),
            f"sweeps: {self.sweeps}",
            f"converged: {str(self.converged).lower()}",
            f"restarted: {str(self.restarted).lower()}",
            f"fidelity: {self.fidelity:.17g}",
        ]
        if with_timing:
            lines.append(f"decode_ms: {self.decode_ms:.3f}")
        return "\n".join(lines) + "\n"


def run_protocol(n: int, seed=None, config: RealtimeConfig | None = None,
                 ansatz: DQCAnsatz | None = None, target: MPS | None = None) -> SessionReport:
    """GHZ-patch pre-circuit, one simulated shot, then classical decoding.

    The reported fidelity is recomputed from the decoded state, and the
    latency covers the decode step only.
    """
    from .nn import ghz_patch_precircuit

    config = config or RealtimeConfig()
    a = ansatz if ansatz is not None else ghz_patch_precircuit(n)
    target = target if target is not None else make_ghz(n)
    shot = simulate_device(a, seed)
    session = DecodingSession.with_layout(shot.post_state, target, config.depth_post)
    t0 = time.perf_counter()
    decode(session, config.max_sweeps, config.tol, config.restart, seed)
    ms = 1e3 * (time.perf_counter() - t0)
    fid = abs(overlap(target, decoded_state(session))) ** 2
    return SessionReport(n, seed, shot.m, shot.p, list(session.sweep_trace), float(fid), ms,
                         len(session.sweep_trace) - 1, session.converged, session.restarted,
                         session)


def nearest_pauli(u: np.ndarray) -> tuple[str, float]:
    """Closest Pauli letter to a 2x2 unitary up to phase, with the max entrywise deviation."""
    from .stabilizer import _MATS

    best = None
    for letter, p in _MATS.items():
        ov = np.trace(p.conj().T @ u) / 2
        if abs(ov) < 1e-12:
            continue
        phase = ov / abs(ov)
        dev = float(np.abs(u - phase * p).max())
        if best is None or dev < best[1]:
            best = (letter, dev)
    return best


def gates_as_pauli(session: DecodingSession) -> tuple[str, float]:
    """Pauli string (without sign) read off single-site gates, and the worst deviation."""
    letters, worst = [], 0.0
    for g in session.adaptive_gates:
        if len(g.sites) != 1:
            raise ValueError("only single-site gate sets map to a Pauli string")
        letter, dev = nearest_pauli(g.unitary)
        letters.append(letter)
        worst = max(worst, dev)
    return "".join(letters), worst


def stabilizer_correction(a: DQCAnsatz, ops: Sequence[tuple], m) -> str:
    """System-qubit part of the Pauli correction for outcome ``m`` of a Clifford pre-circuit."""
    from .stabilizer import StabTableau, multi_measurement_correction

    tab = StabTableau(a.n_wires).apply(ops)
    g = multi_measurement_correction(tab.check_matrix(), a.ancilla_positions, m)
    return str(g.restrict(a.system_wires))[1:]


def equivalent_mod_ghz(p: str, q: str) -> bool:
    """Whether two unsigned Pauli strings differ by a GHZ stabilizer (up to phase)."""
    from .stabilizer import PauliString

    prod = PauliString.parse(p) * PauliString.parse(q)
    return bool(len(set(prod.x.tolist())) == 1 and int(prod.z.sum()) % 2 == 0)
