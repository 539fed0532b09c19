"""Brickwork circuits and the dynamic-circuit ansatz.

Ancillae are extra wires spliced into the 1D chain, so an ansatz on ``n``
system qubits with ``r`` ancillae is a nearest-neighbour circuit on
``n + r`` wires.  ``ancilla_positions`` are wire indices in that extended
chain.  Outcomes are tuples of bits ordered like the ancilla wires.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .mps import MPS, DegenerateOutcome, apply_gate, project
from .tensor import DenseTensor

R_MAX_EXHAUSTIVE = 6

H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z = np.diag([1.0, -1.0]).astype(np.complex128)
I2 = np.eye(2, dtype=np.complex128)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128)
# control on the second (right) wire
CNOT_RL = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=np.complex128)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def near_identity_unitary(dim: int, rng: np.random.Generator, scale: float) -> np.ndarray:
    a = scale * (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    h = (a + a.conj().T) / 2
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w)) @ v.conj().T


@dataclass(frozen=True)
class Gate:
    """A 2x2 or 4x4 unitary (indexed ``[out, in]``) on adjacent ``sites``."""

    unitary: np.ndarray
    sites: tuple
    tag: str = ""

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=np.complex128)
        sites = tuple(int(s) for s in self.sites)
        if u.shape != (2 ** len(sites),) * 2 or len(sites) not in (1, 2):
            raise ValueError(f"unitary of shape {u.shape} does not fit sites {sites}")
        if len(sites) == 2 and sites[1] != sites[0] + 1:
            raise ValueError(f"gate sites must be adjacent, got {sites}")
        if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-10):
            raise ValueError("gate is not unitary")
        object.__setattr__(self, "unitary", u)
        object.__setattr__(self, "sites", sites)

    @property
    def tensor(self) -> DenseTensor:
        k = len(self.sites)
        labels = [f"out{s}" for s in self.sites] + [f"in{s}" for s in self.sites]
        return DenseTensor(self.unitary.reshape((2,) * (2 * k)), labels)

    def with_unitary(self, u: np.ndarray) -> Gate:
        return replace(self, unitary=u)

    def to_dict(self) -> dict:
        flat = self.unitary.reshape(-1)
        data = np.empty(2 * flat.size)
        data[0::2], data[1::2] = flat.real, flat.imag
        return {"tag": self.tag, "sites": list(self.sites), "unitary": data.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Gate:
        data = np.asarray(d["unitary"], dtype=float)
        k = len(d["sites"])
        u = (data[0::2] + 1j * data[1::2]).reshape(2**k, 2**k)
        return cls(u, tuple(d["sites"]), d.get("tag", ""))


@dataclass(frozen=True)
class StaticCircuit:
    """Layers of gates acting on pairwise disjoint sites."""

    n_qubits: int
    layers: tuple

    def __post_init__(self):
        layers = tuple(tuple(layer) for layer in self.layers)
        for layer in layers:
            used = [s for g in layer for s in g.sites]
            if len(used) != len(set(used)):
                raise ValueError("gates within a layer overlap")
            if any(not 0 <= s < self.n_qubits for s in used):
                raise ValueError("gate outside the register")
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def gates(self) -> list[Gate]:
        return [g for layer in self.layers for g in layer]

    def is_brickwork(self) -> bool:
        for ell, layer in enumerate(self.layers):
            expected = brickwork_pairs(self.n_qubits, ell)
            if [g.sites for g in layer] != expected:
                return False
        return True

    def with_gates(self, unitaries: Sequence[np.ndarray]) -> StaticCircuit:
        """Same layout, new unitaries (in ``gates`` order)."""
        it = iter(unitaries)
        layers = [[g.with_unitary(next(it)) for g in layer] for layer in self.layers]
        return StaticCircuit(self.n_qubits, layers)

    def apply(self, state: MPS) -> MPS:
        for g in self.gates:
            state = apply_gate(state, g.unitary, g.sites, check=False)
        return state

    def to_dict(self) -> dict:
        return {"format": "dqcforge-circuit", "version": 1, "n_qubits": self.n_qubits,
                "layers": [[g.to_dict() for g in layer] for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> StaticCircuit:
        if d.get("format") != "dqcforge-circuit":
            raise ValueError("not a dqcforge circuit document")
        return cls(d["n_qubits"], [[Gate.from_dict(g) for g in layer] for layer in d["layers"]])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> StaticCircuit:
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> StaticCircuit:
        return cls.from_json(Path(path).read_text())


def brickwork_pairs(n: int, layer: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(layer % 2, n - 1, 2)]


def build_brickwork(n: int, depth: int, seed=None, init: str = "haar",
                    noise: float = 0.1) -> StaticCircuit:
    """Even-odd brickwork of seeded random two-qubit gates.

    ``init="haar"`` draws Haar-random gates; ``init="identity"`` draws gates
    ``exp(-i h)`` with a small random Hermitian ``h`` of scale ``noise``.
    """
    if n < 2 or depth < 1:
        raise ValueError("need n >= 2 and depth >= 1")
    rng = np.random.default_rng(seed)
    layers = []
    for ell in range(depth):
        layer = []
        for k, sites in enumerate(brickwork_pairs(n, ell)):
            if init == "haar":
                u = haar_unitary(4, rng)
            elif init == "identity":
                u = near_identity_unitary(4, rng, noise)
            else:
                raise ValueError(f"unknown init {init!r}")
            layer.append(Gate(u, sites, f"L{ell}G{k}"))
        layers.append(layer)
    return StaticCircuit(n, layers)


def adaptive_layout(n: int, depth: int = 1) -> list[tuple[int, ...]]:
    """Gate sites of an adaptive block: brickwork plus 1q gates on idle wires."""
    sites: list[tuple[int, ...]] = []
    for ell in range(depth):
        sites.extend(brickwork_pairs(n, ell))
    covered = {s for pair in sites for s in pair}
    sites.extend((q,) for q in range(n) if q not in covered)
    return sites


@dataclass(frozen=True)
class Branch:
    """One measurement outcome: bits, probability and post-measurement state."""

    m: tuple
    p: float
    state: MPS | None

    @property
    def degenerate(self) -> bool:
        return self.state is None


@dataclass(frozen=True)
class DQCAnsatz:
    n_system: int
    ancilla_positions: tuple
    pre_circuit: StaticCircuit
    decoder: Any = None
    label: str = ""

    def __post_init__(self):
        pos = tuple(sorted(int(p) for p in self.ancilla_positions))
        object.__setattr__(self, "ancilla_positions", pos)
        if len(set(pos)) != len(pos):
            raise ValueError("duplicate ancilla positions")
        if self.pre_circuit.n_qubits != self.n_wires:
            raise ValueError(f"pre-circuit has {self.pre_circuit.n_qubits} wires, "
                             f"expected {self.n_wires}")
        if any(not 0 <= p < self.n_wires for p in pos):
            raise ValueError("ancilla position outside the chain")

    @property
    def r(self) -> int:
        return len(self.ancilla_positions)

    @property
    def n_wires(self) -> int:
        return self.n_system + len(self.ancilla_positions)

    @property
    def measured_wires(self) -> tuple:
        return self.ancilla_positions

    @property
    def system_wires(self) -> tuple:
        anc = set(self.ancilla_positions)
        return tuple(w for w in range(self.n_wires) if w not in anc)

    def outcomes(self) -> list[tuple]:
        return list(itertools.product((0, 1), repeat=self.r))

    def with_circuit(self, circuit: StaticCircuit) -> DQCAnsatz:
        return replace(self, pre_circuit=circuit)

    def with_decoder(self, decoder) -> DQCAnsatz:
        return replace(self, decoder=decoder)


def positions_from_gaps(gaps: Sequence[int]) -> tuple:
    """Wire indices for ancillae inserted before system qubit ``g`` of each gap."""
    return tuple(g + i for i, g in enumerate(sorted(gaps)))


def gaps_from_positions(positions: Sequence[int]) -> tuple:
    return tuple(p - i for i, p in enumerate(sorted(positions)))


def make_ansatz(n: int, depth: int, ancilla_positions: Sequence[int] = (), seed=None,
                init: str = "haar", decoder=None) -> DQCAnsatz:
    pos = tuple(sorted(ancilla_positions))
    circ = build_brickwork(n + len(pos), depth, seed=seed, init=init)
    return DQCAnsatz(n, pos, circ, decoder)


def run_pre_measurement(a: DQCAnsatz) -> MPS:
    """Pre-circuit applied to ``|0...0>`` on all ``n + r`` wires."""
    return a.pre_circuit.apply(MPS.zeros(a.n_wires))


def enumerate_outcomes(a: DQCAnsatz, r_max: int = R_MAX_EXHAUSTIVE,
                       state: MPS | None = None) -> list[Branch]:
    """All ``2^r`` branches; zero-probability ones carry ``state=None``."""
    if a.r > r_max:
        raise ValueError(f"r={a.r} exceeds the exhaustive cap {r_max}; use sampling instead")
    psi = run_pre_measurement(a) if state is None else state
    if a.r == 0:
        return [Branch((), 1.0, psi.normalize())]
    out = []
    for m in a.outcomes():
        try:
            post, p = project(psi, a.ancilla_positions, m)
            out.append(Branch(m, p, post))
        except DegenerateOutcome as exc:
            out.append(Branch(m, max(exc.probability, 0.0), None))
    return out


def append_idle_wires(c: StaticCircuit, k: int = 1) -> StaticCircuit:
    """Extend a brickwork circuit by ``k`` wires at the right end.

    Existing gates keep their sites; brickwork slots that only exist on the
    longer chain are filled with identities, so the new wires stay in
    ``|0>`` and the state on the old wires is unchanged.
    """
    n_new = c.n_qubits + k
    layers = []
    for ell, layer in enumerate(c.layers):
        old = {g.sites: g for g in layer}
        new_layer = []
        for j, sites in enumerate(brickwork_pairs(n_new, ell)):
            new_layer.append(old.get(sites, Gate(np.eye(4), sites, f"L{ell}G{j}")))
        layers.append(new_layer)
    return StaticCircuit(n_new, layers)
