"""Training dynamic circuits with a look-up-table decoder.

Every gate is updated by the polar factor of its environment tensor.  For
a pre-measurement gate the environment is the probability-weighted sum of
the per-outcome environments, with the outcome probabilities held fixed
during the update and recomputed right after it.  Adaptive gates of each
outcome are optimised independently against that outcome's overlap.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .backends import pick_backend
from .circuit import (DQCAnsatz, Gate, StaticCircuit, adaptive_layout, append_idle_wires,
                      haar_unitary, make_ansatz, positions_from_gaps, gaps_from_positions)
from .mps import (DEGENERATE_P, MPS, DegenerateOutcome, apply_gate, gate_environment,
                  marginal_probabilities, overlap, project)
from .tensor import DenseTensor, polar_matrix

log = logging.getLogger(__name__)


class LookupTableDecoder:
    """Adaptive gates tabulated per measurement outcome.

    ``sites`` is the shared gate layout on the ``n`` unmeasured qubits;
    ``table[m]`` lists one unitary per layout entry, applied in order.
    """

    def __init__(self, n: int, sites: Sequence[tuple], table: dict):
        self.n = n
        self.sites = [tuple(s) for s in sites]
        self.table = {tuple(m): [np.asarray(u, dtype=np.complex128) for u in us]
                      for m, us in table.items()}
        for m, us in self.table.items():
            if len(us) != len(self.sites):
                raise ValueError(f"outcome {m}: {len(us)} gates for {len(self.sites)} slots")

    @classmethod
    def identity(cls, n: int, outcomes, depth_post: int = 1) -> LookupTableDecoder:
        sites = adaptive_layout(n, depth_post)
        return cls(n, sites, {m: [np.eye(2 ** len(s)) for s in sites] for m in outcomes})

    @classmethod
    def random(cls, n: int, outcomes, depth_post: int = 1, seed=None) -> LookupTableDecoder:
        rng = np.random.default_rng(seed)
        sites = adaptive_layout(n, depth_post)
        return cls(n, sites, {m: [haar_unitary(2 ** len(s), rng) for s in sites]
                              for m in outcomes})

    def gates(self, m) -> list[Gate]:
        return [Gate(u, s, f"V{k}") for k, (u, s) in enumerate(zip(self.table[tuple(m)],
                                                                    self.sites))]

    def apply(self, m, state: MPS) -> MPS:
        for u, s in zip(self.table[tuple(m)], self.sites):
            state = apply_gate(state, u, s, check=False)
        return state

    def copy(self) -> LookupTableDecoder:
        return LookupTableDecoder(self.n, self.sites, {m: list(us) for m, us in self.table.items()})

    def to_dict(self) -> dict:
        return {"kind": "lookup", "n": self.n, "sites": [list(s) for s in self.sites],
                "table": {"".join(map(str, m)): [Gate(u, s).to_dict()["unitary"]
                                                  for u, s in zip(us, self.sites)]
                          for m, us in self.table.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> LookupTableDecoder:
        sites = [tuple(s) for s in d["sites"]]
        table = {}
        for key, flats in d["table"].items():
            m = tuple(int(c) for c in key)
            us = []
            for flat, s in zip(flats, sites):
                data = np.asarray(flat)
                us.append((data[0::2] + 1j * data[1::2]).reshape(2 ** len(s), 2 ** len(s)))
            table[m] = us
        return cls(d["n"], sites, table)


@dataclass(frozen=True)
class BranchOverlap:
    m: tuple
    p: float
    o: complex


def cost_pre(overlaps: Sequence[BranchOverlap]) -> float:
    """``1 - |sum_m p(m) o_m|``."""
    return 1.0 - abs(sum(b.p * b.o for b in overlaps))


def infidelity(overlaps: Sequence[BranchOverlap]) -> float:
    """``1 - <target| rho_prep |target>`` with ``rho_prep = sum_m p(m) |phi_m><phi_m|``."""
    return 1.0 - sum(b.p * abs(b.o) ** 2 for b in overlaps)


def sqrt_infidelity_bound(overlaps: Sequence[BranchOverlap]) -> float:
    """``1 - sum_m p(m) |o_m|``, which ``cost_pre`` never undercuts."""
    return 1.0 - sum(b.p * abs(b.o) for b in overlaps)


class DQCNetwork:
    """Mutable working copy of an ansatz plus target, used by the optimizers."""

    def __init__(self, a: DQCAnsatz, target: MPS, depth_post: int = 1, decoder_init="identity",
                 seed=None, backend: str = "mps"):
        if target.n != a.n_system:
            raise ValueError(f"target has {target.n} sites, ansatz has {a.n_system} system qubits")
        self.n = a.n_system
        self.N = a.n_wires
        self.anc = a.ancilla_positions
        self.outcomes = a.outcomes()
        self.circuit = a.pre_circuit
        self.pre_sites = [g.sites for g in a.pre_circuit.gates]
        self.U = [g.unitary for g in a.pre_circuit.gates]
        dec = a.decoder
        if dec is None:
            if decoder_init == "identity":
                dec = LookupTableDecoder.identity(self.n, self.outcomes, depth_post)
            else:
                dec = LookupTableDecoder.random(self.n, self.outcomes, depth_post, seed)
        if not isinstance(dec, LookupTableDecoder):
            raise TypeError("environment training needs a LookupTableDecoder")
        self.post_sites = dec.sites
        self.V = {m: list(dec.table[m]) for m in self.outcomes}
        self.B = pick_backend(backend, self.N)
        self.target = self.B.from_mps(target.normalize())
        self.label = a.label

    # ---- building blocks --------------------------------------------------
    def ansatz(self) -> DQCAnsatz:
        dec = LookupTableDecoder(self.n, self.post_sites, {m: list(v) for m, v in self.V.items()})
        return DQCAnsatz(self.n, self.anc, self.circuit.with_gates(self.U), dec, self.label)

    def forward(self, state: MPS | None = None, start: int = 0) -> MPS:
        psi = self.B.zeros(self.N) if state is None else state
        for j in range(start, len(self.U)):
            psi = self.B.apply(psi, self.U[j], self.pre_sites[j])
        return psi

    def probabilities(self, psi: MPS) -> dict:
        if not self.anc:
            return {(): 1.0}
        return self.B.probabilities(psi, self.anc)

    def branches(self, psi: MPS) -> dict:
        """``m -> (p, normalized post-measurement state or None)``."""
        if not self.anc:
            return {(): (1.0, self.B.normalize(psi))}
        out = {}
        for m in self.outcomes:
            try:
                post, p = self.B.project(psi, self.anc, m)
                out[m] = (p, post)
            except DegenerateOutcome as exc:
                out[m] = (exc.probability, None)
        return out

    def adapt(self, m, state: MPS) -> MPS:
        for u, s in zip(self.V[m], self.post_sites):
            state = self.B.apply(state, u, s)
        return state

    def pulled_back_target(self, m) -> MPS:
        """``V_m^dagger |target>`` on the system qubits."""
        b = self.target
        for u, s in zip(reversed(self.V[m]), reversed(self.post_sites)):
            b = self.B.apply(b, u.conj().T, s)
        return b

    def splice(self, sys_state, m):
        """Insert ancilla wires in the basis state ``|m>`` into a system-qubit state."""
        if not self.anc:
            return sys_state
        return self.B.splice(sys_state, self.anc, m, self.N)

    def overlaps(self, psi: MPS | None = None) -> list[BranchOverlap]:
        psi = self.forward() if psi is None else psi
        out = []
        for m, (p, post) in self.branches(psi).items():
            if post is None:
                out.append(BranchOverlap(m, p, 0j))
            else:
                out.append(BranchOverlap(m, p, self.B.overlap(self.target, self.adapt(m, post))))
        return out

    def purity(self, psi: MPS | None = None) -> float:
        psi = self.forward() if psi is None else psi
        live = [(p, self.adapt(m, post)) for m, (p, post) in self.branches(psi).items()
                if post is not None]
        return _purity(live, self.B)

    def pre_environments(self, j: int, psi: MPS | None = None, weights: dict | None = None):
        """Per-outcome environments ``E_{j;m}`` of the unnormalized amplitudes.

        ``Tr(E_{j;m} U_j) = <target| V_m <m| U ... |0>``, i.e. ``sqrt(p) o_m``.
        """
        ket = self.B.zeros(self.N)
        for i in range(j):
            ket = self.B.apply(ket, self.U[i], self.pre_sites[i])
        envs = {}
        for m in self.outcomes:
            bra = self.splice(self.pulled_back_target(m), m)
            for i in range(len(self.U) - 1, j, -1):
                bra = self.B.apply(bra, self.U[i].conj().T, self.pre_sites[i])
            envs[m] = self.B.env(bra, ket, self.pre_sites[j])
        return envs

    # ---- sweeps -----------------------------------------------------------
    def bra_chains(self) -> dict:
        """``chains[m][j] = U_{>j}^dagger (V_m^dagger |target> (x) |m>)``."""
        J = len(self.U)
        chains = {}
        for m in self.outcomes:
            b = self.splice(self.pulled_back_target(m), m)
            chain = [None] * J
            chain[J - 1] = b
            for j in range(J - 1, 0, -1):
                b = self.B.apply(b, self.U[j].conj().T, self.pre_sites[j])
                chain[j - 1] = b
            chains[m] = chain
        return chains

    def sweep_pre(self, on_update: Callable | None = None) -> MPS:
        """Update every pre-measurement gate once; returns the final output state."""
        J = len(self.U)
        if J == 0:
            return self.forward()
        chains = self.bra_chains()
        probs = self.probabilities(self.forward())
        ket = self.B.zeros(self.N)
        psi = None
        for j in range(J):
            env = np.zeros((2 ** len(self.pre_sites[j]),) * 2, dtype=np.complex128)
            for m in self.outcomes:
                p = probs[m]
                if p < DEGENERATE_P:
                    continue
                env += np.sqrt(p) * self.B.env(chains[m][j], ket, self.pre_sites[j])
            self.U[j] = polar_matrix(env)
            ket = self.B.apply(ket, self.U[j], self.pre_sites[j])
            psi = self.forward(ket, j + 1)
            probs = self.probabilities(psi)
            if on_update is not None:
                on_update(j, psi)
        return psi

    def sweep_post(self, psi: MPS, branch_costs: list | None = None) -> None:
        """Optimise every adaptive gate of every live outcome once."""
        for m, (p, post) in self.branches(psi).items():
            if post is None:
                continue
            self.sweep_branch(m, post, branch_costs)

    def sweep_branch(self, m, post: MPS, costs: list | None = None) -> float:
        K = len(self.V[m])
        if K == 0:
            return abs(self.B.overlap(self.target, post))
        chain = [None] * K
        b = self.target
        chain[K - 1] = b
        for k in range(K - 1, 0, -1):
            b = self.B.apply(b, self.V[m][k].conj().T, self.post_sites[k])
            chain[k - 1] = b
        ket = post
        trace = []
        for k in range(K):
            f = self.B.env(chain[k], ket, self.post_sites[k])
            trace.append(1.0 - abs(np.trace(f @ self.V[m][k])))
            self.V[m][k] = polar_matrix(f)
            trace.append(1.0 - abs(np.trace(f @ self.V[m][k])))
            ket = self.B.apply(ket, self.V[m][k], self.post_sites[k])
        if costs is not None:
            costs.append((m, trace))
        return 1.0 - trace[-1]


def _purity(live: list, backend=None) -> float:
    ov = backend.overlap if backend is not None else overlap
    total = 0.0
    for a, (pa, sa) in enumerate(live):
        total += pa * pa * abs(ov(sa, sa)) ** 2
        for pb, sb in live[a + 1:]:
            total += 2 * pa * pb * abs(ov(sa, sb)) ** 2
    return float(total)


# ---- public operations ----------------------------------------------------------

def _network(a: DQCAnsatz, target: MPS, depth_post: int = 1) -> DQCNetwork:
    return DQCNetwork(a, target, depth_post=depth_post)


def branch_overlaps(a: DQCAnsatz, target: MPS) -> list[BranchOverlap]:
    """``o_m = <target| V_m |post_m>`` for every outcome; degenerate ones carry 0."""
    return _network(a, target).overlaps()


def purity(a: DQCAnsatz, target: MPS | None = None) -> float:
    """``Tr(rho_prep^2)`` over the adaptive-circuit outputs of all outcomes.

    ``target`` is only used to size the network; purity does not depend on it.
    """
    if target is None:
        target = MPS.zeros(a.n_system)
    return _network(a, target).purity()


def _env_tensor(e: np.ndarray, sites: Sequence[int]) -> DenseTensor:
    k = len(sites)
    labels = [f"in{s}" for s in sites] + [f"out{s}" for s in sites]
    return DenseTensor(e.reshape((2,) * (2 * k)), labels)


def environment_pre(a: DQCAnsatz, target: MPS, j: int) -> DenseTensor:
    """``sum_m sqrt(p(m)) E_{j;m}`` so that ``Tr(env U_j) = sum_m p(m) o_m``.

    Labels ``in<s>``/``out<s>`` refer to the wires of gate ``j``.
    """
    net = _network(a, target)
    probs = net.probabilities(net.forward())
    envs = net.pre_environments(j)
    e = sum(np.sqrt(probs[m]) * envs[m] for m in net.outcomes if probs[m] >= DEGENERATE_P)
    return _env_tensor(np.asarray(e), net.pre_sites[j])


def environment_post(a: DQCAnsatz, target: MPS, m, k: int) -> DenseTensor:
    """``F_{k;m}`` with ``o_m = Tr(F V_{k;m})`` for the normalized branch ``m``."""
    net = _network(a, target)
    m = tuple(m)
    p, post = net.branches(net.forward())[m]
    if post is None:
        raise DegenerateOutcome(p)
    ket = post
    for u, s in zip(net.V[m][:k], net.post_sites[:k]):
        ket = apply_gate(ket, u, s, check=False)
    bra = net.target
    for u, s in zip(reversed(net.V[m][k + 1:]), reversed(net.post_sites[k + 1:])):
        bra = apply_gate(bra, u.conj().T, s, check=False)
    return _env_tensor(gate_environment(bra, ket, net.post_sites[k]), net.post_sites[k])


@dataclass
class TrainConfig:
    max_sweeps: int = 200
    tol: float = 1e-9
    depth_post: int = 1
    decoder_init: str = "identity"
    seed: int | None = None
    trace_updates: bool = False
    record_purity: bool = True
    backend: str = "auto"


@dataclass
class TrainReport:
    c_pre: list = field(default_factory=list)
    infidelity: list = field(default_factory=list)
    purity: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    update_purity: list = field(default_factory=list)
    branch_costs: list = field(default_factory=list)
    ansatz: DQCAnsatz | None = None
    converged: bool = False
    seed: int | None = None
    config: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def final_infidelity(self) -> float:
        return self.infidelity[-1]

    @property
    def best_infidelity(self) -> float:
        return min(self.infidelity)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sweep", "c_pre", "infidelity", "purity", "seconds"])
        for i, row in enumerate(zip(self.c_pre, self.infidelity, self.purity, self.seconds)):
            w.writerow([i, *(f"{x:.17g}" for x in row)])
        return buf.getvalue()


def _record(net: DQCNetwork, report: TrainReport, psi: MPS, elapsed: float, with_purity: bool):
    ov = net.overlaps(psi)
    report.c_pre.append(cost_pre(ov))
    report.infidelity.append(max(infidelity(ov), 0.0))
    report.purity.append(net.purity(psi) if with_purity else float("nan"))
    report.seconds.append(elapsed)


def sweep_train(a: DQCAnsatz, target: MPS, config: TrainConfig | None = None) -> TrainReport:
    """Alternate polar updates of pre-measurement and adaptive gates until converged.

    Entry 0 of each series describes the initial circuit, entry ``s`` the
    circuit after sweep ``s``.  Stops once ``|delta C_pre| < tol`` across a
    sweep or after ``max_sweeps``; non-convergence is reported, not raised.
    """
    config = config or TrainConfig()
    net = DQCNetwork(a, target, config.depth_post, config.decoder_init, config.seed,
                     config.backend)
    report = TrainReport(seed=config.seed, config=asdict(config))
    _record(net, report, net.forward(), 0.0, config.record_purity)
    for _ in range(config.max_sweeps):
        t0 = time.perf_counter()
        hook = None
        if config.trace_updates:
            hook = lambda j, psi: report.update_purity.append(net.purity(psi))  # noqa: E731
        psi = net.sweep_pre(hook)
        costs: list = []
        net.sweep_post(psi, costs)
        report.branch_costs.append(costs)
        _record(net, report, psi, time.perf_counter() - t0, config.record_purity)
        if abs(report.c_pre[-2] - report.c_pre[-1]) < config.tol:
            report.converged = True
            break
    if not report.converged:
        log.info("sweep_train stopped at max_sweeps=%d (C_pre=%.3e)", config.max_sweeps,
                 report.c_pre[-1])
    report.ansatz = net.ansatz()
    return report


def train_best_of(make: Callable[[int], DQCAnsatz], target: MPS, seeds: Sequence[int],
                  config: TrainConfig | None = None) -> TrainReport:
    """Train from several seeds and keep the lowest final infidelity."""
    config = config or TrainConfig()
    best = None
    for seed in seeds:
        cfg = TrainConfig(**{**asdict(config), "seed": seed})
        rep = sweep_train(make(seed), target, cfg)
        if best is None or rep.final_infidelity < best.final_infidelity:
            best = rep
    return best


def static_config(config: TrainConfig) -> TrainConfig:
    """``config`` for a static circuit: no ancillae, hence no adaptive layer."""
    return TrainConfig(**{**asdict(config), "depth_post": 0})


@dataclass
class GreedyStep:
    r: int
    gaps: tuple
    infidelity: float
    candidates: dict = field(default_factory=dict)


def greedy_ancilla_search(target: MPS, r_max: int, depth: int, config: TrainConfig | None = None,
                          seeds: Sequence[int] = (0,), gap_candidates: Sequence[int] | None = None):
    """Place ancillae one at a time at the gap giving the lowest trained infidelity.

    Ancilla gaps are counted in system qubits (gap ``g`` sits before system
    qubit ``g``).  The ``r = 0`` entry is a static circuit of the same
    pre-measurement depth, trained without adaptive gates.  Besides fresh
    trainings at every gap, each round also evaluates the previous best
    circuit with the new ancilla appended as an idle wire at the chain end, so
    the infidelity along the trace never increases.  Returns ``(best_report, trace)``.
    """
    config = config or TrainConfig()
    n = target.n
    if gap_candidates is None:
        gap_candidates = range(n + 1)

    def train(gaps):
        pos = positions_from_gaps(gaps)
        cfg = config if gaps else static_config(config)
        return train_best_of(lambda s: make_ansatz(n, depth, pos, seed=s), target, seeds, cfg)

    best = train(())
    trace = [GreedyStep(0, (), best.final_infidelity)]
    gaps: tuple = ()
    for r in range(1, r_max + 1):
        results = {}
        for g in gap_candidates:
            cand = tuple(sorted(gaps + (g,)))
            if cand in results:
                continue
            results[cand] = train(cand)
        warm = _append_idle_ancilla(best.ansatz)
        warm_cfg = TrainConfig(**{**asdict(config), "seed": None})
        warm_rep = sweep_train(warm, target, warm_cfg)
        warm_gaps = gaps_from_positions(warm.ancilla_positions)
        if warm_rep.best_infidelity < warm_rep.final_infidelity:
            warm_rep = _initial_only(warm, target, warm_cfg)
        choice = min(results, key=lambda c: results[c].final_infidelity)
        if warm_rep.final_infidelity < results[choice].final_infidelity:
            choice, chosen = warm_gaps, warm_rep
        else:
            chosen = results[choice]
        gaps, best = choice, chosen
        trace.append(GreedyStep(r, gaps, best.final_infidelity,
                                {c: rep.final_infidelity for c, rep in results.items()}))
    return best, trace


def _append_idle_ancilla(a: DQCAnsatz) -> DQCAnsatz:
    """Previous solution plus one idle ancilla at the end of the chain.

    The new wire stays in ``|0>``, so outcomes with its bit set are empty and
    outcomes with it clear reuse the old adaptive gates.
    """
    circ = append_idle_wires(a.pre_circuit, 1)
    pos = a.ancilla_positions + (a.n_wires,)
    old = a.decoder
    table = {}
    for m, us in old.table.items():
        table[m + (0,)] = list(us)
        table[m + (1,)] = [np.eye(u.shape[0]) for u in us]
    dec = LookupTableDecoder(old.n, old.sites, table)
    return DQCAnsatz(a.n_system, pos, circ, dec, a.label)


def _initial_only(a: DQCAnsatz, target: MPS, config: TrainConfig) -> TrainReport:
    cfg = TrainConfig(**{**asdict(config), "max_sweeps": 0})
    return sweep_train(a, target, cfg)
