"""Gradient-descent baseline over rotation-angle parameterized gates.

Two-qubit gates use a KAK-style form with 15 angles,

    U = (A1 (x) A2) exp(-i (a XX + b YY + c ZZ) / 2) (B1 (x) B2),

where each single-qubit factor is ``Rz Ry Rz``.  Single-qubit gates use
``Rz Ry Rz`` alone.  Every angle enters as ``exp(-i theta P / 2)`` for a
Pauli ``P``, so exact derivatives follow from the parameter-shift rule.
The cost is the infidelity ``1 - sum_m |<target| V_m <m| C |0>|^2``; its
dependence on a single gate is read off the cached environments, so all
shifted evaluations of one iteration cost a single contraction sweep.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .circuit import I2, DQCAnsatz, X, Y, Z
from .lut import (DQCNetwork, LookupTableDecoder, TrainConfig, TrainReport, _record)
from .mps import DEGENERATE_P, MPS

SHIFT = math.pi / 2

XX = np.kron(X, X)
YY = np.kron(Y, Y)
ZZ = np.kron(Z, Z)


def _rz(t: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def _ry(t: float) -> np.ndarray:
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def euler_unitary(theta) -> np.ndarray:
    """``Rz(t0) Ry(t1) Rz(t2)``."""
    return _rz(theta[0]) @ _ry(theta[1]) @ _rz(theta[2])


def _pauli_exp(p: np.ndarray, t: float) -> np.ndarray:
    # P squares to one, so exp(-i t P / 2) = cos(t/2) I - i sin(t/2) P
    return math.cos(t / 2) * np.eye(p.shape[0]) - 1j * math.sin(t / 2) * p


def kak_unitary(theta) -> np.ndarray:
    """Two-qubit gate from 15 angles: ``B1, B2, (xx, yy, zz), A1, A2``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (15,):
        raise ValueError(f"expected 15 angles, got shape {theta.shape}")
    before = np.kron(euler_unitary(theta[0:3]), euler_unitary(theta[3:6]))
    core = _pauli_exp(XX, theta[6]) @ _pauli_exp(YY, theta[7]) @ _pauli_exp(ZZ, theta[8])
    after = np.kron(euler_unitary(theta[9:12]), euler_unitary(theta[12:15]))
    return after @ core @ before


_I4 = np.eye(4, dtype=np.complex128)
_GEN2 = np.array([np.kron(Z, I2), np.kron(Y, I2), np.kron(Z, I2),
                  np.kron(I2, Z), np.kron(I2, Y), np.kron(I2, Z),
                  XX, YY, ZZ,
                  np.kron(Z, I2), np.kron(Y, I2), np.kron(Z, I2),
                  np.kron(I2, Z), np.kron(I2, Y), np.kron(I2, Z)])
_GEN1 = np.array([Z, Y, Z])
# angle indices in the order their factors act on the state
_ORDER2 = (2, 1, 0, 5, 4, 3, 8, 7, 6, 11, 10, 9, 14, 13, 12)
_ORDER1 = (2, 1, 0)


def shifted_unitaries(theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``U(theta)`` and, stacked over angles, ``U(theta +- pi/2 e_k)``.

    With ``U = L_k F_k R_k`` and ``F_k = exp(-i theta_k P_k / 2)``, a shift by
    ``pi/2`` gives ``U_+- = (U -+ i L_k P_k F_k R_k) / sqrt(2)``.
    """
    theta = np.asarray(theta, dtype=float)
    gens, order = (_GEN2, _ORDER2) if theta.size == 15 else (_GEN1, _ORDER1)
    d = gens.shape[1]
    eye = np.eye(d)
    c = np.cos(theta / 2)[:, None, None]
    s = np.sin(theta / 2)[:, None, None]
    fac = c * eye - 1j * s * gens
    n = len(order)
    right = [eye]
    for k in order[:-1]:
        right.append(fac[k] @ right[-1])
    left = [eye]
    for k in order[:0:-1]:
        left.append(left[-1] @ fac[k])
    u = fac[order[-1]] @ right[-1]
    dk = np.empty((theta.size, d, d), dtype=np.complex128)
    for pos, k in enumerate(order):
        dk[k] = left[n - 1 - pos] @ (gens[k] @ fac[k]) @ right[pos]
    r2 = np.sqrt(0.5)
    return u, r2 * (u - 1j * dk), r2 * (u + 1j * dk)


def gate_unitary(theta) -> np.ndarray:
    return shifted_unitaries(theta)[0]


def n_params(sites) -> int:
    return 15 if len(sites) == 2 else 3


def parameter_shift(f: Callable[[np.ndarray], float], theta: np.ndarray) -> np.ndarray:
    """Exact gradient of ``f`` for angles entering as ``exp(-i theta P / 2)``."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = SHIFT
        g[k] = 0.5 * (f(theta + e) - f(theta - e))
    return g


def central_difference(f: Callable[[np.ndarray], float], theta: np.ndarray,
                       h: float = 1e-5) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


@dataclass
class GDParams:
    """Angles of every pre-measurement gate and every adaptive gate per outcome."""

    pre: list
    post: dict

    def copy(self) -> GDParams:
        return GDParams([t.copy() for t in self.pre],
                        {m: [t.copy() for t in ts] for m, ts in self.post.items()})

    def flat(self) -> np.ndarray:
        parts = list(self.pre) + [t for m in sorted(self.post) for t in self.post[m]]
        return np.concatenate(parts) if parts else np.zeros(0)

    def unflatten(self, x: np.ndarray) -> GDParams:
        out = self.copy()
        i = 0
        for t in out.pre + [t for m in sorted(out.post) for t in out.post[m]]:
            t[:] = x[i:i + t.size]
            i += t.size
        return out


def init_params(a: DQCAnsatz, depth_post: int = 1, seed=None, scale: float = 2 * math.pi) -> GDParams:
    """Uniform random pre-gate angles in ``[0, scale)``; adaptive angles start at zero."""
    rng = np.random.default_rng(seed)
    pre = [rng.uniform(0, scale, n_params(g.sites)) for g in a.pre_circuit.gates]
    layout = LookupTableDecoder.identity(a.n_system, [()], depth_post).sites
    post = {m: [np.zeros(n_params(s)) for s in layout] for m in a.outcomes()}
    return GDParams(pre, post)


def kak_ansatz(a: DQCAnsatz, depth_post: int = 1, seed=None) -> tuple[DQCAnsatz, GDParams]:
    """Replace the gates of ``a`` by seeded KAK gates; returns the ansatz and its angles.

    The result is a common starting point for the environment sweeps and
    for gradient descent.
    """
    params = init_params(a, depth_post, seed)
    return bind(a, params, depth_post), params


def bind(a: DQCAnsatz, params: GDParams, depth_post: int = 1) -> DQCAnsatz:
    circ = a.pre_circuit.with_gates([gate_unitary(t) for t in params.pre])
    layout = LookupTableDecoder.identity(a.n_system, [()], depth_post).sites
    dec = LookupTableDecoder(a.n_system, layout,
                             {m: [gate_unitary(t) for t in ts] for m, ts in params.post.items()})
    return DQCAnsatz(a.n_system, a.ancilla_positions, circ, dec, a.label)


def _cost_from_amplitudes(amps: dict) -> float:
    return 1.0 - sum(abs(v) ** 2 for v in amps.values())


class _GradientEngine:
    """Cost and exact gradient of the infidelity for a bound network."""

    def __init__(self, net: DQCNetwork):
        self.net = net

    def amplitudes_and_envs(self):
        net = self.net
        B = net.B
        chains = net.bra_chains()
        kets = [B.zeros(net.N)]
        for u, s in zip(net.U, net.pre_sites):
            kets.append(B.apply(kets[-1], u, s))
        pre_envs = []
        for j, s in enumerate(net.pre_sites):
            pre_envs.append({m: B.env(chains[m][j], kets[j], s) for m in net.outcomes})
        psi = kets[-1]
        post_envs = {}
        amps = {}
        for m, (p, post) in net.branches(psi).items():
            if post is None or p < DEGENERATE_P:
                amps[m] = 0j
                continue
            K = len(net.V[m])
            chain = [None] * K
            b = net.target
            if K:
                chain[K - 1] = b
            for k in range(K - 1, 0, -1):
                b = B.apply(b, net.V[m][k].conj().T, net.post_sites[k])
                chain[k - 1] = b
            ket = post
            envs = []
            for k in range(K):
                envs.append(math.sqrt(p) * B.env(chain[k], ket, net.post_sites[k]))
                ket = B.apply(ket, net.V[m][k], net.post_sites[k])
            post_envs[m] = envs
            amps[m] = math.sqrt(p) * B.overlap(net.target, ket)
        return amps, pre_envs, post_envs

    def gradient(self, params: GDParams):
        amps, pre_envs, post_envs = self.amplitudes_and_envs()
        f0 = _cost_from_amplitudes(amps)
        grad = GDParams([np.zeros_like(t) for t in params.pre],
                        {m: [np.zeros_like(t) for t in ts] for m, ts in params.post.items()})
        for j, theta in enumerate(params.pre):
            grad.pre[j] = _shift_gradient(list(pre_envs[j].values()), theta, 1.0)
        for m, envs in post_envs.items():
            rest = f0 + abs(amps[m]) ** 2
            for k, theta in enumerate(params.post[m]):
                grad.post[m][k] = _shift_gradient([envs[k]], theta, rest)
        return f0, grad


def _shift_gradient(envs: list, theta: np.ndarray, offset: float) -> np.ndarray:
    """Parameter-shift gradient of ``offset - sum_e |Tr(e U(theta))|^2``."""
    _, up, um = shifted_unitaries(theta)
    # Tr(E U) = sum_ab E[a, b] U[b, a]
    emat = np.array([e.T.reshape(-1) for e in envs])
    k = theta.size
    fp = offset - (np.abs(emat @ up.reshape(k, -1).T) ** 2).sum(axis=0)
    fm = offset - (np.abs(emat @ um.reshape(k, -1).T) ** 2).sum(axis=0)
    return 0.5 * (fp - fm)


def infidelity_of(a: DQCAnsatz, target: MPS, params: GDParams, depth_post: int = 1,
                  backend: str = "auto") -> float:
    net = DQCNetwork(bind(a, params, depth_post), target, depth_post, backend=backend)
    amps, _, _ = _GradientEngine(net).amplitudes_and_envs()
    return _cost_from_amplitudes(amps)


def gradient(a: DQCAnsatz, target: MPS, params: GDParams, depth_post: int = 1,
             backend: str = "auto") -> tuple[float, GDParams]:
    """Infidelity and its exact gradient with respect to all angles."""
    net = DQCNetwork(bind(a, params, depth_post), target, depth_post, backend=backend)
    return _GradientEngine(net).gradient(params)


def gd_baseline(a: DQCAnsatz, target: MPS, learning_rate: float, steps: int,
                params: GDParams | None = None, depth_post: int = 1, seed=None,
                record_purity: bool = False, backend: str = "auto") -> TrainReport:
    """Plain gradient descent on the infidelity.

    Without ``params`` the angles are drawn by :func:`init_params` from
    ``seed`` and the gates of ``a`` are replaced accordingly.  Entry 0 of
    each series describes the starting point.  A cost above one or a
    non-finite cost marks the run as diverged (``report.flags``) and stops it.
    """
    params = init_params(a, depth_post, seed) if params is None else params.copy()
    cfg = TrainConfig(max_sweeps=steps, tol=0.0, depth_post=depth_post, seed=seed,
                      record_purity=record_purity, backend=backend)
    report = TrainReport(seed=seed, config={**asdict(cfg), "method": "gd",
                                            "learning_rate": learning_rate})
    net = DQCNetwork(bind(a, params, depth_post), target, depth_post, backend=backend)
    _record(net, report, net.forward(), 0.0, record_purity)
    engine = _GradientEngine(net)
    for _ in range(steps):
        t0 = time.perf_counter()
        _, grad = engine.gradient(params)
        x = params.flat() - learning_rate * grad.flat()
        params = params.unflatten(x)
        _load(net, params)
        _record(net, report, net.forward(), time.perf_counter() - t0, record_purity)
        if not np.isfinite(report.infidelity[-1]) or report.infidelity[-1] > 1.0:
            report.flags["diverged"] = True
            break
    report.ansatz = net.ansatz()
    report.flags["params"] = params
    return report


def _load(net: DQCNetwork, params: GDParams) -> None:
    net.U = [gate_unitary(t) for t in params.pre]
    net.V = {m: [gate_unitary(t) for t in ts] for m, ts in params.post.items()}


def descend(f: Callable[[np.ndarray], float], theta0, learning_rate: float, steps: int,
            grad: Callable[[np.ndarray], np.ndarray] | None = None) -> tuple[np.ndarray, list]:
    """Generic gradient descent; ``grad`` defaults to the parameter-shift rule."""
    theta = np.asarray(theta0, dtype=float).copy()
    trace = [f(theta)]
    for _ in range(steps):
        g = grad(theta) if grad is not None else parameter_shift(f, theta)
        theta = theta - learning_rate * g
        trace.append(f(theta))
    return theta, trace
