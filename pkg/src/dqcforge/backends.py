"""State backends shared by the circuit optimizers.

``MPSBackend`` works at any size; ``DenseBackend`` keeps full state vectors
and is much faster for the small registers of the few-ancilla experiments.
Both expose the same handful of primitives, so the optimizers are written
once.  Dense vectors use the MPS convention: qubit 0 is the most
significant bit.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from . import mps as _mps
from .mps import DEGENERATE_P, MPS, DegenerateOutcome

DENSE_MAX_WIRES = 16


class MPSBackend:
    name = "mps"

    zeros = staticmethod(MPS.zeros)

    @staticmethod
    def apply(state: MPS, u: np.ndarray, sites) -> MPS:
        return _mps.apply_gate(state, u, sites, check=False)

    @staticmethod
    def env(bra: MPS, ket: MPS, sites) -> np.ndarray:
        return _mps.gate_environment(bra, ket, sites)

    @staticmethod
    def probabilities(state: MPS, anc: Sequence[int]) -> dict:
        return _mps.marginal_probabilities(state, anc)

    @staticmethod
    def project(state: MPS, anc, m, min_probability: float = DEGENERATE_P):
        return _mps.project(state, anc, m, min_probability)

    @staticmethod
    def overlap(a: MPS, b: MPS) -> complex:
        return _mps.overlap(a, b)

    @staticmethod
    def normalize(state: MPS) -> MPS:
        return state.normalize()

    @staticmethod
    def splice(sys_state: MPS, anc: Sequence[int], m, n_wires: int) -> MPS:
        bits = dict(zip(anc, m))
        ts = []
        it = iter(sys_state.tensors)
        prev_bond = 1
        for w in range(n_wires):
            if w in bits:
                t = np.zeros((prev_bond, 2, prev_bond), dtype=np.complex128)
                t[:, bits[w], :] = np.eye(prev_bond)
                ts.append(t)
            else:
                t = next(it)
                ts.append(t)
                prev_bond = t.shape[2]
        return MPS(tuple(ts), None, sys_state.max_bond, sys_state.cutoff)

    @staticmethod
    def from_mps(s: MPS) -> MPS:
        return s

    @staticmethod
    def to_mps(s: MPS) -> MPS:
        return s


class DenseBackend:
    name = "dense"

    @staticmethod
    def zeros(n: int) -> np.ndarray:
        v = np.zeros(2**n, dtype=np.complex128)
        v[0] = 1.0
        return v

    @staticmethod
    def apply(state: np.ndarray, u: np.ndarray, sites) -> np.ndarray:
        k = len(sites)
        i = sites[0]
        n = int(state.size).bit_length() - 1
        view = state.reshape(2**i, 2**k, 2 ** (n - i - k))
        return np.matmul(u, view).reshape(-1)

    @staticmethod
    def env(bra: np.ndarray, ket: np.ndarray, sites) -> np.ndarray:
        k = len(sites)
        i = sites[0]
        n = int(ket.size).bit_length() - 1
        shape = (2**i, 2**k, 2 ** (n - i - k))
        kv = ket.reshape(shape).transpose(1, 0, 2).reshape(2**k, -1)
        bv = bra.reshape(shape).transpose(1, 0, 2).reshape(2**k, -1)
        return kv @ bv.conj().T

    @staticmethod
    def probabilities(state: np.ndarray, anc: Sequence[int]) -> dict:
        n = int(state.size).bit_length() - 1
        anc = sorted(anc)
        w = (np.abs(state) ** 2).reshape((2,) * n)
        other = tuple(q for q in range(n) if q not in anc)
        marg = w.sum(axis=other) if other else w
        marg = marg / marg.sum()
        return {m: float(marg[m]) for m in itertools.product((0, 1), repeat=len(anc))}

    @staticmethod
    def project(state: np.ndarray, anc, m, min_probability: float = DEGENERATE_P):
        n = int(state.size).bit_length() - 1
        idx = [slice(None)] * n
        for q, b in zip(anc, m):
            idx[q] = b
        post = state.reshape((2,) * n)[tuple(idx)].reshape(-1)
        p = float(np.vdot(post, post).real / np.vdot(state, state).real)
        if p < min_probability or p == 0.0:
            raise DegenerateOutcome(p)
        return post / np.linalg.norm(post), p

    @staticmethod
    def overlap(a: np.ndarray, b: np.ndarray) -> complex:
        return complex(np.vdot(a, b))

    @staticmethod
    def normalize(state: np.ndarray) -> np.ndarray:
        return state / np.linalg.norm(state)

    @staticmethod
    def splice(sys_state: np.ndarray, anc: Sequence[int], m, n_wires: int) -> np.ndarray:
        out = np.zeros((2,) * n_wires, dtype=np.complex128)
        idx = [slice(None)] * n_wires
        for q, b in zip(anc, m):
            idx[q] = b
        out[tuple(idx)] = sys_state.reshape((2,) * (n_wires - len(anc)))
        return out.reshape(-1)

    @staticmethod
    def from_mps(s: MPS) -> np.ndarray:
        return s.to_dense()

    @staticmethod
    def to_mps(s: np.ndarray) -> MPS:
        return MPS.from_dense(s)


def pick_backend(name: str, n_wires: int):
    if name == "mps":
        return MPSBackend
    if name == "dense":
        return DenseBackend
    if name == "auto":
        return DenseBackend if n_wires <= DENSE_MAX_WIRES else MPSBackend
    raise ValueError(f"unknown backend {name!r}")
