"""Neural-network decoder and the GHZ-patch pre-circuit.

The decoder maps measurement bits (encoded ``0 -> +1``, ``1 -> -1``) to
three Euler angles ``Rz Ry Rz`` per system qubit.  Gradients of the branch
loss ``1 - |o_m|^2`` with respect to the angles come from the
parameter-shift rule applied to single-site environments; they are then
pushed through the network by ordinary reverse-mode differentiation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import pick_backend
from .circuit import CNOT, CNOT_RL, H, DQCAnsatz, Gate, StaticCircuit
from .gd import euler_unitary, shifted_unitaries
from .mps import DEGENERATE_P, MPS, DegenerateOutcome, sample_outcome

log = logging.getLogger(__name__)

EXHAUSTIVE_EVAL_MAX_R = 12


# ---- GHZ-patch pre-circuit ---------------------------------------------------------

def ghz_patch_layout(n: int) -> tuple[int, tuple]:
    """``(n_wires, ancilla_wires)`` of the patch construction for ``n`` system qubits."""
    if n < 2:
        raise ValueError("the GHZ-patch construction needs n >= 2")
    if n == 2:
        return 4, (1, 2)
    patches = n - 2
    anc = []
    for i in range(patches - 1):
        anc += [3 * i + 2, 3 * i + 3]
    return 3 * patches, tuple(anc)


def ghz_patch_ops(n: int) -> list[tuple]:
    """Clifford ops of the patch circuit, including the Bell basis change.

    For ``n >= 3`` there are ``n - 2`` three-wire patches; the two wires
    where neighbouring patches meet are the ancillae.  ``n = 2`` uses two
    Bell pairs whose inner halves are measured.
    """
    if n == 2:
        return [("h", 0), ("cnot", 0, 1), ("h", 3), ("cnot", 3, 2), ("cnot", 1, 2), ("h", 1)]
    n_wires, _ = ghz_patch_layout(n)
    patches = n_wires // 3
    ops: list[tuple] = []
    for i in range(patches):
        c = 3 * i + 1
        ops += [("h", c), ("cnot", c, c - 1), ("cnot", c, c + 1)]
    for i in range(patches - 1):
        a = 3 * i + 2
        ops += [("cnot", a, a + 1), ("h", a)]
    return ops


def circuit_from_ops(n_wires: int, ops: Sequence[tuple]) -> StaticCircuit:
    """Schedule nearest-neighbour H/CNOT ops into as-early-as-possible layers."""
    layers: list[list[Gate]] = []
    free_at = [0] * n_wires
    for op in ops:
        if op[0] == "h":
            sites, u = (op[1],), H
        elif op[0] == "cnot":
            c, t = op[1], op[2]
            if abs(c - t) != 1:
                raise ValueError(f"CNOT {c}->{t} is not nearest-neighbour")
            sites, u = (min(c, t), max(c, t)), (CNOT if c < t else CNOT_RL)
        else:
            raise ValueError(f"unsupported op {op!r}")
        ell = max(free_at[s] for s in sites)
        while len(layers) <= ell:
            layers.append([])
        layers[ell].append(Gate(u, sites, f"{op[0]}{'-'.join(map(str, op[1:]))}"))
        for s in sites:
            free_at[s] = ell + 1
    return StaticCircuit(n_wires, layers)


def ghz_patch_precircuit(n: int, decoder=None) -> DQCAnsatz:
    n_wires, anc = ghz_patch_layout(n)
    circ = circuit_from_ops(n_wires, ghz_patch_ops(n))
    return DQCAnsatz(n, anc, circ, decoder, label=f"ghz-patch-{n}")


# ---- decoder --------------------------------------------------------------------------

def encode_bits(m) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(m, dtype=float)


class MLPDecoder:
    """Fully connected network with tanh hidden layers and a linear output layer.

    ``weights[l]`` has shape ``(layer_sizes[l+1], layer_sizes[l])``.
    """

    def __init__(self, layer_sizes: Sequence[int], weights: Sequence[np.ndarray],
                 biases: Sequence[np.ndarray]):
        self.layer_sizes = [int(s) for s in layer_sizes]
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i + 1], self.layer_sizes[i]) or b.shape != (
                    self.layer_sizes[i + 1],):
                raise ValueError(f"layer {i} has weight {w.shape} and bias {b.shape}")
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise ValueError("one weight matrix per layer transition")

    @classmethod
    def create(cls, r: int, n_out: int, hidden: Sequence[int] = (64,), seed=None,
               scale: float = 1.0, output_scale: float | None = None) -> MLPDecoder:
        """Seeded Gaussian initialization with variance ``scale / fan_in``.

        ``output_scale`` (default ``scale``) replaces ``scale`` for the last
        layer; a large value spreads the initial angles over many periods.
        A zero entry in ``hidden`` is dropped, so ``hidden=(0,)`` is a linear
        decoder.
        """
        sizes = [r] + [h for h in hidden if h > 0] + [n_out]
        rng = np.random.default_rng(seed)
        last = len(sizes) - 2
        out_scale = scale if output_scale is None else output_scale
        ws = [rng.normal(0.0, np.sqrt((out_scale if i == last else scale) / a), size=(b, a))
              for i, (a, b) in enumerate(zip(sizes, sizes[1:]))]
        bs = [np.zeros(b) for b in sizes[1:]]
        return cls(sizes, ws, bs)

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int]) -> MLPDecoder:
        s = list(layer_sizes)
        return cls(s, [np.zeros((b, a)) for a, b in zip(s, s[1:])], [np.zeros(b) for b in s[1:]])

    @property
    def r(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> MLPDecoder:
        return MLPDecoder(self.layer_sizes, [w.copy() for w in self.weights],
                          [b.copy() for b in self.biases])

    def params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in
                               zip(self.weights, self.biases)])

    def with_params(self, flat: np.ndarray) -> MLPDecoder:
        out = self.copy()
        i = 0
        for w, b in zip(out.weights, out.biases):
            w[...] = flat[i:i + w.size].reshape(w.shape)
            i += w.size
            b[...] = flat[i:i + b.size]
            i += b.size
        return out

    def _forward_all(self, x: np.ndarray) -> list[np.ndarray]:
        acts = [x]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w.T + b
            acts.append(z if i == last else np.tanh(z))
        return acts

    def __call__(self, m) -> np.ndarray:
        return forward(self, m)

    def to_dict(self) -> dict:
        return {"format": "dqcforge-mlp", "version": 1, "layer_sizes": self.layer_sizes,
                "weights": [w.ravel().tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_dict(cls, d: dict) -> MLPDecoder:
        if d.get("format") != "dqcforge-mlp":
            raise ValueError("not a dqcforge MLP checkpoint")
        s = d["layer_sizes"]
        ws = [np.asarray(w, dtype=float).reshape(b, a) for w, a, b in zip(d["weights"], s, s[1:])]
        return cls(s, ws, [np.asarray(b, dtype=float) for b in d["biases"]])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> MLPDecoder:
        return cls.from_dict(json.loads(Path(path).read_text()))


def forward(d: MLPDecoder, m) -> np.ndarray:
    """Angles for outcome ``m`` (or a batch of outcomes, one per row)."""
    x = encode_bits(m)
    if x.shape[-1] != d.r:
        raise ValueError(f"decoder expects {d.r} bits, got {x.shape[-1]}")
    return d._forward_all(x)[-1]


# ---- branches and losses ----------------------------------------------------------------

@dataclass(frozen=True)
class OutcomeItem:
    m: tuple
    p: float
    state: object


@dataclass
class OutcomeBatch:
    items: list

    def __post_init__(self):
        if any(it.p <= 0 for it in self.items):
            raise ValueError("batch items need positive probability")

    def __len__(self) -> int:
        return len(self.items)


class BranchSource:
    """Post-measurement states of an ansatz, cached per outcome.

    States live in the chosen backend (dense vectors for small registers).
    Sampling follows the Born rule: from the exhaustive distribution when
    ``r`` is small, otherwise by sequential MPS sampling.
    """

    def __init__(self, a: DQCAnsatz, target: MPS, backend: str = "auto"):
        self.a = a
        self.B = pick_backend(backend, a.n_wires)
        self.target = self.B.from_mps(target.normalize())
        self.n = a.n_system
        self.anc = a.ancilla_positions
        self._mps = None
        self._psi = None
        self._cache: dict = {}
        self._probs = None

    @property
    def pre_state_mps(self) -> MPS:
        if self._mps is None:
            self._mps = self.a.pre_circuit.apply(MPS.zeros(self.a.n_wires))
        return self._mps

    @property
    def pre_state(self):
        if self._psi is None:
            if self.B.name == "dense":
                psi = self.B.zeros(self.a.n_wires)
                for g in self.a.pre_circuit.gates:
                    psi = self.B.apply(psi, g.unitary, g.sites)
                self._psi = psi
            else:
                self._psi = self.pre_state_mps
        return self._psi

    def probabilities(self) -> dict:
        if self._probs is None:
            if self.a.r > EXHAUSTIVE_EVAL_MAX_R:
                raise ValueError(f"r={self.a.r} too large for the exhaustive distribution")
            self._probs = self.B.probabilities(self.pre_state, self.anc) if self.anc else {(): 1.0}
        return self._probs

    def item(self, m) -> OutcomeItem:
        m = tuple(int(b) for b in m)
        if m not in self._cache:
            if not self.anc:
                self._cache[m] = OutcomeItem(m, 1.0, self.B.normalize(self.pre_state))
            else:
                floor = DEGENERATE_P if self.a.r <= EXHAUSTIVE_EVAL_MAX_R else 0.0
                post, p = self.B.project(self.pre_state, self.anc, m, floor)
                self._cache[m] = OutcomeItem(m, p, post)
        return self._cache[m]

    def exhaustive(self) -> OutcomeBatch:
        items = []
        for m, p in sorted(self.probabilities().items()):
            if p < DEGENERATE_P:
                continue
            try:
                items.append(self.item(m))
            except DegenerateOutcome:
                continue
        return OutcomeBatch(items)

    def sample(self, rng: np.random.Generator, size: int) -> OutcomeBatch:
        if self.a.r <= EXHAUSTIVE_EVAL_MAX_R:
            probs = self.probabilities()
            keys = sorted(probs)
            w = np.array([probs[k] for k in keys])
            picks = rng.choice(len(keys), size=size, p=w / w.sum())
            return OutcomeBatch([self.item(keys[i]) for i in picks])
        items = []
        for _ in range(size):
            m, _ = sample_outcome(self.pre_state_mps, self.anc, int(rng.integers(2**63)))
            items.append(self.item(m))
        return OutcomeBatch(items)


def _rotations(angles: np.ndarray, n: int) -> list[np.ndarray]:
    return [euler_unitary(angles[3 * q:3 * q + 3]) for q in range(n)]


def branch_overlap(B, target, state, angles: np.ndarray, n: int) -> complex:
    psi = state
    for q, u in enumerate(_rotations(angles, n)):
        psi = B.apply(psi, u, (q,))
    return B.overlap(target, psi)


def _branch_loss_and_grad(B, target, state, angles: np.ndarray, n: int):
    """``1 - |o|^2`` and its parameter-shift gradient in the angles."""
    us = _rotations(angles, n)
    psi = state
    for q, u in enumerate(us):
        psi = B.apply(psi, u, (q,))
    o = B.overlap(target, psi)
    grad = np.zeros(3 * n)
    for q, u in enumerate(us):
        # psi = V_q (rest), so the rest is V_q^dagger psi
        env = B.env(target, B.apply(psi, u.conj().T, (q,)), (q,))
        _, up, um = shifted_unitaries(angles[3 * q:3 * q + 3])
        e = env.T.reshape(-1)
        lp = 1.0 - np.abs(up.reshape(3, -1) @ e) ** 2
        lm = 1.0 - np.abs(um.reshape(3, -1) @ e) ** 2
        grad[3 * q:3 * q + 3] = 0.5 * (lp - lm)
    return 1.0 - abs(o) ** 2, grad


def _euler_batch(angles: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched ``Rz(t0) Ry(t1) Rz(t2)`` and its angle-shifted versions.

    ``angles`` has shape ``(B, 3)``; returns ``U`` of shape ``(B, 2, 2)`` and
    ``U_+``, ``U_-`` of shape ``(B, 3, 2, 2)`` for shifts of each angle by
    ``+-pi/2`` (see :func:`dqcforge.gd.shifted_unitaries`).
    """
    t0, t1, t2 = angles[:, 0], angles[:, 1], angles[:, 2]
    bsz = angles.shape[0]
    rz0 = np.zeros((bsz, 2, 2), dtype=np.complex128)
    rz0[:, 0, 0], rz0[:, 1, 1] = np.exp(-0.5j * t0), np.exp(0.5j * t0)
    rz2 = np.zeros((bsz, 2, 2), dtype=np.complex128)
    rz2[:, 0, 0], rz2[:, 1, 1] = np.exp(-0.5j * t2), np.exp(0.5j * t2)
    c, s = np.cos(t1 / 2), np.sin(t1 / 2)
    ry = np.empty((bsz, 2, 2), dtype=np.complex128)
    ry[:, 0, 0], ry[:, 0, 1], ry[:, 1, 0], ry[:, 1, 1] = c, -s, s, c
    zm = np.diag([1.0, -1.0]).astype(np.complex128)
    ym = np.array([[0, -1j], [1j, 0]])
    u = rz0 @ ry @ rz2
    dk = np.empty((bsz, 3, 2, 2), dtype=np.complex128)
    dk[:, 0] = zm @ u
    dk[:, 1] = rz0 @ (ym @ ry) @ rz2
    dk[:, 2] = u @ zm
    r2 = np.sqrt(0.5)
    return u, r2 * (u[:, None] - 1j * dk), r2 * (u[:, None] + 1j * dk)


def _dense_batch(src: BranchSource, batch: OutcomeBatch, angles: np.ndarray, grad: bool):
    """Losses ``1 - |o|^2`` (and angle gradients) for a whole batch of dense states."""
    n = src.n
    psi = np.array([it.state for it in batch.items])
    bsz = psi.shape[0]
    t = src.target
    rots = [_euler_batch(angles[:, 3 * q:3 * q + 3]) for q in range(n)]
    for q, (u, _, _) in enumerate(rots):
        v = psi.reshape(bsz, 2**q, 2, -1)
        psi = np.einsum("bij,bajc->baic", u, v).reshape(bsz, -1)
    o = psi @ t.conj()
    losses = 1.0 - np.abs(o) ** 2
    if not grad:
        return losses, None
    g = np.empty((bsz, 3 * n))
    for q, (u, up, um) in enumerate(rots):
        v = psi.reshape(bsz, 2**q, 2, -1)
        rest = np.einsum("bji,bajc->baic", u.conj(), v)
        env = np.einsum("baic,ajc->bij", rest, t.reshape(2**q, 2, -1).conj())
        # Tr(E U) = sum_ij E[i, j] U[j, i]
        ap = np.einsum("bij,bkji->bk", env, up)
        am = np.einsum("bij,bkji->bk", env, um)
        g[:, 3 * q:3 * q + 3] = 0.5 * (np.abs(am) ** 2 - np.abs(ap) ** 2)
    return losses, g


def _batch_terms(src: BranchSource, batch: OutcomeBatch, angles: np.ndarray, grad: bool):
    if src.B.name == "dense":
        return _dense_batch(src, batch, angles, grad)
    losses = np.empty(len(batch))
    g = np.empty_like(angles) if grad else None
    for i, (it, th) in enumerate(zip(batch.items, angles)):
        if grad:
            losses[i], g[i] = _branch_loss_and_grad(src.B, src.target, it.state, th, src.n)
        else:
            losses[i] = 1.0 - abs(branch_overlap(src.B, src.target, it.state, th, src.n)) ** 2
    return losses, g


def _check_shapes(d: MLPDecoder, src: BranchSource):
    if d.r != src.a.r or d.n_out != 3 * src.n:
        raise ValueError(f"decoder maps {d.r} bits to {d.n_out} angles; ansatz needs "
                         f"{src.a.r} -> {3 * src.n}")


def batch_loss(d: MLPDecoder, src: BranchSource, batch: OutcomeBatch) -> float:
    """Mean of ``1 - |o_m(f(m))|^2`` over the batch."""
    _check_shapes(d, src)
    if not len(batch):
        raise ValueError("empty batch")
    angles = forward(d, np.array([it.m for it in batch.items]).reshape(len(batch), -1))
    losses, _ = _batch_terms(src, batch, angles, grad=False)
    return float(np.mean(losses))


def expected_infidelity(d: MLPDecoder, src: BranchSource) -> float:
    """``sum_m p(m) (1 - |o_m|^2)`` over the exhaustive outcome set."""
    batch = src.exhaustive()
    angles = forward(d, np.array([it.m for it in batch.items]).reshape(len(batch), -1))
    losses, _ = _batch_terms(src, batch, angles, grad=False)
    return float(np.dot([it.p for it in batch.items], losses))


@dataclass
class Gradients:
    weights: list
    biases: list
    loss: float

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in
                               zip(self.weights, self.biases)])


def backprop(d: MLPDecoder, src: BranchSource, batch: OutcomeBatch) -> Gradients:
    """Exact gradient of :func:`batch_loss` with respect to weights and biases."""
    _check_shapes(d, src)
    bits = np.array([it.m for it in batch.items]).reshape(len(batch), -1)
    acts = d._forward_all(encode_bits(bits))
    angles = acts[-1]
    losses, delta = _batch_terms(src, batch, angles, grad=True)
    delta = delta / len(batch)
    gw = [None] * len(d.weights)
    gb = [None] * len(d.weights)
    for l in range(len(d.weights) - 1, -1, -1):
        gw[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ d.weights[l]) * (1.0 - acts[l] ** 2)
    return Gradients(gw, gb, float(losses.mean()))


@dataclass
class NNTrainConfig:
    """Training settings.

    ``optimizer`` is ``"adam"`` (default betas 0.9/0.999) or ``"sgd"``.  The
    step size decays exponentially from ``learning_rate`` to
    ``learning_rate * lr_final`` over the run (``lr_final=1`` keeps it fixed).
    The exhaustive evaluation runs every ``eval_every`` epochs and after the
    last one.
    """

    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.01
    steps_per_epoch: int = 1
    seed: int | None = 0
    evaluate: bool = True
    optimizer: str = "adam"
    lr_final: float = 1.0
    eval_every: int = 1


@dataclass
class NNTrainTrace:
    batch_loss: list = field(default_factory=list)
    eval_loss: list = field(default_factory=list)
    eval_epochs: list = field(default_factory=list)
    diverged: bool = False
    decoder: MLPDecoder | None = None

    def eval_points(self) -> list[tuple[int, float]]:
        return list(zip(self.eval_epochs, self.eval_loss))

    def to_csv(self) -> str:
        ev = dict(self.eval_points())
        lines = ["epoch,batch_loss,eval_loss"]
        for e in range(len(self.batch_loss) + 1):
            bl = self.batch_loss[e - 1] if e > 0 else float("nan")
            lines.append(f"{e},{bl:.17g},{ev.get(e, float('nan')):.17g}")
        return "\n".join(lines) + "\n"


class _Adam:
    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, g: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1**self.t)
        vh = self.v / (1 - self.b2**self.t)
        return lr * mh / (np.sqrt(vh) + self.eps)


def train(d: MLPDecoder, src: BranchSource, config: NNTrainConfig | None = None) -> NNTrainTrace:
    """Stochastic gradient training over fresh Born-sampled batches.

    Entry ``e - 1`` of ``batch_loss`` is the mean loss of the batches drawn
    in epoch ``e`` (before their steps).  ``eval_loss`` holds the exhaustive
    expected infidelity at the epochs in ``eval_epochs``, starting with
    epoch 0 (the untrained decoder).
    """
    config = config or NNTrainConfig()
    if config.optimizer not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer {config.optimizer!r}")
    d = d.copy()
    rng = np.random.default_rng(config.seed)
    trace = NNTrainTrace()
    exhaustive = config.evaluate and src.a.r <= EXHAUSTIVE_EVAL_MAX_R
    theta = d.params()
    adam = _Adam(theta.size) if config.optimizer == "adam" else None

    def evaluate(epoch):
        if exhaustive:
            trace.eval_epochs.append(epoch)
            trace.eval_loss.append(expected_infidelity(d, src))

    evaluate(0)
    for epoch in range(1, config.epochs + 1):
        lr = config.learning_rate * config.lr_final ** ((epoch - 1) / max(config.epochs, 1))
        losses = []
        for _ in range(config.steps_per_epoch):
            batch = src.sample(rng, config.batch_size)
            g = backprop(d, src, batch)
            losses.append(g.loss)
            gf = g.flat()
            theta = theta - (adam.step(gf, lr) if adam else lr * gf)
            d = d.with_params(theta)
        trace.batch_loss.append(float(np.mean(losses)))
        if not np.all(np.isfinite(theta)):
            trace.diverged = True
            log.warning("decoder parameters diverged")
            break
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            evaluate(epoch)
    trace.decoder = d
    return trace
