"""Labeled dense tensors, SVD splitting and the polar gate update."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when labels or extents of tensors do not fit together."""


class DenseTensor:
    """Complex tensor whose indices are addressed by string labels.

    Data is stored as a C-contiguous ``complex128`` array; ``labels[i]``
    names axis ``i``.
    """

    __slots__ = ("data", "labels")

    def __init__(self, data, labels: Sequence[str]):
        arr = np.ascontiguousarray(data, dtype=np.complex128)
        labels = tuple(labels)
        if arr.ndim != len(labels):
            raise ShapeError(f"{arr.ndim} axes but {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise ShapeError(f"duplicate labels in {labels}")
        self.data = arr
        self.labels = labels

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ShapeError(f"no index labelled {label!r} in {self.labels}") from None

    def transpose(self, labels: Sequence[str]) -> DenseTensor:
        """Return a copy with axes reordered to ``labels``."""
        if sorted(labels) != sorted(self.labels):
            raise ShapeError(f"{labels} is not a permutation of {self.labels}")
        perm = [self.axis(lab) for lab in labels]
        return DenseTensor(self.data.transpose(perm), labels)

    def relabel(self, mapping: dict[str, str]) -> DenseTensor:
        return DenseTensor(self.data, [mapping.get(lab, lab) for lab in self.labels])

    def matrix(self, row_labels: Sequence[str]) -> np.ndarray:
        """Reshape into a matrix with ``row_labels`` grouped as rows (in order)."""
        row_labels = list(row_labels)
        col_labels = [lab for lab in self.labels if lab not in row_labels]
        t = self.transpose(row_labels + col_labels).data
        nrow = int(np.prod([self.shape[self.axis(lab)] for lab in row_labels], dtype=int))
        return t.reshape(nrow, -1)

    def __mul__(self, scalar) -> DenseTensor:
        return DenseTensor(self.data * scalar, self.labels)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        dims = ", ".join(f"{lab}={d}" for lab, d in zip(self.labels, self.shape))
        return f"DenseTensor({dims})"


@dataclass(frozen=True)
class SvdFactors:
    """``t = left · diag(singular_values) · right`` with a fresh bond label."""

    left: DenseTensor
    singular_values: np.ndarray
    right: DenseTensor
    bond: str


def contract(a: DenseTensor, b: DenseTensor, pairs: Sequence[tuple[str, str]]) -> DenseTensor:
    """Sum over the index pairs ``(label_in_a, label_in_b)``.

    The result carries the free labels of ``a`` followed by those of ``b``.
    """
    ax_a, ax_b = [], []
    for la, lb in pairs:
        ia, ib = a.axis(la), b.axis(lb)
        if a.shape[ia] != b.shape[ib]:
            raise ShapeError(f"extent mismatch on {la}-{lb}: {a.shape[ia]} vs {b.shape[ib]}")
        ax_a.append(ia)
        ax_b.append(ib)
    free_a = [lab for i, lab in enumerate(a.labels) if i not in ax_a]
    free_b = [lab for i, lab in enumerate(b.labels) if i not in ax_b]
    if set(free_a) & set(free_b):
        raise ShapeError(f"uncontracted labels collide: {set(free_a) & set(free_b)}")
    out = np.tensordot(a.data, b.data, axes=(ax_a, ax_b))
    return DenseTensor(out, free_a + free_b)


def fix_svd_phases(u: np.ndarray, vh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Make the largest-magnitude entry of each column of ``u`` real positive."""
    if u.size == 0:
        return u, vh
    idx = np.argmax(np.abs(u), axis=0)
    ph = u[idx, np.arange(u.shape[1])]
    ph = ph / np.abs(ph)
    return u / ph, vh * ph[:, None]


def svd_split(t: DenseTensor, left_labels: Sequence[str], bond: str = "bond") -> SvdFactors:
    """Thin SVD of ``t`` viewed as a matrix with ``left_labels`` as rows."""
    left_labels = list(left_labels)
    if not left_labels or len(left_labels) >= len(t.labels):
        raise ShapeError("left_labels must be a proper nonempty subset of the labels")
    if bond in t.labels:
        raise ShapeError(f"bond label {bond!r} already in use")
    right_labels = [lab for lab in t.labels if lab not in left_labels]
    lshape = [t.shape[t.axis(lab)] for lab in left_labels]
    rshape = [t.shape[t.axis(lab)] for lab in right_labels]
    u, s, vh = np.linalg.svd(t.matrix(left_labels), full_matrices=False)
    u, vh = fix_svd_phases(u, vh)
    k = s.shape[0]
    left = DenseTensor(u.reshape(lshape + [k]), left_labels + [bond])
    right = DenseTensor(vh.reshape([k] + rshape), [bond] + right_labels)
    return SvdFactors(left, s, right, bond)


def polar_matrix(env: np.ndarray) -> np.ndarray:
    """Unitary ``U`` maximising ``|Tr(env @ U)|``; ``Tr(env @ U)`` comes out real and >= 0."""
    x, _, yh = np.linalg.svd(env)
    return yh.conj().T @ x.conj().T


def polar_update(env: DenseTensor, split: Sequence[str]) -> DenseTensor:
    """Optimal gate for the environment ``env``.

    ``env`` reshaped with ``split`` as rows is the matrix ``E`` with
    ``overlap = Tr(E @ U)``, so the rows of ``E`` pair with the input legs of
    the gate and its columns with the output legs.  The returned tensor is
    ``U = Y X^dagger`` (from ``E = X S Y^dagger``) labelled with the column
    labels first (gate outputs) and ``split`` last (gate inputs).
    """
    split = list(split)
    rest = [lab for lab in env.labels if lab not in split]
    m = env.matrix(split)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"environment reshapes to {m.shape}, not square")
    u = polar_matrix(m)
    shape = [env.shape[env.axis(lab)] for lab in rest + split]
    return DenseTensor(u.reshape(shape), rest + split)
