from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dqcforge.circuit import haar_unitary
from dqcforge.tensor import (DenseTensor, ShapeError, contract, polar_matrix, polar_update,
                             svd_split)


def rand_tensor(rng, shape, labels):
    return DenseTensor(rng.normal(size=shape) + 1j * rng.normal(size=shape), labels)


def test_contract_identity_with_vector():
    eye = DenseTensor(np.eye(2), ["i", "j"])
    v = DenseTensor([1.0, 0.0], ["k"])
    out = contract(eye, v, [("j", "k")])
    assert out.labels == ("i",)
    np.testing.assert_allclose(out.data, [1, 0])


def test_contract_matrix_product():
    a = DenseTensor([[1, 2], [3, 4]], ["i", "j"])
    b = DenseTensor([[0, 1], [1, 0]], ["j2", "k"])
    out = contract(a, b, [("j", "j2")])
    np.testing.assert_allclose(out.data, [[2, 1], [4, 3]])


def test_contract_matches_nested_loops():
    rng = np.random.default_rng(1)
    a = rand_tensor(rng, (2, 3, 4), ["a", "b", "c"])
    b = rand_tensor(rng, (4, 5, 3), ["x", "y", "z"])
    out = contract(a, b, [("b", "z"), ("c", "x")])
    assert out.labels == ("a", "y")
    ref = np.zeros((2, 5), dtype=complex)
    for i, y, j, k in itertools.product(range(2), range(5), range(3), range(4)):
        ref[i, y] += a.data[i, j, k] * b.data[k, y, j]
    assert np.max(np.abs(out.data - ref)) < 1e-12


def test_contract_errors():
    a = DenseTensor(np.ones((2, 3)), ["i", "j"])
    b = DenseTensor(np.ones((2, 2)), ["k", "l"])
    with pytest.raises(ShapeError):
        contract(a, b, [("j", "k")])
    with pytest.raises(ShapeError):
        contract(a, b, [("nope", "k")])


def test_dense_tensor_invariants():
    with pytest.raises(ShapeError):
        DenseTensor(np.ones((2, 2)), ["i", "i"])
    with pytest.raises(ShapeError):
        DenseTensor(np.ones((2, 2)), ["i"])
    t = DenseTensor(np.arange(6).reshape(2, 3), ["a", "b"])
    assert int(np.prod(t.shape)) == t.data.size
    assert t.transpose(["b", "a"]).shape == (3, 2)


@given(st.integers(0, 10_000), st.complex_numbers(max_magnitude=10, allow_nan=False))
def test_contract_is_linear_in_scalar(seed, alpha):
    rng = np.random.default_rng(seed)
    a = rand_tensor(rng, (2, 3), ["i", "j"])
    b = rand_tensor(rng, (3, 2), ["k", "l"])
    lhs = contract(alpha * a, b, [("j", "k")]).data
    rhs = alpha * contract(a, b, [("j", "k")]).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_svd_diagonal():
    f = svd_split(DenseTensor(np.diag([3.0, 1.0]), ["i", "j"]), ["i"])
    np.testing.assert_allclose(f.singular_values, [3, 1])


def test_svd_rank_one():
    rng = np.random.default_rng(2)
    u = rng.normal(size=3) + 1j * rng.normal(size=3)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    s = svd_split(DenseTensor(np.outer(u, v), ["i", "j"]), ["i"]).singular_values
    assert abs(s[0] - 1) < 1e-12 and np.all(s[1:] < 1e-12)


def test_svd_norm_identity():
    rng = np.random.default_rng(3)
    t = rand_tensor(rng, (4, 4), ["i", "j"])
    s = svd_split(t, ["i"]).singular_values
    assert abs(np.sum(s**2) - np.linalg.norm(t.data) ** 2) < 1e-10


@given(st.integers(0, 10_000))
def test_svd_reassembles_with_isometries(seed):
    rng = np.random.default_rng(seed)
    t = rand_tensor(rng, (2, 3, 2, 2), ["a", "b", "c", "d"])
    f = svd_split(t, ["a", "c"])
    s = f.singular_values
    assert np.all(s >= 0) and np.all(np.diff(s) <= 1e-14)
    left = f.left.matrix(["a", "c"])
    right = f.right.matrix([f.bond])
    assert np.allclose(left.conj().T @ left, np.eye(len(s)), atol=1e-10)
    assert np.allclose(right @ right.conj().T, np.eye(len(s)), atol=1e-10)
    assert np.allclose((left * s) @ right, t.matrix(["a", "c"]), atol=1e-10)


def test_svd_phase_convention():
    rng = np.random.default_rng(4)
    f = svd_split(rand_tensor(rng, (3, 3), ["i", "j"]), ["i"])
    u = f.left.matrix(["i"])
    lead = u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])]
    assert np.allclose(lead.imag, 0, atol=1e-14) and np.all(lead.real > 0)


def test_svd_split_errors():
    t = DenseTensor(np.ones((2, 2)), ["i", "j"])
    with pytest.raises(ShapeError):
        svd_split(t, [])
    with pytest.raises(ShapeError):
        svd_split(t, ["i", "j"])


def test_polar_identity_and_diagonal():
    u = polar_update(DenseTensor(np.eye(2), ["in", "out"]), ["in"])
    assert np.allclose(u.matrix(["out"]), np.eye(2))
    env = np.diag([2.0, 3.0])
    u = polar_matrix(env)
    assert np.allclose(u, np.eye(2))
    assert abs(np.trace(env @ u) - 5) < 1e-12


def test_polar_beats_random_unitaries():
    rng = np.random.default_rng(5)
    env = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    best = abs(np.trace(env @ polar_matrix(env)))
    others = [abs(np.trace(env @ haar_unitary(4, rng))) for _ in range(1000)]
    assert best >= max(others)


@given(st.integers(0, 10_000), st.sampled_from([2, 4]))
def test_polar_is_unitary_and_attains_nuclear_norm(seed, d):
    rng = np.random.default_rng(seed)
    env = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    u = polar_matrix(env)
    assert np.allclose(u.conj().T @ u, np.eye(d), atol=1e-10)
    tr = np.trace(env @ u)
    assert abs(tr - np.linalg.svd(env, compute_uv=False).sum()) < 1e-10
    assert tr.real >= 0 and abs(tr.imag) < 1e-10


def test_polar_update_labels_and_square_check():
    rng = np.random.default_rng(6)
    env = rand_tensor(rng, (2, 2, 2, 2), ["in0", "in1", "out0", "out1"])
    u = polar_update(env, ["in0", "in1"])
    assert u.labels == ("out0", "out1", "in0", "in1")
    m = u.matrix(["out0", "out1"])
    assert np.allclose(m.conj().T @ m, np.eye(4), atol=1e-10)
    with pytest.raises(ShapeError):
        polar_update(rand_tensor(rng, (2, 4), ["a", "b"]), ["a"])
