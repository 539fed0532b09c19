from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracle
from dqcforge.stabilizer import (CheckMatrix, DeterministicOutcome, PauliString, StabTableau,
                                 anticommuting_partner, commutes, gf2_rank, gf2_solve, independent,
                                 measured_group, multi_measurement_correction,
                                 post_measurement_correction, random_clifford_ops,
                                 random_stabilizer, symplectic_form)

paulis = st.text(alphabet="IXYZ", min_size=1, max_size=8)


def ghz_generators(n):
    return ["X" * n] + ["I" * i + "ZZ" + "I" * (n - i - 2) for i in range(n - 1)]


# ---- Pauli strings ----------------------------------------------------------------------

@given(st.sampled_from(["", "+", "-", "+i", "-i"]), paulis)
def test_parse_render_round_trip(prefix, letters):
    p = PauliString.parse(prefix + letters)
    assert PauliString.parse(str(p)) == p
    assert str(p)[0] in "+-"


def test_parse_rejects_garbage():
    for text in ["", "XQ", "i+X", "+-X", "x"]:
        with pytest.raises(ValueError):
            PauliString.parse(text)


def test_phase_rendering():
    assert str(PauliString.parse("-iXY")) == "-iXY"
    assert str(PauliString.parse("ZZ")) == "+ZZ"


@given(paulis, st.data())
def test_product_matches_dense_and_binary_map_is_additive(a, data):
    b = data.draw(st.text(alphabet="IXYZ", min_size=len(a), max_size=len(a)))
    g, h = PauliString.parse(a), PauliString.parse(b)
    gh = g * h
    assert np.array_equal(gh.bits, g.bits ^ h.bits)
    assert np.allclose(gh.to_matrix(), g.to_matrix() @ h.to_matrix())


@given(paulis, st.integers(0, 1000))
def test_apply_matches_matrix(a, seed):
    g = PauliString.parse(a)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2**g.n) + 1j * rng.normal(size=2**g.n)
    assert np.allclose(g.apply(v), g.to_matrix() @ v)
    assert np.allclose(g.to_matrix(), oracle.pauli_matrix(a))


def test_commutation_examples():
    assert commutes(PauliString.parse("XI"), PauliString.parse("ZI")) == 1
    assert commutes(PauliString.parse("XX"), PauliString.parse("ZZ")) == 0
    with pytest.raises(ValueError):
        commutes(PauliString.parse("X"), PauliString.parse("XX"))


def test_commutation_matches_dense_commutator():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = "".join(rng.choice(list("IXYZ"), 6))
        b = "".join(rng.choice(list("IXYZ"), 6))
        ma, mb = oracle.pauli_matrix(a), oracle.pauli_matrix(b)
        dense = 0 if np.allclose(ma @ mb, mb @ ma) else 1
        assert commutes(PauliString.parse(a), PauliString.parse(b)) == dense


@given(st.integers(1, 8), paulis)
def test_symplectic_form_structure(n, letters):
    lam = symplectic_form(n)
    assert np.array_equal(lam, lam.T)
    assert np.array_equal(lam @ lam % 2, np.eye(2 * n, dtype=np.uint8))
    g = PauliString.parse(letters)
    r = g.bits.astype(int)
    assert int(r @ symplectic_form(g.n) @ r) == 2 * letters.count("Y")


# ---- check matrices ----------------------------------------------------------------------

def test_independence_examples():
    assert independent(CheckMatrix(ghz_generators(5)))
    assert gf2_rank(np.array([[0, 1], [0, 1]])) == 1
    with pytest.raises(ValueError):
        CheckMatrix(["XI", "ZI"])


@given(st.integers(1, 8), st.integers(1, 40), st.integers(0, 10_000))
def test_random_tableaux_give_valid_check_matrices(n, gates, seed):
    r = random_stabilizer(n, gates, seed).check_matrix()
    assert independent(r)
    for i in range(n):
        for j in range(n):
            assert commutes(r.rows[i], r.rows[j]) == 0


def test_gf2_solve():
    a = np.array([[1, 1, 0], [0, 1, 1]])
    x = gf2_solve(a, np.array([1, 0]))
    assert np.array_equal(a @ x % 2, [1, 0])
    assert gf2_solve(np.array([[1, 0], [1, 0]]), np.array([1, 0])) is None


def test_partner_examples():
    r = CheckMatrix(["ZI", "IZ"])
    g = anticommuting_partner(r, 0)
    assert list(g.x) == [1, 0] and g.phase == 0
    assert [commutes(g, row) for row in r.rows] == [1, 0]


def test_partner_pattern_on_random_groups():
    for trial in range(100):
        r = random_stabilizer(8, 40, seed=trial).check_matrix()
        for i in range(8):
            g = anticommuting_partner(r, i)
            assert [commutes(g, row) for row in r.rows] == [int(j == i) for j in range(8)]


# ---- tableau -------------------------------------------------------------------------------

def test_tableau_examples():
    assert [str(g) for g in random_stabilizer(3, 0, seed=0).stabilizers()] == ["+ZII", "+IZI",
                                                                                "+IIZ"]
    t = StabTableau(2).apply([("h", 0)])
    assert str(t.stabilizers()[0]) == "+XI"


@given(st.integers(1, 6), st.integers(1, 30), st.integers(0, 10_000))
def test_tableau_state_matches_dense_clifford(n, gates, seed):
    ops = random_clifford_ops(n, gates, seed)
    psi = oracle.clifford_state(ops, n)
    t = StabTableau(n).apply(ops)
    assert abs(abs(np.vdot(psi, t.to_dense())) - 1) < 1e-10
    for g in t.stabilizers():
        assert np.allclose(g.apply(psi), psi)


def test_tableau_measurement_matches_dense():
    for seed in range(20):
        ops = random_clifford_ops(5, 25, seed)
        psi = oracle.clifford_state(ops, 5)
        t = StabTableau(5).apply(ops)
        bit, random = t.measure(2, np.random.default_rng(seed))
        post, p = oracle.measure_qubit(psi, 5, 2, bit)
        assert abs(p - (0.5 if random else 1.0)) < 1e-10
        assert abs(abs(np.vdot(post, t.to_dense())) - 1) < 1e-10


# ---- post-measurement corrections -------------------------------------------------------------

def _correction_fidelity(ops, n, k):
    psi = oracle.clifford_state(ops, n)
    g = post_measurement_correction(StabTableau(n).apply(ops).check_matrix(), k)
    phi0, _ = oracle.measure_qubit(psi, n, k, 0)
    phi1, _ = oracle.measure_qubit(psi, n, k, 1)
    return abs(np.vdot(phi0, g.apply(phi1))), g


def test_correction_ghz2():
    ops = [("h", 0), ("cnot", 0, 1)]
    fid, g = _correction_fidelity(ops, 2, 1)
    assert abs(fid - 1) < 1e-12
    v11 = np.zeros(4)
    v11[3] = 1
    assert abs(g.apply(v11)[0]) > 1 - 1e-12


def test_correction_single_flip():
    fid, g = _correction_fidelity([("h", 0)], 2, 0)
    assert str(g) == "+XI" and abs(fid - 1) < 1e-12


def test_deterministic_outcome_reported():
    r = StabTableau(2).apply([("h", 0)]).check_matrix()
    with pytest.raises(DeterministicOutcome):
        post_measurement_correction(r, 1)


def test_correction_on_random_states():
    done = 0
    for trial in range(300):
        n = 6
        ops = random_clifford_ops(n, 40, seed=trial)
        k = trial % n
        try:
            fid, _ = _correction_fidelity(ops, n, k)
        except DeterministicOutcome:
            continue
        assert fid > 1 - 1e-10
        done += 1
        if done == 100:
            break
    assert done == 100


def test_measured_group_contains_z():
    r = CheckMatrix(["XIII", "IXII", "IIXI", "IIIX"])
    group, where = measured_group(r, [0, 2])
    assert str(group.rows[where[0]]) == "+ZIII" and str(group.rows[where[1]]) == "+IIZI"
    assert independent(group)


def test_multi_measurement_correction_on_random_states():
    rng = np.random.default_rng(1)
    checked = 0
    for trial in range(200):
        n = 6
        ops = random_clifford_ops(n, 40, seed=1000 + trial)
        ks = sorted(rng.choice(n, size=2, replace=False).tolist())
        outcome = rng.integers(0, 2, size=2).tolist()
        r = StabTableau(n).apply(ops).check_matrix()
        try:
            g = multi_measurement_correction(r, ks, outcome)
        except DeterministicOutcome:
            continue
        psi = oracle.clifford_state(ops, n)
        phi_m, phi_0 = psi, psi
        for k, b in zip(ks, outcome):
            phi_m, _ = oracle.measure_qubit(phi_m, n, k, b)
            phi_0, _ = oracle.measure_qubit(phi_0, n, k, 0)
        assert abs(abs(np.vdot(phi_0, g.apply(phi_m))) - 1) < 1e-10
        checked += 1
    assert checked > 50
