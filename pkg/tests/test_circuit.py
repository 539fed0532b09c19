from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracle
from dqcforge.circuit import (CNOT, H, DQCAnsatz, Gate, StaticCircuit, adaptive_layout,
                              build_brickwork, enumerate_outcomes, gaps_from_positions,
                              make_ansatz, positions_from_gaps, run_pre_measurement)
from dqcforge.mps import MPS, fidelity, make_ghz


def layer_sites(c):
    return [[g.sites for g in layer] for layer in c.layers]


def test_brickwork_layouts():
    assert layer_sites(build_brickwork(4, 1, seed=0)) == [[(0, 1), (2, 3)]]
    assert layer_sites(build_brickwork(5, 2, seed=0)) == [[(0, 1), (2, 3)], [(1, 2), (3, 4)]]


def test_brickwork_seeded_rebuild_identical():
    a, b = build_brickwork(6, 3, seed=42), build_brickwork(6, 3, seed=42)
    assert all(np.array_equal(x.unitary, y.unitary) for x, y in zip(a.gates, b.gates))
    c = build_brickwork(6, 3, seed=43)
    assert not np.array_equal(a.gates[0].unitary, c.gates[0].unitary)


@given(st.integers(2, 12), st.integers(1, 6), st.sampled_from(["haar", "identity"]))
def test_brickwork_structure(n, depth, init):
    c = build_brickwork(n, depth, seed=1, init=init)
    assert c.is_brickwork() and c.depth == depth
    for ell, layer in enumerate(c.layers):
        used = [s for g in layer for s in g.sites]
        assert len(used) == len(set(used))
        if used:  # odd layers of a 2-wire chain are empty
            assert min(used) == ell % 2
    for g in c.gates:
        assert np.allclose(g.unitary.conj().T @ g.unitary, np.eye(4), atol=1e-10)


def test_brickwork_rejects_bad_sizes():
    with pytest.raises(ValueError):
        build_brickwork(1, 2)
    with pytest.raises(ValueError):
        build_brickwork(4, 0)


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate(np.eye(4), (0, 2))
    with pytest.raises(ValueError):
        Gate(2 * np.eye(2), (0,))
    with pytest.raises(ValueError):
        StaticCircuit(3, [[Gate(np.eye(4), (0, 1)), Gate(np.eye(4), (1, 2))]])


def test_circuit_json_round_trip(tmp_path):
    c = build_brickwork(5, 3, seed=2)
    back = StaticCircuit.from_json(c.to_json())
    assert layer_sites(back) == layer_sites(c)
    assert all(np.array_equal(x.unitary, y.unitary) for x, y in zip(c.gates, back.gates))
    c.save(tmp_path / "c.json")
    assert StaticCircuit.load(tmp_path / "c.json").depth == 3


def test_identity_pre_circuit_gives_zero_state():
    c = StaticCircuit(5, [[Gate(np.eye(4), (0, 1), "id")]])
    a = DQCAnsatz(3, (1, 3), c)
    assert fidelity(run_pre_measurement(a), MPS.zeros(5)) > 1 - 1e-12


def test_ghz_builder_without_ancillae():
    n = 5
    layers = [[Gate(H, (0,))]] + [[Gate(CNOT, (i, i + 1))] for i in range(n - 1)]
    a = DQCAnsatz(n, (), StaticCircuit(n, layers))
    assert fidelity(run_pre_measurement(a), make_ghz(n)) > 1 - 1e-12


def test_pre_measurement_matches_dense():
    a = make_ansatz(6, 3, (2, 5), seed=3)
    ref = oracle.run(oracle.circuit_gates(a.pre_circuit), a.n_wires)
    assert abs(abs(np.vdot(ref, run_pre_measurement(a).to_dense())) ** 2 - 1) < 1e-10


def test_enumerate_outcomes_cases():
    a0 = make_ansatz(4, 2, (), seed=1)
    (b,) = enumerate_outcomes(a0)
    assert b.m == () and b.p == 1.0
    plus = StaticCircuit(3, [[Gate(H, (1,))]])
    branches = enumerate_outcomes(DQCAnsatz(2, (1,), plus))
    assert [b.m for b in branches] == [(0,), (1,)]
    assert all(abs(b.p - 0.5) < 1e-12 for b in branches)


def test_enumerate_outcomes_match_dense():
    a = make_ansatz(6, 3, (1, 4), seed=5)
    psi = oracle.run(oracle.circuit_gates(a.pre_circuit), a.n_wires)
    ref = oracle.probabilities(psi, a.n_wires, a.ancilla_positions)
    branches = enumerate_outcomes(a)
    assert abs(sum(b.p for b in branches) - 1) < 1e-10
    for b in branches:
        assert abs(b.p - ref[b.m]) < 1e-12
        assert abs(b.state.norm() - 1) < 1e-10


def test_enumerate_outcomes_flags_zero_branches():
    a = DQCAnsatz(2, (0,), StaticCircuit(3, [[Gate(np.eye(4), (1, 2))]]))
    branches = {b.m: b for b in enumerate_outcomes(a)}
    assert not branches[(0,)].degenerate
    assert branches[(1,)].degenerate and branches[(1,)].p == 0.0


def test_enumerate_outcomes_refuses_large_r():
    a = make_ansatz(2, 1, tuple(range(7)), seed=0)
    with pytest.raises(ValueError, match="sampling"):
        enumerate_outcomes(a)


def test_idle_ancillae_reproduce_static_output():
    n = 5
    static = build_brickwork(n, 2, seed=4)
    sys_state = static.apply(MPS.zeros(n))
    idle = DQCAnsatz(n, (n, n + 1), StaticCircuit(n + 2, [list(layer) for layer in static.layers]))
    branches = {b.m: b for b in enumerate_outcomes(idle)}
    assert abs(branches[(0, 0)].p - 1) < 1e-12
    assert abs(fidelity(branches[(0, 0)].state, sys_state) - 1) < 1e-12
    assert all(branches[m].degenerate for m in [(0, 1), (1, 0), (1, 1)])


def test_ansatz_invariants():
    a = make_ansatz(4, 2, (3, 1), seed=0)
    assert a.ancilla_positions == (1, 3) and a.measured_wires == (1, 3) and a.r == 2
    assert a.system_wires == (0, 2, 4, 5)
    with pytest.raises(ValueError):
        DQCAnsatz(4, (1, 1), build_brickwork(6, 1, seed=0))
    with pytest.raises(ValueError):
        DQCAnsatz(4, (1,), build_brickwork(6, 1, seed=0))


@given(st.lists(st.integers(0, 8), max_size=4))
def test_gap_position_round_trip(gaps):
    gaps = sorted(gaps)
    assert list(gaps_from_positions(positions_from_gaps(gaps))) == gaps


def test_adaptive_layout_covers_every_wire():
    for n in range(1, 8):
        for d in (1, 2):
            covered = {s for sites in adaptive_layout(n, d) for s in sites}
            assert covered == set(range(n))
