from __future__ import annotations

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from dqcforge.circuit import make_ansatz
from dqcforge.gd import (central_difference, descend, euler_unitary, gd_baseline, gradient,
                         infidelity_of, init_params, kak_ansatz, kak_unitary, parameter_shift,
                         shifted_unitaries)
from dqcforge.lut import TrainConfig, sweep_train
from dqcforge.mps import make_ghz, make_random_mps


@given(st.integers(0, 10_000))
def test_parameterized_gates_are_unitary(seed):
    rng = np.random.default_rng(seed)
    for theta, d in ((rng.uniform(0, 7, 15), 4), (rng.uniform(0, 7, 3), 2)):
        u = kak_unitary(theta) if d == 4 else euler_unitary(theta)
        assert np.allclose(u.conj().T @ u, np.eye(d), atol=1e-12)


@given(st.integers(0, 10_000), st.sampled_from([3, 15]))
def test_shift_rule_matches_finite_differences(seed, k):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * np.pi, k)
    d = 2 if k == 3 else 4
    env = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))

    def f(t):
        return abs(np.trace(env @ shifted_unitaries(t)[0])) ** 2

    exact = parameter_shift(f, theta)
    approx = central_difference(f, theta, 1e-5)
    assert np.linalg.norm(exact - approx) <= 1e-5 * max(1.0, np.linalg.norm(exact))


def test_zero_learning_rate_is_flat():
    a = make_ansatz(4, 2, (2,), seed=0)
    rep = gd_baseline(a, make_ghz(4), 0.0, 5, seed=1)
    assert np.ptp(rep.infidelity) < 1e-14


def test_single_angle_toy_reaches_analytic_optimum():
    # 1 - |<+| Ry(t) |0>|^2 = (1 - sin t) / 2 is minimal at t = pi / 2
    plus = np.array([1, 1]) / np.sqrt(2)

    def f(t):
        c, s = np.cos(t[0] / 2), np.sin(t[0] / 2)
        return 1 - abs(np.vdot(plus, [c, s])) ** 2

    theta, trace = descend(f, [0.3], 1.0, 200)
    assert abs(theta[0] - np.pi / 2) < 1e-6
    assert trace[-1] < 1e-12


def test_circuit_gradient_matches_finite_differences():
    a = make_ansatz(4, 2, (1, 3), seed=2)
    target = make_random_mps(4, 2, seed=3)
    rng = np.random.default_rng(4)
    for _ in range(3):
        params = init_params(a, seed=int(rng.integers(1000)))
        for ts in params.post.values():
            for t in ts:
                t[:] = rng.uniform(0, 2 * np.pi, t.size)
        f0, g = gradient(a, target, params)
        x0 = params.flat()

        def f(x):
            return infidelity_of(a, target, params.unflatten(x))

        assert abs(f0 - f(x0)) < 1e-12
        fd = central_difference(f, x0, 1e-5)
        assert np.linalg.norm(g.flat() - fd) <= 1e-5 * np.linalg.norm(fd)


def test_shared_start_matches_environment_method():
    a, params = kak_ansatz(make_ansatz(8, 4, (0, 9), seed=0), seed=5)
    target = make_ghz(8)
    env = sweep_train(a, target, TrainConfig(max_sweeps=0))
    gd = gd_baseline(a, target, 0.1, 0, params=params)
    assert abs(env.infidelity[0] - gd.infidelity[0]) < 1e-12


def test_gd_lowers_cost_at_small_step():
    a = make_ansatz(4, 2, (2,), seed=6)
    rep = gd_baseline(a, make_ghz(4), 0.01, 10, seed=7)
    assert rep.infidelity[-1] < rep.infidelity[0]
    assert not rep.flags.get("diverged")
    assert len(rep.infidelity) == 11
