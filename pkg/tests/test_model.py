import math

import numpy as np
import pytest

from nmdtsa.cases import ninebus_bus_admittance, ninebus_initial_angles, ninebus_system, smib_system
from nmdtsa.model import (ClassicalSystem, Machine, ModelError, ReducedNetwork, Scenario,
                          check_uniform_damping, electrical_power, find_equilibrium, kron_reduce,
                          power_jacobian, reduced_from_admittance, require_uniform_damping,
                          state_jacobian, swing_rhs, uniformize_damping)


def test_machine_validation():
    with pytest.raises(ModelError):
        Machine("G", -1.0, 0.1, 1.0, 0.5)
    m = Machine("G", 3.0, 1.0, 1.0, 0.2)
    assert m.M == 6.0


def test_network_validation():
    with pytest.raises(ModelError):
        ReducedNetwork(np.zeros(2), np.ones((2, 3)), np.zeros((2, 2)))


def test_electrical_power_matches_formula():
    rng = np.random.default_rng(1)
    sys, _ = _random_system(rng, 4)
    d = rng.normal(size=4)
    net = sys.network
    ref = np.array([sys.E[i] ** 2 * net.g[i] + sum(
        net.a[i, j] * math.sin(d[i] - d[j]) + net.b[i, j] * math.cos(d[i] - d[j])
        for j in range(4) if j != i) for i in range(4)])
    assert np.allclose(electrical_power(sys, d), ref, atol=1e-13)


def test_power_jacobian_finite_difference():
    rng = np.random.default_rng(2)
    sys, _ = _random_system(rng, 5)
    d = rng.normal(size=5)
    J = power_jacobian(sys, d)
    h = 1e-6
    num = np.column_stack([(electrical_power(sys, d + h * e) - electrical_power(sys, d - h * e))
                           / (2 * h) for e in np.eye(5)])
    assert np.allclose(J, num, atol=1e-7)


def test_state_jacobian_finite_difference():
    sys = ninebus_system()
    x = np.concatenate((ninebus_initial_angles(), np.zeros(3)))
    A = state_jacobian(sys, x[:3])
    h = 1e-6
    num = np.column_stack([(swing_rhs(sys, x + h * e) - swing_rhs(sys, x - h * e)) / (2 * h)
                           for e in np.eye(6)])
    assert np.allclose(A, num, rtol=1e-6, atol=1e-5)


def test_kron_reduce_matches_direct_schur():
    # independent oracle: eliminate non-machine nodes by solving the linear system
    Y = ninebus_bus_admittance()
    xd = [0.0608, 0.1198, 0.1813]
    n = 9
    Yx = np.zeros((12, 12), dtype=complex)
    Yx[:9, :9] = Y
    for k, (bus, x) in enumerate(zip([0, 1, 2], xd)):
        y = 1 / (1j * x)
        Yx[9 + k, 9 + k] += y
        Yx[bus, bus] += y
        Yx[9 + k, bus] -= y
        Yx[bus, 9 + k] -= y
    keep = [9, 10, 11]
    elim = list(range(n))
    Yred = Yx[np.ix_(keep, keep)] - Yx[np.ix_(keep, elim)] @ np.linalg.solve(
        Yx[np.ix_(elim, elim)], Yx[np.ix_(elim, keep)])
    E = np.array([1.0566, 1.0502, 1.0170])
    net = kron_reduce(Y, [0, 1, 2], E, machine_reactances=xd)
    ref = reduced_from_admittance(Yred, E)
    assert np.allclose(net.a, ref.a, atol=1e-12)
    assert np.allclose(net.b, ref.b, atol=1e-12)
    assert np.allclose(net.g, ref.g, atol=1e-12)


def test_fault_removes_bus():
    post = ninebus_system(fault_buses=(5,))
    pre = ninebus_system()
    assert not np.allclose(post.network.a, pre.network.a)


def test_smib_equilibrium_angle():
    sys = smib_system()
    eq = find_equilibrium(sys, np.zeros(2))
    # sin(delta) = Pm / Pmax  with Pmax = 1.7, Pm = 1.7 sin 15deg
    assert math.degrees(eq.delta[0] - eq.delta[1]) == pytest.approx(15.0, abs=1e-9)
    assert eq.stable
    assert eq.common_accel == pytest.approx(0.0, abs=1e-12)


def test_ninebus_prefault_equilibrium_matches_power_flow():
    # EMFs and mechanical powers come from the published power flow, so the
    # SEP must reproduce its internal angle differences
    sys = ninebus_system()
    g = ninebus_initial_angles()
    eq = find_equilibrium(sys, g)
    got = np.degrees(eq.delta - eq.delta[0])
    want = np.degrees(g - g[0])
    assert np.allclose(got, want, atol=0.02)
    assert eq.stable


def test_newton_failure_raises():
    sys = smib_system(delta_s=math.radians(89.9))
    bad = ClassicalSystem([Machine("a", 3, 1, 1, 2.0), Machine("b", 3, 1, 1, -2.0)],
                          sys.network, sys.omega_s)
    with pytest.raises(ModelError):
        find_equilibrium(bad, np.zeros(2), max_iter=20)


def test_damping_check_spread():
    # gamma ratios 0.08 and 0.10 -> spread 0.25
    ms = [Machine("a", 1.0, 0.16, 1, 0.1), Machine("b", 1.0, 0.20, 1, -0.1)]
    net = ReducedNetwork(np.zeros(2), np.array([[0, 1.0], [1.0, 0]]), np.zeros((2, 2)))
    sys = ClassicalSystem(ms, net)
    chk = check_uniform_damping(sys)
    assert not chk.uniform
    assert chk.spread == pytest.approx(0.25)
    with pytest.raises(ModelError):
        require_uniform_damping(sys)
    forced, chk2 = require_uniform_damping(sys, force=True)
    assert chk2.forced and check_uniform_damping(forced).uniform
    assert check_uniform_damping(uniformize_damping(sys)[0]).uniform


def test_scenario_validation():
    s = smib_system()
    with pytest.raises(ModelError):
        Scenario(s, s, s, clearing_time=2.0, horizon=1.0)


def _random_system(rng, m):
    a = rng.uniform(0.5, 2, (m, m))
    a = (a + a.T) / 2
    b = rng.uniform(-0.1, 0.1, (m, m))
    b = (b + b.T) / 2
    np.fill_diagonal(a, 0)
    np.fill_diagonal(b, 0)
    ms = [Machine(f"G{i}", 3.0, 1.0, 1.0 + 0.01 * i, 0.0) for i in range(m)]
    return ClassicalSystem(ms, ReducedNetwork(rng.uniform(0, 0.1, m), a, b)), None
