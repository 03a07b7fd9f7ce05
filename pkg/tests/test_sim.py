import math

import numpy as np
import pytest

from nmdtsa import _kernels
from nmdtsa.boundary import first_integral
from nmdtsa.cases import ninebus_initial_angles, ninebus_scenario, smib_system, synthetic_system
from nmdtsa.model import ClassicalSystem, Machine, ReducedNetwork, Scenario
from nmdtsa.nmd import RealOscillator
from nmdtsa.sim import (SimulationError, Trajectory, angle_spread, integrate, run_contingency,
                        simulate_system)


def _conservative(osc):
    row1 = {(0, l): c for (j, l), c in osc.row1.items() if j == 0}
    return RealOscillator(osc.mode, osc.eigenvalue, osc.order, row1, {(1, 0): 1.0})


def test_rk4_convergence_slope(smib_osc):
    # Richardson: the end-point error ratio between h and h/2 is 2^4
    w0 = np.array([0.3, 1.2])
    T = 2.0
    ends = [integrate(smib_osc, w0, h, T).states[-1] for h in (0.01, 0.005, 0.0025)]
    e1 = np.linalg.norm(ends[0] - ends[1])
    e2 = np.linalg.norm(ends[1] - ends[2])
    ratio = e1 / e2
    assert 12 < ratio < 20
    assert math.log2(ratio) == pytest.approx(4.0, abs=0.3)


def test_first_integral_conserved(smib_osc):
    osc = _conservative(smib_osc)
    V = first_integral(smib_osc)
    tr = integrate(osc, np.array([0.0, 1.5]), 1e-3, 5.0)
    vals = V(tr.states)
    assert np.max(np.abs(vals - vals[0])) < 1e-6


def test_lossless_swing_energy_conserved():
    sys0, d0 = synthetic_system(3, seed=2)
    net = ReducedNetwork(np.zeros(3), sys0.network.a, np.zeros((3, 3)))
    diff = np.subtract.outer(d0, d0)
    pe = (net.a * np.sin(diff)).sum(axis=1)
    ms = [Machine(m.id, m.H, 0.0, m.E, pe[i]) for i, m in enumerate(sys0.machines)]
    sys = ClassicalSystem(ms, net, sys0.omega_s)

    def energy(X):
        d, w = X[:, :3], X[:, 3:]
        kin = (sys.M * w ** 2).sum(axis=1) / (2 * sys.omega_s)
        pot = -(X[:, :3] @ sys.Pm)
        dd = d[:, :, None] - d[:, None, :]
        pot -= 0.5 * (net.a[None] * np.cos(dd)).sum(axis=(1, 2))
        return kin + pot

    x0 = np.concatenate((d0 + np.array([0.3, -0.2, 0.1]), np.zeros(3)))
    X, last = simulate_system(sys, x0, 1e-3, 5000)
    assert last == 5000
    E = energy(X)
    assert np.max(np.abs(E - E[0])) < 1e-6 * max(1.0, abs(E[0]))


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba missing")
def test_numba_and_numpy_agree(smib_osc):
    a = integrate(smib_osc, np.array([0.1, 1.0]), 1e-3, 2.0, backend="numpy").states
    b = integrate(smib_osc, np.array([0.1, 1.0]), 1e-3, 2.0, backend="numba").states
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    scn = ninebus_scenario(8, horizon=1.0)
    ta = run_contingency(scn, ninebus_initial_angles(), backend="numpy")
    tb = run_contingency(scn, ninebus_initial_angles(), backend="numba")
    assert np.allclose(ta.states, tb.states, rtol=1e-11, atol=1e-11)


def test_divergence_guard():
    f = RealOscillator(0, -0.1 + 1j, 3, {(0, 1): -1.0, (0, 3): 5.0}, {(1, 0): 1.0})
    tr = integrate(f, np.array([0.0, 2.0]), 1e-3, 10.0)
    assert tr.diverged
    assert np.all(np.isfinite(tr.states))
    assert len(tr) == tr.diverged_at + 1


def test_callable_field_matches_polynomial(smib_osc):
    a = integrate(smib_osc, np.array([0.0, 0.5]), 1e-3, 1.0).states
    b = integrate(lambda w: smib_osc(w), np.array([0.0, 0.5]), 1e-3, 1.0).states
    assert np.allclose(a, b, atol=1e-13)


def test_integrate_argument_checks(smib_osc):
    with pytest.raises(SimulationError):
        integrate(smib_osc, np.zeros(2), 0.0, 1.0)
    with pytest.raises(SimulationError):
        integrate(smib_osc, np.zeros(3), 1e-3, 1.0)
    with pytest.raises(SimulationError):
        integrate(smib_osc, np.array([np.nan, 0.0]), 1e-3, 1.0)


def test_null_contingency_stays_at_sep():
    s = smib_system()
    tr = run_contingency(Scenario(s, s, s, clearing_time=0.1, horizon=2.0, step=1e-3))
    assert np.max(np.abs(tr.states)) < 1e-10
    assert not tr.diverged


def test_clearing_switch_is_exact():
    # 8 cycles is not a multiple of the step; the post-fault segment starts
    # exactly at the clearing time
    scn = ninebus_scenario(8, horizon=1.0, step=1e-3)
    tr = run_contingency(scn, ninebus_initial_angles())
    assert tr.times[0] == pytest.approx(8 / 60, abs=1e-15)
    assert tr.frame == "delta"
    coarse = run_contingency(ninebus_scenario(8, horizon=1.0, step=2e-3), ninebus_initial_angles())
    # same physical trajectory at a coarser step (compare on common samples)
    n = len(coarse)
    assert np.allclose(tr.times[::2][:n], coarse.times)
    assert np.max(np.abs(coarse.states - tr.states[::2][:n])) < 1e-6


def test_csv_round_trip(tmp_path, smib_osc):
    tr = integrate(smib_osc, np.array([0.1, 0.2]), 1e-2, 1.0, frame="decoupled-w")
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    back = Trajectory.from_csv(p)
    assert back.frame == "decoupled-w"
    assert np.array_equal(back.times, tr.times)
    assert np.array_equal(back.states, tr.states)
    assert back.meta["step"] == 1e-2


def test_trajectory_validation():
    with pytest.raises(SimulationError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 2)))
    with pytest.raises(SimulationError):
        Trajectory(np.array([0.0, 1.0]), np.zeros((3, 2)))


def test_angle_spread_uses_offset():
    tr = Trajectory(np.arange(2.0), np.zeros((2, 4)), "delta", {"sep_offset": [0.0, 0.5]})
    assert np.allclose(angle_spread(tr), 0.5)
