import json
import math

import numpy as np
import pytest

from nmdtsa import boundary as bd
from nmdtsa.cases import ninebus_initial_angles, ninebus_scenario, smib_system
from nmdtsa.model import Scenario
from nmdtsa.nmd import RealOscillator
from nmdtsa.sim import Trajectory, angle_spread, run_contingency
from nmdtsa.tsa import (INDETERMINATE, STABLE, UNSTABLE, TSAError, fit_modal_amplitudes, judge,
                        nmd_tsa_1, nmd_tsa_2, resolve_modes)

G0 = ninebus_initial_angles()


@pytest.fixture(scope="module")
def traj8():
    return run_contingency(ninebus_scenario(8), G0)


def _speeds_traj(t, speeds):
    m = speeds.shape[1]
    return Trajectory(t, np.hstack((np.zeros_like(speeds), speeds)), "delta")


# -- modal energy fit -------------------------------------------------------------

def test_fit_single_mode_exact(smib):
    lam = smib.modes.mode_eigenvalues[0]
    t = np.arange(0, 5, 1e-3)
    env = np.exp(lam.real * t)
    w = np.column_stack((2 * env * np.cos(lam.imag * t + 0.3),
                         -2 * env * np.cos(lam.imag * t + 0.3) + 0.01))
    rep = fit_modal_amplitudes(_speeds_traj(t, w), smib.modes, smib.system.H)
    assert np.allclose(rep.amplitudes[:, 0], 2.0, atol=1e-6)
    assert rep.ratios[0] == 1.0
    assert rep.fit_residual < 1e-10


def test_fit_two_modes_energies(ninebus):
    modes, H = ninebus.modes, ninebus.system.H
    lam = modes.mode_eigenvalues
    t = np.arange(0, 5, 1e-3)
    A = np.array([[0.02, 0.004], [-0.03, 0.01], [0.015, -0.02]])
    ph = np.array([[0.1, 1.0], [0.5, -0.3], [2.0, 0.7]])
    gamma = 1 / 6
    w = np.zeros((t.size, 3))
    for i in range(2):
        env = np.exp(lam[i].real * t)
        w += np.abs(A[:, i]) * env[:, None] * np.cos(lam[i].imag * t[:, None] + ph[:, i]
                                                      + np.pi * (A[:, i] < 0))
    w += 0.003 * np.exp(-gamma * t)[:, None] + 0.001
    rep = fit_modal_amplitudes(_speeds_traj(t, w), modes, H, gamma=gamma)
    E = (H[:, None] * A ** 2).sum(axis=0)
    assert np.allclose(rep.energies, E, rtol=1e-6)
    assert np.allclose(rep.ratios, E / E.sum(), rtol=1e-6)
    assert rep.ratios.sum() == pytest.approx(1.0, abs=1e-15)


def test_fit_errors(smib):
    t = np.arange(0, 0.5, 1e-3)
    with pytest.raises(TSAError, match="periods"):
        fit_modal_amplitudes(_speeds_traj(t, np.ones((t.size, 2))), smib.modes, smib.system.H)
    tr = Trajectory(np.arange(3.0), np.zeros((3, 4)), "delta", diverged_at=2)
    with pytest.raises(TSAError):
        fit_modal_amplitudes(tr, smib.modes, smib.system.H)


# -- verdict logic ----------------------------------------------------------------

CUBIC = RealOscillator(0, -0.1 + 1j, 3, {(0, 1): -1.0, (0, 3): 1.0}, {(1, 0): 1.0})


def test_judge_cases():
    est = bd.first_integral_boundary(CUBIC, M=36)
    t = np.arange(4.0)
    W = np.array([[0.0, 0.1], [0.2, 0.3], [0.0, 0.5], [0.1, 0.1]])
    ok = np.ones(4, bool)
    v, margin, tex = judge(est, t, W, ok)
    assert v == STABLE and tex is None
    assert margin == pytest.approx(est.level([0.0, 0.5]) / 0.25)
    W2 = W.copy()
    W2[2] = [0.0, 1.2]
    v, margin, tex = judge(est, t, W2, ok)
    assert v == UNSTABLE and tex == 2.0
    ok2 = ok.copy()
    ok2[1] = False
    assert judge(est, t, W, ok2)[0] == INDETERMINATE
    assert judge(est, t, W, ok, diverged=True)[0] == UNSTABLE


def test_shrink_containment():
    # anything inside a shrunk boundary is inside the original one
    est = bd.first_integral_boundary(CUBIC, M=72)
    rng = np.random.default_rng(0)
    P = rng.uniform(-1.2, 1.2, (1000, 2))
    full = bd.classify_state(est, P)
    for r in (0.9, 0.5, 0.1):
        small = bd.classify_state(est.shrunk(r), P)
        assert np.all(full[small == bd.INSIDE] == bd.INSIDE)
        assert (small == bd.INSIDE).sum() <= (full == bd.INSIDE).sum()


def test_resolve_modes(ninebus):
    assert resolve_modes(ninebus.modes, None) == [0, 1]
    assert resolve_modes(ninebus.modes, [0.96]) == [0]
    assert resolve_modes(ninebus.modes, [2.05, 0]) == [0, 1]
    with pytest.raises(TSAError):
        resolve_modes(ninebus.modes, [5])


# -- procedures -------------------------------------------------------------------

def test_null_contingency_is_stable():
    s = smib_system()
    scn = Scenario(s, s, s, clearing_time=0.05, horizon=2.0, step=1e-3)
    rep = nmd_tsa_1(None, scn, guess=np.zeros(2), methods=("fi", "zubov"))
    assert rep.verdict == STABLE
    assert rep.violating_mode is None


def test_procedure_2a_with_all_modes_matches_1(ninebus, traj8):
    scn = ninebus_scenario(8)
    r1 = nmd_tsa_1(None, scn, guess=G0, traj=traj8, model=ninebus)
    r2 = nmd_tsa_2(None, scn, None, guess=G0, traj=traj8, model=ninebus)
    assert r1.verdict == r2.verdict
    for a, b in zip(r1.modes, r2.modes):
        assert a.mode == b.mode and a.verdicts == b.verdicts and a.margins == b.margins
    assert r2.provenance["procedure"] == "2a"


def test_determinism(ninebus, traj8):
    scn = ninebus_scenario(8)
    a = nmd_tsa_1(None, scn, guess=G0, traj=traj8, model=ninebus).to_dict()
    b = nmd_tsa_1(None, scn, guess=G0).to_dict()
    assert json.dumps(a, default=str) == json.dumps(b, default=str)


def test_report_save(ninebus, traj8, tmp_path):
    rep = nmd_tsa_2(None, ninebus_scenario(8), [0.96], shrink=True, guess=G0, traj=traj8,
                    methods=("fi",))
    files = rep.save(tmp_path)
    d = json.loads((tmp_path / "report.json").read_text())
    assert d["verdict"] == rep.verdict
    assert d["provenance"]["procedure"] == "2b"
    assert set(files) == {"mode0_trajectory", "mode0_first_integral"}
    back = Trajectory.from_csv(files["mode0_trajectory"])
    assert back.frame == "decoupled-w" and len(back) == len(traj8)
    assert "verdict: " + rep.verdict in (tmp_path / "report.txt").read_text()


def test_shrinking_needs_stable_reference(ninebus):
    bad = run_contingency(ninebus_scenario(20), G0)
    with pytest.raises(TSAError):
        nmd_tsa_2(None, ninebus_scenario(20), None, shrink=True, guess=G0, traj=bad,
                  model=ninebus)


@pytest.mark.parametrize("cycles,verdict", [(17, STABLE), (20, UNSTABLE)])
def test_first_integral_verdicts_around_cct(ninebus, cycles, verdict):
    rep = nmd_tsa_1(None, ninebus_scenario(cycles), guess=G0, model=ninebus)
    assert rep.verdict == verdict
    if verdict == UNSTABLE:
        assert rep.violating_mode == 0
        assert 0.94 < rep.mode(0).frequency_hz < 0.98


def test_direct_simulation_reference():
    # full-model check of the bus-5 case used above: first swing survives
    # 19 cycles, 20 cycles separates
    s19 = angle_spread(run_contingency(ninebus_scenario(19), G0))
    s20 = run_contingency(ninebus_scenario(20), G0)
    assert s19.max() < math.pi
    assert s20.diverged or angle_spread(s20).max() > 10 * math.pi
