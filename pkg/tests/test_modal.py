import numpy as np
import pytest

from nmdtsa.cases import ninebus_initial_angles, smib_system, synthetic_system
from nmdtsa.modal import ModalError, eigen_decompose, select_modes, to_modal
from nmdtsa.model import find_equilibrium, state_jacobian
from nmdtsa.poly import taylor_expand


def _setup(sys, guess):
    eq = find_equilibrium(sys, guess)
    A = state_jacobian(sys, eq.delta)
    return eq, A, eigen_decompose(A)


def test_smib_frequency_closed_form():
    # linearized SMIB: omega_n^2 = omega_s * Pmax cos(delta_s) / M_eff
    sys = smib_system()
    eq, A, modes = _setup(sys, np.zeros(2))
    assert modes.n_modes == 1 and modes.n_mean == 2
    lam = modes.mode_eigenvalues[0]
    K = -A[2:, :2]
    k = K[0, 0] - K[1, 0]  # relative-angle stiffness
    gamma = sys.D[0] / sys.M[0]
    want = complex(-gamma / 2, np.sqrt(k - gamma ** 2 / 4))
    assert lam == pytest.approx(want, rel=1e-10)


def test_diagonalization_and_normalization(ninebus_post):
    eq, A, modes = _setup(ninebus_post, ninebus_initial_angles())
    D = modes.Rinv @ A @ modes.R
    assert np.allclose(D, np.diag(modes.eigenvalues), atol=1e-9)
    for i in range(modes.n_modes):
        v = modes.R[:3, 2 * i]
        diffs = np.abs(v[:, None] - v[None, :])
        assert diffs.max() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(modes.R[:, 2 * i + 1], modes.R[:, 2 * i].conj())
    assert np.all(np.diff(modes.frequencies) > 0)


def test_zero_damping_mean_motion_subspace():
    sys = smib_system(D=0.0)
    eq, A, modes = _setup(sys, np.zeros(2))
    assert modes.n_mean == 2
    assert np.allclose(modes.mode_eigenvalues.real, 0, atol=1e-9)
    # Rinv still diagonalizes the oscillatory part
    D = modes.Rinv @ A @ modes.R
    assert np.allclose(D[:2, :2], np.diag(modes.eigenvalues[:2]), atol=1e-9)
    assert np.allclose(D[:2, 2:], 0, atol=1e-9)


def test_bad_matrix_shapes():
    with pytest.raises(ModalError):
        eigen_decompose(np.eye(3))
    with pytest.raises(ModalError):
        eigen_decompose(np.diag([1.0, 2.0, 3.0, 4.0]))


def test_to_modal_linear_part_and_pairing(ninebus_post):
    eq, A, modes = _setup(ninebus_post, ninebus_initial_angles())
    f = taylor_expand(ninebus_post, eq.delta, 3)
    ms = to_modal(f, modes)
    assert ms.dim == 4
    assert np.allclose(ms.field.linear_part(), np.diag(ms.eigenvalues), atol=1e-9)
    # conjugate symmetry: row 2p+1 is row 2p with the pair variables swapped
    F = ms.field
    swap = np.array([1, 0, 3, 2])
    for t, e in enumerate(F.exps):
        e2 = e[swap]
        for r in range(4):
            assert F.coefficient(r ^ 1, e2) == pytest.approx(np.conj(F.coef[r, t]), abs=1e-10)


def test_to_modal_rejects_nonuniform_damping():
    sys, d0 = synthetic_system(4, seed=3)
    from nmdtsa.model import ClassicalSystem, Machine
    ms = [Machine(m.id, m.H, m.D * (1.5 if i == 0 else 1.0), m.E, m.Pm)
          for i, m in enumerate(sys.machines)]
    bad = ClassicalSystem(ms, sys.network, sys.omega_s)
    eq = find_equilibrium(bad, d0)
    A = state_jacobian(bad, eq.delta)
    with pytest.raises(ModalError):
        modes = eigen_decompose(A)
        to_modal(taylor_expand(bad, eq.delta, 3), modes)


def test_interest_subset_equals_select_modes():
    sys, d0 = synthetic_system(5, seed=1)
    eq, A, modes = _setup(sys, d0)
    f = taylor_expand(sys, eq.delta, 3)
    full = to_modal(f, modes)
    a = select_modes(full, [1, 3])
    b = to_modal(f, modes, interest=[3, 1])
    assert a.mode_ids == b.mode_ids == (1, 3)
    assert np.allclose(a.field.to_dense(), b.field.to_dense(), atol=1e-10)
    with pytest.raises(ModalError):
        select_modes(b, [0])
    with pytest.raises(ModalError):
        to_modal(f, modes, interest=[])
