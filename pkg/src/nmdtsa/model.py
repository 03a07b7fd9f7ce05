"""Classical-model multi-machine power system.

Each machine follows the swing equation

    delta_i'' + (D_i / M_i) delta_i' + (omega_s / M_i) (Pe_i - Pm_i) = 0,  M_i = 2 H_i

with electrical power from a Kron-reduced network

    Pe_i = E_i^2 g_i + sum_{j != i} [a_ij sin(delta_i - delta_j) + b_ij cos(delta_i - delta_j)].

States are ordered ``[delta_1..delta_m, delta_1'..delta_m']``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)

OMEGA_60HZ = 2 * np.pi * 60.0


class ModelError(ValueError):
    """Invalid system data or a failed model computation."""


@dataclass(frozen=True)
class Machine:
    id: str
    H: float
    D: float
    E: float
    Pm: float

    def __post_init__(self):
        if not self.H > 0:
            raise ModelError(f"machine {self.id}: inertia H must be positive, got {self.H}")
        if not self.E > 0:
            raise ModelError(f"machine {self.id}: EMF E must be positive, got {self.E}")
        if self.D < 0:
            raise ModelError(f"machine {self.id}: damping D must be non-negative, got {self.D}")

    @property
    def M(self):
        return 2.0 * self.H


@dataclass(frozen=True, eq=False)
class ReducedNetwork:
    """Network seen from the machine internal nodes (loads folded in)."""

    g: np.ndarray
    a: np.ndarray
    b: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).ravel()
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        m = g.size
        if a.shape != (m, m) or b.shape != (m, m):
            raise ModelError(f"network matrices must be {m}x{m}, got a{a.shape} b{b.shape}")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ModelError("network entries must be finite")
        if np.any(np.diag(a) != 0) or np.any(np.diag(b) != 0):
            raise ModelError("diagonals of a and b must be zero")
        for name, v in (("g", g), ("a", a), ("b", b)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def m(self):
        return self.g.size


@dataclass(frozen=True, eq=False)
class ClassicalSystem:
    machines: tuple
    network: ReducedNetwork
    omega_s: float = OMEGA_60HZ
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "machines", tuple(self.machines))
        if len(self.machines) < 2:
            raise ModelError("a classical system needs at least two machines")
        if len(self.machines) != self.network.m:
            raise ModelError(f"{len(self.machines)} machines but network has m={self.network.m}")

    @property
    def m(self):
        return len(self.machines)

    @property
    def H(self):
        return np.array([mc.H for mc in self.machines])

    @property
    def M(self):
        return 2.0 * self.H

    @property
    def D(self):
        return np.array([mc.D for mc in self.machines])

    @property
    def E(self):
        return np.array([mc.E for mc in self.machines])

    @property
    def Pm(self):
        return np.array([mc.Pm for mc in self.machines])

    def with_network(self, network, name=None):
        return replace(self, network=network, name=self.name if name is None else name)


@dataclass(frozen=True)
class Scenario:
    prefault: ClassicalSystem
    faulton: ClassicalSystem
    postfault: ClassicalSystem
    clearing_time: float
    horizon: float
    step: float = 1e-3
    id: str = ""

    def __post_init__(self):
        systems = (self.prefault, self.faulton, self.postfault)
        if len({s.m for s in systems}) != 1:
            raise ModelError("scenario systems must share the machine count")
        if len({s.omega_s for s in systems}) != 1:
            raise ModelError("scenario systems must share omega_s")
        if not 0 <= self.clearing_time < self.horizon:
            raise ModelError("need 0 <= clearing_time < horizon")
        if not self.step > 0:
            raise ModelError("step must be positive")


# --------------------------------------------------------------------------
# dynamics
# --------------------------------------------------------------------------

def electrical_power(sys, delta):
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1] != sys.m:
        raise ModelError(f"delta has length {delta.shape[-1]}, expected {sys.m}")
    net = sys.network
    diff = delta[..., :, None] - delta[..., None, :]
    coupling = (net.a * np.sin(diff) + net.b * np.cos(diff)).sum(axis=-1)
    return sys.E ** 2 * net.g + coupling


def swing_rhs(sys, state):
    state = np.asarray(state, dtype=float)
    m = sys.m
    if state.shape[-1] != 2 * m:
        raise ModelError(f"state has length {state.shape[-1]}, expected {2 * m}")
    delta, speed = state[..., :m], state[..., m:]
    M = sys.M
    accel = -(sys.D / M) * speed - (sys.omega_s / M) * (electrical_power(sys, delta) - sys.Pm)
    return np.concatenate((speed, accel), axis=-1)


def power_jacobian(sys, delta):
    """dPe_i/ddelta_j, analytic."""
    net = sys.network
    diff = np.subtract.outer(delta, delta)
    offdiag = -net.a * np.cos(diff) + net.b * np.sin(diff)
    J = offdiag.copy()
    np.fill_diagonal(J, 0.0)
    J[np.diag_indices(sys.m)] = -J.sum(axis=1)
    return J


def state_jacobian(sys, delta):
    m = sys.m
    M = sys.M
    A = np.zeros((2 * m, 2 * m))
    A[:m, m:] = np.eye(m)
    A[m:, :m] = -(sys.omega_s / M)[:, None] * power_jacobian(sys, delta)
    A[m:, m:] = -np.diag(sys.D / M)
    return A


# --------------------------------------------------------------------------
# network reduction
# --------------------------------------------------------------------------

def kron_reduce(bus_admittance, machine_nodes, E, machine_reactances=None,
                fault_buses=()):
    """Eliminate every non-machine node from a bus admittance matrix.

    Parameters
    ----------
    bus_admittance : (n, n) complex array, constant-impedance loads included
    machine_nodes : indices of the buses the machines connect to.  With
        ``machine_reactances`` these are terminal buses and internal nodes are
        appended behind the reactances; without, they are the internal nodes.
    E : internal EMF magnitudes (scale a_ij, b_ij)
    fault_buses : buses shorted to ground (bolted fault), removed before
        elimination

    Returns a ``ReducedNetwork`` with g_i = Re Y_ii,
    a_ij = E_i E_j Im Y_ij, b_ij = E_i E_j Re Y_ij.
    """
    Y = np.array(bus_admittance, dtype=complex)
    if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
        raise ModelError(f"bus admittance must be square, got shape {Y.shape}")
    n = Y.shape[0]
    nodes = [int(k) for k in machine_nodes]
    E = np.asarray(E, dtype=float)
    if len(set(nodes)) != len(nodes) or any(k < 0 or k >= n for k in nodes):
        raise ModelError("machine nodes must be distinct valid bus indices")
    if machine_reactances is not None:
        xd = np.asarray(machine_reactances, dtype=float)
        m = len(nodes)
        Yaug = np.zeros((n + m, n + m), dtype=complex)
        Yaug[:n, :n] = Y
        for g, (bus, x) in enumerate(zip(nodes, xd)):
            y = 1.0 / (1j * x)
            k = n + g
            Yaug[k, k] += y
            Yaug[bus, bus] += y
            Yaug[k, bus] -= y
            Yaug[bus, k] -= y
        Y = Yaug
        gen = list(range(n, n + m))
        n = n + m
    else:
        gen = nodes
    faults = set(int(k) for k in fault_buses)
    if faults & set(gen):
        raise ModelError("fault bus coincides with a machine internal node")
    elim = [k for k in range(n) if k not in gen and k not in faults]
    Ygg = Y[np.ix_(gen, gen)]
    if elim:
        Ybb = Y[np.ix_(elim, elim)]
        try:
            lu = linalg.lu_factor(Ybb, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise ModelError(f"non-machine block is singular: {exc}") from exc
        if np.linalg.cond(Ybb) > 1e14:
            raise ModelError("non-machine block is singular (condition number > 1e14)")
        Yred = Ygg - Y[np.ix_(gen, elim)] @ linalg.lu_solve(lu, Y[np.ix_(elim, gen)])
    else:
        Yred = Ygg.copy()
    return reduced_from_admittance(Yred, E)


def reduced_from_admittance(Yred, E):
    E = np.asarray(E, dtype=float)
    EE = np.outer(E, E)
    a = EE * Yred.imag
    b = EE * Yred.real
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(b, 0.0)
    meta = {
        "mapping": "g_i = Re(Yred_ii); a_ij = E_i E_j Im(Yred_ij); b_ij = E_i E_j Re(Yred_ij)",
        "Yred_real": Yred.real.tolist(),
        "Yred_imag": Yred.imag.tolist(),
    }
    return ReducedNetwork(g=np.diag(Yred).real.copy(), a=a, b=b, meta=meta)


# --------------------------------------------------------------------------
# equilibrium and damping checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    """Relative equilibrium: all machines share speed and acceleration.

    ``common_accel`` is the uniform acceleration (rad/s^2) left over when the
    network has losses; it only drives the mean motion.
    """

    delta: np.ndarray
    iterations: int
    residual: float
    common_accel: float
    stable: bool
    eigenvalues: np.ndarray


def _relative_residual(sys, delta):
    accel = (sys.omega_s / sys.M) * (sys.Pm - electrical_power(sys, delta))
    Mt = sys.M.sum()
    mean = np.dot(sys.M, accel) / Mt
    # power units: Pm_i - Pe_i - (M_i/M_T) * sum(Pm - Pe)
    return (accel - mean) * sys.M / sys.omega_s, mean


def find_equilibrium(sys, guess, max_iter=50, tol=1e-10):
    """Newton solve for the relative equilibrium with machine 1 as angle reference."""
    delta = np.array(guess, dtype=float)
    if delta.shape != (sys.m,):
        raise ModelError(f"guess has shape {delta.shape}, expected ({sys.m},)")
    scale = sys.omega_s / sys.M
    for it in range(max_iter + 1):
        res, _ = _relative_residual(sys, delta)
        if np.max(np.abs(res)) < tol:
            break
        if it == max_iter:
            raise ModelError(f"Newton did not converge in {max_iter} iterations "
                             f"(residual {np.max(np.abs(res)):.3e})")
        # d accel_i / d delta = -scale_i * dPe_i
        Jacc = -scale[:, None] * power_jacobian(sys, delta)
        Jmean = sys.M @ Jacc / sys.M.sum()
        J = (Jacc - Jmean[None, :]) * (sys.M / sys.omega_s)[:, None]
        Jr = J[1:, 1:]
        if np.linalg.cond(Jr) > 1e13:
            raise ModelError("singular Jacobian in equilibrium Newton iteration")
        delta[1:] -= np.linalg.solve(Jr, res[1:])
    res, mean = _relative_residual(sys, delta)
    ev = np.linalg.eigvals(state_jacobian(sys, delta))
    # the two mean-motion eigenvalues sit at 0 and -gamma; ignore them
    osc = ev[np.abs(ev.imag) > 1e-9]
    stable = bool(np.all(osc.real <= 1e-9)) and osc.size == 2 * (sys.m - 1)
    if not stable:
        log.warning("equilibrium found but it is not a stable equilibrium point")
    return Equilibrium(delta=delta, iterations=it, residual=float(np.max(np.abs(res))),
                       common_accel=float(mean), stable=stable, eigenvalues=ev)


@dataclass(frozen=True)
class DampingCheck:
    uniform: bool
    gamma: float
    ratios: np.ndarray
    spread: float
    forced: bool = False


def check_uniform_damping(sys, rel_tol=1e-6):
    """Return the common ratio gamma = D_i / (2 H_i) or a violation report."""
    ratios = sys.D / sys.M
    hi, lo = ratios.max(), ratios.min()
    if hi == lo:
        spread = 0.0
    else:
        spread = (hi - lo) / lo if lo > 0 else float("inf")
    if spread <= rel_tol:
        return DampingCheck(True, float(ratios.mean()), ratios, spread)
    return DampingCheck(False, float("nan"), ratios, spread)


def uniformize_damping(sys):
    """Force D_i/(2H_i) to the inertia-weighted mean ratio; returns (system, check)."""
    ratios = sys.D / sys.M
    gamma = float(np.dot(sys.M, ratios) / sys.M.sum())
    machines = [replace(mc, D=gamma * mc.M) for mc in sys.machines]
    check = DampingCheck(True, gamma, np.full(sys.m, gamma), 0.0, forced=True)
    return replace(sys, machines=tuple(machines)), check


def require_uniform_damping(sys, force=False, rel_tol=1e-6):
    check = check_uniform_damping(sys, rel_tol)
    if check.uniform:
        return sys, check
    if not force:
        raise ModelError(
            "damping is not uniform (D_i/2H_i = "
            + ", ".join(f"{r:.4g}" for r in check.ratios)
            + "); pass force_uniform_damping to proceed")
    log.warning("forcing uniform damping (spread %.3g)", check.spread)
    return uniformize_damping(sys)
