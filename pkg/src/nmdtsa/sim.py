"""Fixed-step RK4 integration and contingency trajectories."""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import ModelError, find_equilibrium
from .poly import PolyVectorField

FRAMES = ("delta", "modal", "decoupled-w", "state")


class SimulationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled states.

    ``diverged_at`` is the index of the last finite sample when integration
    was cut short by the overflow guard, else None.
    """

    times: np.ndarray
    states: np.ndarray
    frame: str = "state"
    meta: dict = field(default_factory=dict)
    diverged_at: int | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        X = np.asarray(self.states)
        if X.ndim != 2 or X.shape[0] != t.size:
            raise SimulationError("states must be (samples, dim) matching times")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise SimulationError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", X)

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def diverged(self):
        return self.diverged_at is not None

    def __len__(self):
        return self.times.size

    def component(self, j):
        return self.states[:, j]

    # -- delimited text ----------------------------------------------------
    def to_csv(self, path=None):
        buf = io.StringIO()
        meta = dict(self.meta, frame=self.frame, diverged_at=self.diverged_at)
        buf.write("# " + json.dumps(meta, default=str) + "\n")
        buf.write(", ".join(["t"] + [f"x{j + 1}" for j in range(self.dim)]) + "\n")
        data = np.column_stack((self.times, np.real(self.states)))
        np.savetxt(buf, data, delimiter=", ", fmt="%.17g")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("#"):
                raise SimulationError(f"{path}: missing metadata comment line")
            meta = json.loads(first[1:])
            header = fh.readline()
            if not header.strip().startswith("t"):
                raise SimulationError(f"{path}: missing header row")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        frame = meta.pop("frame", "state")
        div = meta.pop("diverged_at", None)
        return cls(data[:, 0], data[:, 1:], frame, meta, div)


def _as_kernel_field(f):
    if hasattr(f, "row1") and hasattr(f, "field"):
        f = f.field
    if isinstance(f, PolyVectorField):
        return f
    return None


def integrate(f, x0, step, horizon, t0=0.0, guard=_kernels.OVERFLOW_GUARD, frame="state",
              backend=None):
    """Classical RK4 with fixed step; one sample per step.

    ``f`` may be a PolyVectorField, a RealOscillator or a callable x -> x'.
    Stops early (``diverged_at`` set) when |x| exceeds ``guard``.
    """
    if not step > 0:
        raise SimulationError("step must be positive")
    if not horizon >= step:
        raise SimulationError("horizon must be at least one step")
    x0 = np.asarray(x0)
    if not np.all(np.isfinite(x0)):
        raise SimulationError("initial state is not finite")
    nsteps = int(round(horizon / step))
    pf = _as_kernel_field(f)
    if pf is not None:
        if x0.shape != (pf.dim,):
            raise SimulationError(f"initial state has shape {x0.shape}, field dim {pf.dim}")
        states, last = _kernels.rk4_path(pf.exps, pf.coef, x0, step, nsteps, guard, backend)
    else:
        states, last = _rk4_callable(f, x0, step, nsteps, guard)
    times = t0 + step * np.arange(states.shape[0])
    return Trajectory(times, states, frame, {"step": step},
                      None if last == nsteps else int(last))


def _rk4_callable(f, x0, dt, nsteps, guard):
    x = np.array(x0, dtype=np.result_type(x0, float))
    out = np.empty((nsteps + 1, x.size), dtype=x.dtype)
    out[0] = x
    for n in range(nsteps):
        k1 = np.asarray(f(x))
        k2 = np.asarray(f(x + 0.5 * dt * k1))
        k3 = np.asarray(f(x + 0.5 * dt * k2))
        k4 = np.asarray(f(x + dt * k3))
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > guard:
            return out[:n + 1], n
        out[n + 1] = x
    return out, nsteps


def simulate_system(sys, x0, step, nsteps, guard=_kernels.OVERFLOW_GUARD, backend=None):
    """RK4 on the full swing equations, returns (states, last_index)."""
    net = sys.network
    return _kernels.swing_rk4(net.a, net.b, net.g, sys.E, sys.Pm, sys.M, sys.D, sys.omega_s,
                              x0, step, nsteps, guard, backend)


def _sep(sys, guess, what):
    try:
        return find_equilibrium(sys, guess)
    except ModelError as exc:
        raise ModelError(f"{what} equilibrium: {exc}") from exc


def run_contingency(scn, guess=None, backend=None):
    """Post-fault Delta-frame trajectory of a fault scenario.

    Starts at the pre-fault SEP, runs the fault-on system up to the clearing
    time (the last step is shortened so the switch happens exactly there),
    then the post-fault system until the horizon.  The post-fault SEP is
    subtracted so the origin is the equilibrium.
    """
    m = scn.prefault.m
    guess = np.zeros(m) if guess is None else np.asarray(guess, dtype=float)
    pre = _sep(scn.prefault, guess, "pre-fault")
    post = _sep(scn.postfault, pre.delta, "post-fault")
    h = scn.step
    x = np.concatenate((pre.delta, np.zeros(m)))
    tc = scn.clearing_time
    nfault = int(math.floor(tc / h + 1e-9))
    rest = tc - nfault * h
    fault_div = None
    if nfault:
        states, last = simulate_system(scn.faulton, x, h, nfault, backend=backend)
        x = states[-1]
        if last != nfault:
            fault_div = last
    if rest > 1e-12 and fault_div is None:
        states, last = simulate_system(scn.faulton, x, rest, 1, backend=backend)
        x = states[-1]
    npost = int(round((scn.horizon - tc) / h))
    if fault_div is None:
        states, last = simulate_system(scn.postfault, x, h, npost, backend=backend)
    else:
        states, last = x[None, :], 0
    div = None if (fault_div is None and last == npost) else int(last)
    offset = np.concatenate((post.delta, np.zeros(m)))
    times = tc + h * np.arange(states.shape[0])
    meta = {"scenario": scn.id, "system": scn.postfault.name, "sep_offset": post.delta.tolist(),
            "prefault_sep": pre.delta.tolist(), "clearing_time": tc, "step": h}
    return Trajectory(times, states - offset, "delta", meta, div)


def angle_spread(traj):
    """max_i delta_i - min_i delta_i over time (Delta frame)."""
    m = traj.dim // 2
    d = traj.states[:, :m] + np.asarray(traj.meta.get("sep_offset", np.zeros(m)))
    return d.max(axis=1) - d.min(axis=1)
