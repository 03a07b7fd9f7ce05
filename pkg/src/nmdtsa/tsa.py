"""Transient stability assessment by nonlinear modal decoupling.

Procedure 1 analyzes every oscillatory mode of the post-fault system.
Procedure 2a keeps only the modes of interest.  Procedure 2b additionally
scales each mode's critical level by its share r_i of the modal energy in a
stable reference trajectory.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import boundary as bd
from .modal import eigen_decompose, to_modal
from .model import find_equilibrium, require_uniform_damping, state_jacobian
from .nmd import nmd_decouple, oscillators, project_states
from .poly import taylor_expand
from .sim import Trajectory, run_contingency

log = logging.getLogger(__name__)

STABLE, UNSTABLE, INDETERMINATE = "stable", "unstable", "indeterminate"


class TSAError(ValueError):
    pass


# --------------------------------------------------------------------------
# modal energies
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModalEnergyReport:
    mode_ids: tuple
    sigma: np.ndarray       # 1/s
    omega: np.ndarray       # rad/s
    amplitudes: np.ndarray  # (machines, modes), rad/s
    phases: np.ndarray      # (machines, modes), rad
    energies: np.ndarray
    total: float
    ratios: np.ndarray
    fit_residual: float

    def ratio(self, mode):
        return float(self.ratios[self.mode_ids.index(mode)])

    def to_dict(self):
        return {"mode_ids": list(self.mode_ids), "sigma": self.sigma.tolist(),
                "omega": self.omega.tolist(), "amplitudes": self.amplitudes.tolist(),
                "phases": self.phases.tolist(), "energies": self.energies.tolist(),
                "total": self.total, "ratios": self.ratios.tolist(),
                "fit_residual": self.fit_residual}


def fit_modal_amplitudes(traj, modes, H, mode_ids=None, gamma=None, speeds=None):
    """Least-squares fit of machine speed deviations onto damped sinusoids.

    With sigma_i and Omega_i fixed by the eigenvalues, every machine speed is
    fitted on {e^(sigma t) cos(Omega t), e^(sigma t) sin(Omega t)} for the
    modes, plus a constant and e^(-gamma t) for the mean motion.  Energies
    are E_i = sum_j H_j A_ji^2 and r_i = E_i / sum E.
    """
    H = np.asarray(H, dtype=float)
    m = H.size
    if traj.diverged:
        raise TSAError("modal energy fit needs a trajectory without divergence")
    mode_ids = tuple(range(modes.n_modes)) if mode_ids is None else tuple(mode_ids)
    if not mode_ids:
        raise TSAError("no modes to fit")
    lam = modes.mode_eigenvalues[list(mode_ids)]
    t = traj.times - traj.times[0]
    slowest = 2 * math.pi / np.min(np.abs(lam.imag))
    if t[-1] < 2 * slowest:
        raise TSAError(f"trajectory covers {t[-1]:.3g} s, fit needs two periods "
                       f"({2 * slowest:.3g} s)")
    # duplicate frequencies make the basis rank deficient
    res = 2 * math.pi / t[-1]
    for a in range(len(lam)):
        for b in range(a + 1, len(lam)):
            if abs(lam[a] - lam[b]) < 0.1 * res:
                raise TSAError(f"modes {mode_ids[a]} and {mode_ids[b]} cannot be separated "
                               "over this record length")
    Y = traj.states[:, m:2 * m] if speeds is None else np.asarray(speeds)
    cols = []
    for l in lam:
        env = np.exp(l.real * t)
        cols += [env * np.cos(l.imag * t), env * np.sin(l.imag * t)]
    nuisance = [np.ones_like(t)]
    if gamma:
        nuisance.append(np.exp(-gamma * t))
    B = np.column_stack(cols + nuisance)
    if np.linalg.matrix_rank(B) < B.shape[1]:
        raise TSAError("fit basis is rank deficient")
    coef, *_ = np.linalg.lstsq(B, Y, rcond=None)
    fitted = B @ coef
    resid = float(np.linalg.norm(Y - fitted) / max(np.linalg.norm(Y), 1e-300))
    c = coef[:2 * len(lam):2].T   # (machines, modes)
    s = coef[1:2 * len(lam):2].T
    A = np.hypot(c, s)
    phase = np.arctan2(-s, c)
    E = (H[:, None] * A ** 2).sum(axis=0)
    total = float(E.sum())
    if total <= 0:
        raise TSAError("trajectory carries no modal energy")
    return ModalEnergyReport(mode_ids, lam.real.copy(), lam.imag.copy(), A, phase, E, total,
                             E / total, resid)


# --------------------------------------------------------------------------
# per-system preparation
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModalModel:
    """Everything derived from the post-fault system alone (reusable)."""

    system: object
    equilibrium: object
    modes: object
    chain: object
    decoupled: object
    oscillators: dict
    order: int

    @property
    def mode_ids(self):
        return self.chain.mode_ids


def prepare(sys, guess=None, k=3, interest=None, force=False):
    sys, _ = require_uniform_damping(sys, force=force)
    guess = np.zeros(sys.m) if guess is None else guess
    eq = find_equilibrium(sys, guess)
    if not eq.stable:
        raise TSAError("post-fault equilibrium is not stable")
    f = taylor_expand(sys, eq.delta, k)
    modes = eigen_decompose(state_jacobian(sys, eq.delta))
    msys = to_modal(f, modes, interest)
    chain, dec = nmd_decouple(msys, k)
    osc = oscillators(chain, dec)
    return ModalModel(sys, eq, modes, chain, dec, osc, k)


def resolve_modes(modes, selector):
    """Mode ids from None (all), ints, or frequencies given as floats (Hz)."""
    if selector is None or selector == "all":
        return list(range(modes.n_modes))
    out = []
    for s in selector:
        if isinstance(s, (int, np.integer)) and not isinstance(s, bool):
            if not 0 <= s < modes.n_modes:
                raise TSAError(f"mode {s} does not exist")
            out.append(int(s))
        else:
            out.append(modes.find_mode(float(s)))
    return sorted(set(out))


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass(eq=False)
class ModeResult:
    mode: int
    eigenvalue: complex
    estimates: dict
    w: np.ndarray
    ok: np.ndarray
    times: np.ndarray
    verdicts: dict
    margins: dict
    exit_times: dict
    clearing_state: dict
    shrink_ratio: float | None = None
    oscillator: object = None

    @property
    def frequency_hz(self):
        return abs(self.eigenvalue.imag) / (2 * math.pi)

    @property
    def verdict(self):
        return self.verdicts[next(iter(self.verdicts))]

    @property
    def exit_time(self):
        return self.exit_times[next(iter(self.exit_times))]

    def to_dict(self):
        return {"mode": self.mode, "frequency_hz": self.frequency_hz,
                "eigenvalue": [self.eigenvalue.real, self.eigenvalue.imag],
                "verdict": self.verdict, "verdicts": self.verdicts, "margins": self.margins,
                "exit_times": self.exit_times, "clearing_state": self.clearing_state,
                "shrink_ratio": self.shrink_ratio,
                "critical_values": {m: e.critical_value for m, e in self.estimates.items()},
                "effective_critical": {m: e.effective_critical
                                       for m, e in self.estimates.items()},
                "unprojectable_samples": int((~self.ok).sum())}


@dataclass(eq=False)
class TSAReport:
    modes: list
    verdict: str
    violating_mode: int | None
    provenance: dict
    energy: ModalEnergyReport | None = None
    trajectory: Trajectory | None = None

    def mode(self, mode_id):
        for r in self.modes:
            if r.mode == mode_id:
                return r
        raise KeyError(mode_id)

    def to_dict(self):
        return {"verdict": self.verdict, "violating_mode": self.violating_mode,
                "provenance": self.provenance,
                "modes": [r.to_dict() for r in self.modes],
                "energy": self.energy.to_dict() if self.energy else None}

    def to_text(self):
        p = self.provenance
        lines = [f"scenario: {p.get('scenario', '')}",
                 f"procedure: {p['procedure']}  order: {p['k']}  methods: {','.join(p['methods'])}",
                 f"verdict: {self.verdict}",
                 f"violating_mode: {self.violating_mode}"]
        for r in self.modes:
            lines.append("")
            lines.append(f"[mode {r.mode}] frequency_hz={r.frequency_hz:.6f} verdict={r.verdict}")
            for m in r.verdicts:
                e = r.estimates[m]
                crit = "none" if e.critical_value is None else f"{e.critical_value:.6g}"
                lines.append(f"  {m}: verdict={r.verdicts[m]} margin={r.margins[m]:.6g} "
                             f"critical={crit} shrink={e.shrink_ratio:.6g} "
                             f"exit_time={r.exit_times[m]} clearing_state={r.clearing_state[m]}")
            if r.shrink_ratio is not None:
                lines.append(f"  r={r.shrink_ratio:.6g}")
        return "\n".join(lines) + "\n"

    def save(self, outdir):
        """Report text/JSON plus per-mode projected trajectories and boundaries."""
        os.makedirs(outdir, exist_ok=True)
        files = {}
        for r in self.modes:
            tr = Trajectory(r.times, r.w, "decoupled-w", {"mode": r.mode})
            path = os.path.join(outdir, f"mode{r.mode}_trajectory.csv")
            tr.to_csv(path)
            files[f"mode{r.mode}_trajectory"] = path
            for m, e in r.estimates.items():
                bpath = os.path.join(outdir, f"mode{r.mode}_{m}.csv")
                e.to_text(bpath)
                files[f"mode{r.mode}_{m}"] = bpath
        d = self.to_dict()
        d["files"] = files
        with open(os.path.join(outdir, "report.json"), "w") as fh:
            json.dump(d, fh, indent=1, default=_json_default)
        with open(os.path.join(outdir, "report.txt"), "w") as fh:
            fh.write(self.to_text())
            fh.write("\nfiles:\n" + "".join(f"  {k}: {v}\n" for k, v in files.items()))
        return files


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return str(x)


# --------------------------------------------------------------------------
# verdict logic
# --------------------------------------------------------------------------

def judge(est, times, W, ok, diverged=False):
    """(verdict, margin, exit_time) for one mode and one boundary.

    Any sample outside -> unstable (exit time = first such sample).  Samples
    that could not be projected, or directions where the boundary is capped,
    give indeterminate unless some sample is definitely outside.
    """
    cls = bd.classify_state(est, np.where(ok[:, None], W, np.nan))
    outside = cls == bd.OUTSIDE
    if outside.any():
        verdict, tex = UNSTABLE, float(times[np.argmax(outside)])
    elif diverged:
        verdict, tex = UNSTABLE, float(times[-1])
    elif np.any(cls == bd.INDETERMINATE):
        verdict, tex = INDETERMINATE, None
    else:
        verdict, tex = STABLE, None
    Wok = W[ok]
    if est.level is not None and est.critical_value:
        margin = float(np.max(est.level(Wok)) / est.effective_critical) if Wok.size else math.nan
    else:
        if Wok.size:
            r = np.hypot(Wok[:, 0], Wok[:, 1])
            R = np.array([est.radius_at(math.atan2(y, x)) for x, y in Wok])
            margin = float(np.max(np.where(np.isfinite(R), r / R, 0.0)))
        else:
            margin = math.nan
    margin = max(margin, 0.0) if math.isfinite(margin) else margin
    return verdict, margin, tex


def _overall(results):
    verdicts = [r.verdict for r in results]
    if UNSTABLE in verdicts:
        first = min((r for r in results if r.verdict == UNSTABLE),
                    key=lambda r: (r.exit_time, r.mode))
        return UNSTABLE, first.mode
    if INDETERMINATE in verdicts:
        return INDETERMINATE, None
    return STABLE, None


def _is_settled(traj):
    """Reference trajectory sanity check: finite and relative angles bounded."""
    if traj.diverged:
        return False
    m = traj.dim // 2
    d = traj.states[:, :m]
    rel = d - d.mean(axis=1, keepdims=True)
    return bool(np.all(np.isfinite(rel)) and np.max(np.abs(rel)) < math.pi)


def _run(sys, scn, procedure, interest, k, methods, shrink, guess, cfg, phi, L, M,
         force, reference, scale_sim, traj, model):
    sys = scn.postfault if sys is None else sys
    sys, _ = require_uniform_damping(sys, force=force)
    methods = [bd.method_name(m) for m in (methods or ("first_integral",))]
    if model is None:
        pre_modes = eigen_decompose(state_jacobian(
            sys, find_equilibrium(sys, np.zeros(sys.m) if guess is None else guess).delta))
        ids = resolve_modes(pre_modes, interest)
        model = prepare(sys, guess, k, ids, force)
    else:
        ids = resolve_modes(model.modes, interest)
        if list(model.mode_ids) != ids:
            raise TSAError("prepared model does not hold the requested modes")
    if traj is None:
        traj = run_contingency(scn, guess)
    energy = None
    if shrink:
        ref = traj if reference is None else reference
        if not _is_settled(ref):
            raise TSAError("shrinking needs a stable reference trajectory")
        energy = fit_modal_amplitudes(ref, model.modes, sys.H, gamma=float(np.mean(sys.D / sys.M)))
    Wmodes, ok = project_states(model.chain, traj.states, ids)
    results = []
    for mode in ids:
        osc = model.oscillators[mode]
        W = Wmodes[mode]
        r_i = energy.ratio(mode) if energy is not None else None
        ests, verdicts, margins, exits, clear = {}, {}, {}, {}, {}
        for m in methods:
            est = bd.estimate(osc, m, cfg, phi, L, M)
            if r_i is not None and est.level is not None and est.critical_value is not None:
                est = est.shrunk(r_i)
            elif r_i is not None and m == "sim_search" and scale_sim:
                est = est.scaled_polygon(math.sqrt(r_i))
            v, margin, tex = judge(est, traj.times, W, ok, traj.diverged)
            ests[m], verdicts[m], margins[m], exits[m] = est, v, margin, tex
            clear[m] = str(bd.classify_state(est, W[0])) if ok[0] else bd.INDETERMINATE
        results.append(ModeResult(mode, complex(osc.eigenvalue), ests, W, ok, traj.times,
                                  verdicts, margins, exits, clear, r_i, osc))
    verdict, violating = _overall(results)
    prov = {"procedure": procedure, "k": k, "methods": methods, "modes": ids,
            "scenario": scn.id, "shrink_ratios": None if energy is None else
            {int(i): float(energy.ratio(i)) for i in ids},
            "decoupling_residual": model.chain.meta.get("decoupling_residual"),
            "sim_scaled": bool(scale_sim and shrink)}
    return TSAReport(results, verdict, violating, prov, energy, traj)


def nmd_tsa_1(sys, scn, k=3, methods=("first_integral",), guess=None, cfg=None,
              phi=bd.DEFAULT_PHI, L=16, M=None, force=False, traj=None, model=None):
    """All m-1 modes; stable iff no projected sample leaves any boundary."""
    return _run(sys, scn, "1", None, k, methods, False, guess, cfg, phi, L, M, force, None,
                False, traj, model)


def nmd_tsa_2(sys, scn, interest=None, k=3, methods=("first_integral",), shrink=False,
              guess=None, cfg=None, phi=bd.DEFAULT_PHI, L=16, M=None, force=False,
              reference=None, scale_sim=False, traj=None, model=None):
    """Modes of interest only (2a); with ``shrink`` the critical levels are
    scaled by the modal energy ratios of a stable reference trajectory (2b)."""
    return _run(sys, scn, "2b" if shrink else "2a", interest, k, methods, shrink, guess, cfg,
                phi, L, M, force, reference, scale_sim, traj, model)
