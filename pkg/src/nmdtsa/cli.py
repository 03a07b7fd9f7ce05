"""Command-line front end.

    nmdtsa modes SYSTEM
    nmdtsa boundary SYSTEM --method fi --modes all --out DIR
    nmdtsa tsa SCENARIO --procedure 1 --method fi,zubov --out DIR
    nmdtsa simulate SCENARIO --out traj.csv
    nmdtsa project SCENARIO --modes 0.96 --out DIR

SYSTEM may also be a scenario file (its post-fault system is used) or the
name of a bundled example (smib.json, ninebus.json, ...).
Exit codes of ``tsa``: 0 stable, 2 unstable, 3 indeterminate; 1 on errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from . import boundary as bd
from .io import FormatError, data_path, load_scenario, load_system
from .modal import eigen_decompose
from .model import ModelError, find_equilibrium, require_uniform_damping, state_jacobian
from .nmd import project_states
from .sim import Trajectory, run_contingency
from .tsa import (INDETERMINATE, STABLE, UNSTABLE, TSAError, fit_modal_amplitudes,
                  nmd_tsa_1, nmd_tsa_2, prepare, resolve_modes)

EXIT = {STABLE: 0, UNSTABLE: 2, INDETERMINATE: 3}

log = logging.getLogger("nmdtsa")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--order", "-k", type=int, default=3, help="truncation order k (default 3)")
    p.add_argument("--method", default="fi",
                   help="comma list of sim, fi, zubov (default fi); the first one decides")
    p.add_argument("--modes", default="all",
                   help="all | comma list of frequencies in Hz | top:N (by energy ratio)")
    p.add_argument("--L", type=int, default=16, help="Zubov series length (default 16)")
    p.add_argument("--phi", default="0.0002,0.001", help="Zubov phi coefficients c1,c2")
    p.add_argument("--rays", type=int, default=180, help="rays M for boundaries (default 180)")
    p.add_argument("--s0", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--search-horizon", type=float, default=5.0)
    p.add_argument("--gap-deg", type=float, default=750.0,
                   help="w2 excursion that marks instability in sim search, degrees")
    p.add_argument("--out", default=None, help="output directory or file")
    p.add_argument("--force-uniform-damping", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="nmdtsa", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    p = sub.add_parser("modes", parents=[common], help="print the oscillatory mode table")
    p.add_argument("system")
    p.add_argument("--json", action="store_true")
    p = sub.add_parser("boundary", parents=[common], help="stability boundaries per mode")
    p.add_argument("system")
    p = sub.add_parser("tsa", parents=[common], help="transient stability verdict")
    p.add_argument("scenario")
    p.add_argument("--procedure", choices=["1", "2a", "2b"], default="1")
    p.add_argument("--scale-sim", action="store_true",
                   help="with 2b, also scale sim-search polygons by sqrt(r)")
    p = sub.add_parser("simulate", parents=[common], help="contingency trajectory to CSV")
    p.add_argument("scenario")
    p = sub.add_parser("project", parents=[common],
                       help="project a contingency trajectory onto decoupled modes")
    p.add_argument("scenario")
    p.add_argument("--trajectory", default=None, help="use this Delta-frame CSV instead")
    return parser


def _methods(args):
    return [bd.method_name(m.strip()) for m in args.method.split(",") if m.strip()]


def _phi(args):
    try:
        c = [float(x) for x in args.phi.split(",")]
    except ValueError:
        raise UsageError("--phi expects two numbers c1,c2") from None
    if len(c) != 2 or min(c) < 0:
        raise UsageError("--phi expects two non-negative numbers c1,c2")
    return tuple(c)


def _cfg(args):
    return bd.SearchConfig(M=args.rays, s0=args.s0, horizon=args.search_horizon, eps=args.eps,
                           instability_gap=np.radians(args.gap_deg))


def _check(args):
    if args.order < 2:
        raise UsageError("--order must be at least 2")
    if args.L < 2:
        raise UsageError("--L must be at least 2")


def _locate(path):
    if os.path.exists(path):
        return path
    try:
        return data_path(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None


def _load_any_system(path):
    path = _locate(path)
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if "machines" in d:
        return load_system(path)
    scn, guess = load_scenario(path)
    return scn.postfault, guess


def _mode_selector(spec, modes, energy=None):
    spec = spec.strip()
    if spec == "all":
        return None
    if spec.startswith("top:"):
        if energy is None:
            raise UsageError("top:N mode selection needs a scenario trajectory")
        n = int(spec[4:])
        order = np.argsort(-energy.ratios)[:n]
        return sorted(int(energy.mode_ids[i]) for i in order)
    try:
        freqs = [float(x) for x in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad --modes value {spec!r}") from None
    return resolve_modes(modes, freqs)


def _outdir(args, default):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_modes(args):
    sys_, guess = _load_any_system(args.system)
    sys_, _ = require_uniform_damping(sys_, force=args.force_uniform_damping)
    eq = find_equilibrium(sys_, np.zeros(sys_.m) if guess is None else guess)
    modes = eigen_decompose(state_jacobian(sys_, eq.delta))
    if args.json:
        rows = [dict(r, eigenvalue=[r["eigenvalue"].real, r["eigenvalue"].imag])
                for r in modes.table()]
        print(json.dumps(rows, indent=1))
    else:
        print(modes.format_table())
    return 0


def cmd_boundary(args):
    sys_, guess = _load_any_system(args.system)
    methods = _methods(args)
    sys_, _ = require_uniform_damping(sys_, force=args.force_uniform_damping)
    eq = find_equilibrium(sys_, np.zeros(sys_.m) if guess is None else guess)
    modes = eigen_decompose(state_jacobian(sys_, eq.delta))
    ids = resolve_modes(modes, _mode_selector(args.modes, modes))
    model = prepare(sys_, guess, args.order, ids, force=args.force_uniform_damping)
    out = _outdir(args, "boundary_out")
    meta = {}
    for mode in ids:
        osc = model.oscillators[mode]
        with open(os.path.join(out, f"mode{mode}_oscillator.json"), "w") as fh:
            json.dump(osc.to_dict(), fh, indent=1)
        for m in methods:
            est = bd.estimate(osc, m, _cfg(args), _phi(args), args.L, args.rays)
            path = os.path.join(out, f"mode{mode}_{m}.csv")
            est.to_text(path)
            meta[f"mode{mode}_{m}"] = {"file": path, "critical_value": est.critical_value,
                                       "frequency_hz": osc.frequency_hz, **{
                                           k: v for k, v in est.meta.items()
                                           if k in ("ueps", "uep_energies", "critical_point",
                                                    "unbounded_rays", "note")}}
            crit = "none" if est.critical_value is None else f"{est.critical_value:.6g}"
            print(f"mode {mode} ({osc.frequency_hz:.4f} Hz) {m}: critical={crit} -> {path}")
    with open(os.path.join(out, "boundaries.json"), "w") as fh:
        json.dump(meta, fh, indent=1, default=str)
    return 0


def cmd_tsa(args):
    scn, guess = load_scenario(_locate(args.scenario))
    methods = _methods(args)
    traj = run_contingency(scn, guess)
    interest = None
    if args.modes != "all":
        eq = find_equilibrium(scn.postfault, np.zeros(scn.postfault.m) if guess is None
                              else guess)
        modes = eigen_decompose(state_jacobian(scn.postfault, eq.delta))
        energy = None
        if args.modes.startswith("top:"):
            energy = fit_modal_amplitudes(traj, modes, scn.postfault.H,
                                          gamma=float(np.mean(scn.postfault.D / scn.postfault.M)))
        interest = _mode_selector(args.modes, modes, energy)
    kw = dict(k=args.order, methods=methods, guess=guess, cfg=_cfg(args), phi=_phi(args),
              L=args.L, M=args.rays, force=args.force_uniform_damping, traj=traj)
    if args.procedure == "1":
        if interest is not None:
            raise UsageError("procedure 1 analyzes all modes; use 2a for a selection")
        rep = nmd_tsa_1(None, scn, **kw)
    else:
        rep = nmd_tsa_2(None, scn, interest, shrink=args.procedure == "2b",
                        scale_sim=args.scale_sim, **kw)
    if args.out:
        rep.save(args.out)
    sys.stdout.write(rep.to_text())
    return EXIT[rep.verdict]


def cmd_simulate(args):
    scn, guess = load_scenario(_locate(args.scenario))
    traj = run_contingency(scn, guess)
    out = args.out or f"{scn.id or 'scenario'}_trajectory.csv"
    if os.path.isdir(out):
        out = os.path.join(out, f"{scn.id or 'scenario'}_trajectory.csv")
    traj.to_csv(out)
    status = "diverged" if traj.diverged else "complete"
    print(f"{len(traj)} samples ({status}) -> {out}")
    return 0


def cmd_project(args):
    scn, guess = load_scenario(_locate(args.scenario))
    if args.trajectory:
        traj = Trajectory.from_csv(args.trajectory)
        if traj.frame != "delta":
            raise UsageError("projection needs a Delta-frame trajectory")
    else:
        traj = run_contingency(scn, guess)
    post = scn.postfault
    eq = find_equilibrium(post, np.zeros(post.m) if guess is None else guess)
    modes = eigen_decompose(state_jacobian(post, eq.delta))
    ids = resolve_modes(modes, _mode_selector(args.modes, modes))
    model = prepare(post, guess, args.order, ids, force=args.force_uniform_damping)
    W, ok = project_states(model.chain, traj.states, ids)
    out = _outdir(args, "project_out")
    for mode in ids:
        w = W[mode].copy()
        w[~ok] = np.nan
        path = os.path.join(out, f"mode{mode}_w.csv")
        Trajectory(traj.times, w, "decoupled-w",
                   {"mode": mode, "unprojectable": int((~ok).sum())}).to_csv(path)
        print(f"mode {mode}: {int(ok.sum())}/{ok.size} samples projected -> {path}")
    return 0


COMMANDS = {"modes": cmd_modes, "boundary": cmd_boundary, "tsa": cmd_tsa,
            "simulate": cmd_simulate, "project": cmd_project}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _check(args)
        return COMMANDS[args.command](args)
    except (UsageError, FormatError, ModelError, TSAError, bd.BoundaryError, ValueError,
            ArithmeticError, OSError) as exc:
        print(f"nmdtsa: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
