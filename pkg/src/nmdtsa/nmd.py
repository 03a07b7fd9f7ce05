"""Nonlinear modal decoupling.

Starting from a modal field z' = Lambda z + F_2(z) + ... + F_k(z), each
degree d = 2..k is cleaned of inter-modal monomials by a near-identity map
z_old = z_new + h_d(z_new).  A monomial is inter-modal for a row of mode i
when it contains any variable of another mode.  Intra-modal monomials are
left untouched (h = 0 on them), so the decoupled field keeps them unchanged
at the degree where they first appear.

Each decoupled complex pair is then turned into a real oscillator with

    w_1 = lam z_1 + conj(lam) z_2,    w_2 = z_1 + z_2,

so that w_1' = 2 Re(lam) w_1 - |lam|^2 w_2 + ... and w_2' = w_1 + ....
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .modal import ComplexModalSystem, ModeSet
from .poly import (PolyVectorField, compose_near_identity, linear_change, monomial_basis,
                   PRUNE_TOL)

log = logging.getLogger(__name__)


class ResonanceError(ArithmeticError):
    pass


class OscillatorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HomogeneousMap:
    degree: int
    field: PolyVectorField

    @property
    def dim(self):
        return self.field.dim

    def dense(self, basis):
        return self.field.to_dense(basis)

    def __call__(self, z):
        return _eval_complex(self.field, z)

    def jacobian(self, Z):
        """dh_r/dz_j for a batch of points, shape (B, n, n)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        f = self.field
        J = np.zeros((Z.shape[0], f.nrows, f.dim), dtype=complex)
        for j in range(f.dim):
            e = f.exps[:, j]
            sel = e > 0
            if not sel.any():
                continue
            ex = f.exps[sel].copy()
            ex[:, j] -= 1
            J[:, :, j] = _kernels.np_poly_eval(ex, f.coef[:, sel] * e[sel], Z)
        return J


def _eval_complex(f, Z):
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    if f.exps.shape[0] == 0:
        return np.zeros((Z.shape[0], f.nrows), dtype=complex)
    return _kernels.np_poly_eval(f.exps, f.coef.astype(complex), Z)


def _intermodal_mask(basis, var_mode, row_mode):
    """Monomials containing any variable outside ``row_mode``."""
    foreign = var_mode != row_mode
    return np.any(basis.exps[:, foreign] != 0, axis=1)


def homological_solve(coefs, eigenvalues, row, var_mode=None, degree=None,
                      resonance_tol=1e-6):
    """h-coefficients cancelling the inter-modal terms of one row.

    ``coefs`` is a dense coefficient vector over ``monomial_basis(n, order)``
    (only the entries of the requested degree are used).  Returns a vector of
    the same shape.
    """
    lam = np.asarray(eigenvalues)
    n = lam.size
    var_mode = np.repeat(np.arange(n // 2), 2) if var_mode is None else np.asarray(var_mode)
    coefs = np.asarray(coefs)
    order = _order_from_size(n, coefs.size)
    basis = monomial_basis(n, order)
    sel = basis.degree >= 2 if degree is None else basis.degree == degree
    sel &= _intermodal_mask(basis, var_mode, var_mode[row])
    sel &= coefs != 0
    h = np.zeros(basis.size, dtype=complex)
    for t in np.flatnonzero(sel):
        den = basis.exps[t] @ lam - lam[row]
        if abs(den) <= resonance_tol * abs(lam[row]):
            raise ResonanceError(
                f"resonance in row {row}, monomial {tuple(int(v) for v in basis.exps[t])}: "
                f"<alpha, lambda> - lambda_r = {den:.3e}")
        h[t] = coefs[t] / den
    return h


def _order_from_size(n, size):
    k = 0
    while monomial_basis(n, k).size < size:
        k += 1
    if monomial_basis(n, k).size != size:
        raise ValueError("coefficient vector does not match any monomial basis")
    return k


def _fixed_point(hmap, target, tol, max_iter):
    """Damped fixed point z <- y - h(z); step halved when |h(z)| > |z|/2."""
    Zn = target.copy()
    done = np.zeros(target.shape[0], dtype=bool)
    failed = np.zeros_like(done)
    scale = np.maximum(1.0, np.linalg.norm(target, axis=1))
    for _ in range(max_iter):
        act = np.flatnonzero(~done & ~failed)
        if act.size == 0:
            break
        z = Zn[act]
        hz = hmap(z)
        step = target[act] - hz - z
        nz = np.linalg.norm(z, axis=1)
        beta = np.where(np.linalg.norm(hz, axis=1) > 0.5 * nz, 0.5, 1.0)[:, None]
        Zn[act] = z + beta * step
        with np.errstate(invalid="ignore", over="ignore"):
            done[act] = np.linalg.norm(step, axis=1) <= tol * scale[act]
            failed[act] = ~np.isfinite(Zn[act]).all(axis=1) | (nz > 1e6 * scale[act])
    return Zn, done & ~failed


def _newton(hmap, target, Z0, tol, max_iter):
    Z = Z0.copy()
    n = Z.shape[1]
    scale = np.maximum(1.0, np.linalg.norm(target, axis=1))
    ok = np.zeros(Z.shape[0], dtype=bool)
    eye = np.eye(n)
    for _ in range(max_iter):
        F = Z + hmap(Z) - target
        with np.errstate(invalid="ignore", over="ignore"):
            ok = np.linalg.norm(F, axis=1) <= tol * scale
            bad = ~np.isfinite(Z).all(axis=1)
        act = ~ok & ~bad
        if not act.any():
            break
        J = hmap.jacobian(Z[act]) + eye
        try:
            Z[act] = Z[act] - np.linalg.solve(J, F[act][..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
    return Z, ok & np.isfinite(Z).all(axis=1)


def _newton_fill(hmap, target, Zn, done, tol, max_iter):
    Zn = Zn.copy()
    done = done.copy()
    idx = np.flatnonzero(~done)
    z, ok = _newton(hmap, target[idx], target[idx], tol, max_iter)
    Zn[idx[ok]] = z[ok]
    done[idx[ok]] = True
    # continuation along the sample order (trajectories are continuous)
    for i in np.flatnonzero(~done):
        nb = [j for j in (i - 1, i + 1) if 0 <= j < len(done) and done[j]]
        if not nb:
            continue
        z, ok = _newton(hmap, target[i:i + 1], Zn[nb[0]:nb[0] + 1], tol, max_iter)
        if ok[0]:
            Zn[i] = z[0]
            done[i] = True
    return Zn, done


@dataclass(frozen=True, eq=False)
class TransformChain:
    """Everything needed to move states between coordinate systems.

    ``cols`` are the columns of the modal matrix that were kept (two per
    retained mode); ``maps`` are H_2 .. H_k in application order.
    """

    modes: ModeSet
    cols: tuple
    mode_ids: tuple
    eigenvalues: np.ndarray
    maps: tuple
    order: int
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return len(self.cols)

    def real_transform(self, p):
        lam = self.eigenvalues[2 * p]
        return np.array([[lam, np.conj(lam)], [1.0, 1.0]])

    # -- coordinate maps ---------------------------------------------------
    def to_modal(self, states):
        """Delta-frame states (SEP removed) -> retained modal coordinates."""
        X = np.atleast_2d(states)
        return X @ self.modes.Rinv[list(self.cols), :].T

    def from_modal(self, Y):
        return np.real(np.atleast_2d(Y) @ self.modes.R[:, list(self.cols)].T)

    def forward(self, Zk):
        """Decoupled coordinates z^(k) -> modal coordinates y = z^(1)."""
        Z = np.atleast_2d(np.asarray(Zk, dtype=complex))
        for hmap in reversed(self.maps):
            Z = Z + hmap(Z)
        return Z

    def inverse(self, Y, tol=1e-12, max_iter=50, newton=True):
        """Modal y -> decoupled z^(k), inverting H_2 .. H_k in turn.

        Each z + h(z) = y is solved by damped fixed-point iteration.  Samples
        where that does not converge (strong cubic terms from lightly damped
        modes shrink its contraction region) are retried with Newton, first
        from y and then continued from the nearest converged sample.
        Returns (Z, ok) where ok flags samples solved at every stage.
        """
        Z = np.atleast_2d(np.asarray(Y, dtype=complex)).copy()
        ok = np.ones(Z.shape[0], dtype=bool)
        for hmap in self.maps:
            Zn, done = _fixed_point(hmap, Z, tol, max_iter)
            if newton and not done.all():
                Zn, done = _newton_fill(hmap, Z, Zn, done, tol, max_iter)
            ok &= done
            Z = Zn
        return Z, ok

    def to_real(self, Z, p):
        P = self.real_transform(p)
        return (np.atleast_2d(Z)[:, 2 * p:2 * p + 2] @ P.T)

    def from_real(self, W, p):
        Pinv = np.linalg.inv(self.real_transform(p))
        return np.atleast_2d(W) @ Pinv.T

    # -- serialization -----------------------------------------------------
    def to_dict(self):
        def cplx(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}
        return {
            "order": self.order,
            "cols": list(self.cols),
            "mode_ids": list(self.mode_ids),
            "eigenvalues": cplx(self.eigenvalues),
            "modes": {"eigenvalues": cplx(self.modes.eigenvalues), "R": cplx(self.modes.R),
                      "n_modes": self.modes.n_modes, "n_mean": self.modes.n_mean,
                      "A": self.modes.A.tolist()},
            "maps": [{"degree": m.degree, "exps": m.field.exps.tolist(),
                      "coef": cplx(m.field.coef)} for m in self.maps],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        def cplx(x):
            return np.array(x["re"]) + 1j * np.array(x["im"])
        md = d["modes"]
        R = cplx(md["R"])
        modes = ModeSet(cplx(md["eigenvalues"]), R, np.linalg.inv(R), md["n_modes"],
                        md["n_mean"], np.array(md["A"]))
        n = len(d["cols"])
        maps = tuple(HomogeneousMap(m["degree"], PolyVectorField(
            np.array(m["exps"], dtype=np.int64).reshape(-1, n), cplx(m["coef"]).reshape(n, -1),
            m["degree"], paired=True)) for m in d["maps"])
        return cls(modes, tuple(d["cols"]), tuple(d["mode_ids"]), cplx(d["eigenvalues"]), maps,
                   d["order"], d.get("meta", {}))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def intermodal_residual(sys):
    """Largest |coefficient| of an inter-modal term in a modal system."""
    f = sys.field
    var_mode = sys.var_mode()
    worst = 0.0
    for r in range(f.nrows):
        foreign = var_mode != var_mode[r]
        mask = np.any(f.exps[:, foreign] != 0, axis=1) & (f.degrees >= 2)
        if mask.any():
            worst = max(worst, float(np.max(np.abs(f.coef[r, mask]))))
    return worst


def nmd_decouple(sys, order=None, resonance_tol=1e-6):
    """Remove inter-modal terms degree by degree; returns (chain, decoupled system)."""
    k = sys.field.order if order is None else order
    if k < 2:
        raise ValueError("decoupling order must be at least 2")
    if k > sys.field.order:
        raise ValueError(f"field is only known to order {sys.field.order}")
    n = sys.dim
    lam = np.asarray(sys.eigenvalues)
    A = sys.field.linear_part()
    if np.max(np.abs(A - np.diag(lam))) > 1e-8 * max(1.0, np.max(np.abs(lam))):
        raise ValueError("modal system linear part is not diagonal")
    basis = monomial_basis(n, k)
    f = PolyVectorField(sys.field.exps, sys.field.coef, sys.field.order, True)
    if f.order > k:
        from .poly import truncate
        f = truncate(f, k)
    # pin the linear part to diag(lam): the homological denominators use
    # lam, and with small ones (|<alpha, lam> - lam_r| ~ damping) any
    # rounding-level mismatch would leave inter-modal residue above 1e-12
    F0 = f.to_dense(basis)
    F0[:, 1:1 + n] = np.diag(lam)
    f = PolyVectorField.from_dense(basis, F0, paired=True, tol=0.0)
    var_mode = sys.var_mode()
    maps = []
    for d in range(2, k + 1):
        F = f.to_dense(basis)
        H = np.zeros((n, basis.size), dtype=complex)
        for r in range(n):
            H[r] = homological_solve(F[r], lam, r, var_mode, degree=d,
                                     resonance_tol=resonance_tol)
        hfield = PolyVectorField.from_dense(basis, H, paired=True, tol=0.0)
        hmap = HomogeneousMap(d, PolyVectorField(hfield.exps, hfield.coef, d, True))
        maps.append(hmap)
        if np.any(H):
            f = compose_near_identity(f, hmap)
            f = PolyVectorField(f.exps, f.coef, k, True)
    out = ComplexModalSystem(f, lam, sys.mode_ids, sys.modes)
    residual = intermodal_residual(out)
    log.debug("decoupling residual %.3e", residual)
    cols = tuple(sys.modes.columns(sys.mode_ids))
    chain = TransformChain(sys.modes, cols, tuple(sys.mode_ids), lam, tuple(maps), k,
                           {"decoupling_residual": residual})
    return chain, out


# --------------------------------------------------------------------------
# real oscillators
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RealOscillator:
    """Decoupled second-order system of one mode.

    ``row1[(j, l)]`` is the coefficient of w1^j w2^l in w1', ``row2`` the
    same for w2' (whose linear part is exactly w1).
    """

    mode: int
    eigenvalue: complex
    order: int
    row1: dict
    row2: dict

    @property
    def frequency_hz(self):
        return abs(self.eigenvalue.imag) / (2 * np.pi)

    @property
    def field(self):
        return PolyVectorField.from_terms([self.row1, self.row2], 2, self.order, float)

    def __call__(self, w):
        from .poly import evaluate
        return evaluate(self.field, w)

    def v(self, j, l, row=1):
        return (self.row1 if row == 1 else self.row2).get((j, l), 0.0)

    def table(self):
        """(row, j, l, v) entries sorted for dumping."""
        out = []
        for row, terms in ((1, self.row1), (2, self.row2)):
            for (j, l), c in sorted(terms.items(), key=lambda kv: (sum(kv[0]), -kv[0][0])):
                out.append((row, j, l, c))
        return out

    def to_dict(self):
        return {"mode": self.mode, "eigenvalue": [self.eigenvalue.real, self.eigenvalue.imag],
                "order": self.order,
                "row1": [[j, l, c] for (j, l), c in self.row1.items()],
                "row2": [[j, l, c] for (j, l), c in self.row2.items()]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mode"], complex(*d["eigenvalue"]), d["order"],
                   {(int(j), int(l)): float(c) for j, l, c in d["row1"]},
                   {(int(j), int(l)): float(c) for j, l, c in d["row2"]})


def to_real_oscillator(pair, eigenvalue, mode=0, imag_tol=1e-9):
    """Real-valued (w1, w2) form of one decoupled complex pair."""
    lam = complex(eigenvalue)
    if abs(lam.imag) == 0:
        raise OscillatorError("eigenvalue has zero imaginary part")
    if pair.dim != 2 or pair.nrows != 2:
        raise OscillatorError("expected a two-variable complex pair")
    if lam.imag < 0:
        lam = lam.conjugate()
        # keep (lam, conj lam) ordering by swapping variables and rows
        pair = PolyVectorField(pair.exps[:, ::-1], pair.coef[::-1], pair.order, True)
    P = np.array([[lam, lam.conjugate()], [1.0, 1.0]])
    g = linear_change(pair, np.linalg.inv(P), P)
    scale = max(1.0, float(np.max(np.abs(g.coef)))) if g.coef.size else 1.0
    imag = float(np.max(np.abs(g.coef.imag))) if g.coef.size else 0.0
    if imag > imag_tol * scale:
        raise OscillatorError(f"imaginary residue {imag:.3e} in real oscillator coefficients")
    rows = [{}, {}]
    for t, e in enumerate(g.exps.tolist()):
        for r in range(2):
            c = float(g.coef[r, t].real)
            if abs(c) > PRUNE_TOL * scale:
                rows[r][(e[0], e[1])] = c
    # linear part identities
    if abs(rows[1].get((1, 0), 0.0) - 1.0) > 1e-8 or abs(rows[1].get((0, 1), 0.0)) > 1e-8 * scale:
        raise OscillatorError("second row linear part is not w1")
    rows[1][(1, 0)] = 1.0
    rows[1].pop((0, 1), None)
    return RealOscillator(mode, lam, pair.order, rows[0], rows[1])


def oscillators(chain, decoupled, imag_tol=1e-9):
    """One RealOscillator per retained mode, keyed by mode id."""
    out = {}
    for p, mode in enumerate(decoupled.mode_ids):
        pair = decoupled.pair_field(p)
        out[mode] = to_real_oscillator(pair, decoupled.eigenvalues[2 * p], mode, imag_tol)
    return out


# --------------------------------------------------------------------------
# trajectory projection
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Projection:
    times: np.ndarray
    w: np.ndarray          # (samples, 2) real oscillator coordinates
    ok: np.ndarray         # False where the inversion failed
    mode: int


def project_states(chain, states, modes=None):
    """Map Delta-frame states to (w1, w2) for each requested mode.

    Returns ({mode: W}, ok)."""
    Y = chain.to_modal(states)
    Z, ok = chain.inverse(Y)
    modes = chain.mode_ids if modes is None else modes
    out = {}
    for mode in modes:
        p = chain.mode_ids.index(mode)
        W = chain.to_real(Z, p)
        out[mode] = np.real(W)
    return out, ok


def project_trajectory(chain, traj, mode):
    W, ok = project_states(chain, traj.states, [mode])
    w = W[mode]
    w[~ok] = np.nan
    return Projection(traj.times, w, ok, mode)


def lift_decoupled(chain, Zk):
    """Decoupled complex coordinates -> Delta frame (mean motion zero)."""
    return chain.from_modal(chain.forward(Zk))
