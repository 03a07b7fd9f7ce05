"""Eigenanalysis, modal coordinates and mode selection.

Eigenvector convention: each oscillatory right eigenvector is scaled so that
the largest pairwise difference of its displacement block, v_j - v_k with
j < k, equals exactly 1.  In the linear regime the real oscillator coordinate
w_2 of a mode is then the relative angle of its most strongly swinging pair
of machines (for a two-machine system, exactly the relative angle).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .poly import PolyVectorField, linear_change


class ModalError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Oscillatory modes plus the mean-motion pair of a state matrix.

    Columns of ``R`` are ordered (v_1, conj v_1, v_2, conj v_2, ...,
    mean-motion columns); ``eigenvalues`` follows the same order.
    """

    eigenvalues: np.ndarray
    R: np.ndarray
    Rinv: np.ndarray
    n_modes: int
    n_mean: int
    A: np.ndarray

    @property
    def mode_eigenvalues(self):
        return self.eigenvalues[0:2 * self.n_modes:2]

    @property
    def frequencies(self):
        return self.mode_eigenvalues.imag / (2 * np.pi)

    @property
    def damping_ratios(self):
        lam = self.mode_eigenvalues
        return -lam.real / np.abs(lam)

    @property
    def mean_eigenvalues(self):
        return self.eigenvalues[2 * self.n_modes:]

    def columns(self, modes):
        cols = []
        for i in modes:
            cols += [2 * i, 2 * i + 1]
        return cols

    def table(self):
        rows = []
        for i, lam in enumerate(self.mode_eigenvalues):
            rows.append({"mode": i, "frequency_hz": float(lam.imag / (2 * np.pi)),
                         "damping_ratio": float(-lam.real / abs(lam)),
                         "eigenvalue": complex(lam)})
        return rows

    def format_table(self):
        lines = ["mode  frequency_hz  damping_ratio  eigenvalue"]
        for r in self.table():
            lam = r["eigenvalue"]
            lines.append(f"{r['mode']:>4d}  {r['frequency_hz']:12.6f}  {r['damping_ratio']:13.6e}"
                         f"  {lam.real:+.6e}{lam.imag:+.6e}j")
        return "\n".join(lines)

    def find_mode(self, frequency_hz):
        return int(np.argmin(np.abs(self.frequencies - frequency_hz)))


def _normalize(v, half):
    disp = v[:half] if half >= 1 else v
    if disp.size >= 2:
        diff = disp[:, None] - disp[None, :]
        iu = np.triu_indices(disp.size, 1)
        mags = np.abs(diff[iu])
        k = int(np.argmax(mags))
        ref = diff[iu][k]
    else:
        ref = disp[0]
    if abs(ref) < 1e-300:
        ref = v[np.argmax(np.abs(v))]
    return v / ref


def eigen_decompose(A, imag_tol=1e-7, residual_tol=1e-8):
    """Conjugate-paired modes of A plus up to two mean-motion eigenvalues.

    A state matrix [[0, I], [-K, -gamma I]] of a uniformly damped classical
    system has two real mean-motion eigenvalues at 0 and -gamma; everything
    else must be oscillatory.
    """
    A = np.asarray(A, dtype=float)
    N = A.shape[0]
    if A.shape != (N, N) or N % 2:
        raise ModalError(f"state matrix must be square with even size, got {A.shape}")
    lam, VL, V = linalg.eig(A, left=True)
    scale = max(1.0, np.max(np.abs(lam)))
    osc = np.flatnonzero(lam.imag > imag_tol * scale)
    real = np.flatnonzero(np.abs(lam.imag) <= imag_tol * scale)
    if real.size not in (0, 2):
        raise ModalError(f"unexpected non-oscillatory eigenvalues: {lam[real]}")
    if 2 * osc.size + real.size != N:
        raise ModalError("eigenvalues are not in conjugate pairs")
    # frequency ascending, ties broken by damping
    order = sorted(osc, key=lambda k: (round(lam[k].imag, 10), -lam[k].real))
    half = N // 2
    cols, vals = [], []
    for k in order:
        v = _normalize(V[:, k], half)
        res = np.linalg.norm(A @ v - lam[k] * v) / np.linalg.norm(v)
        if res > residual_tol * scale:
            raise ModalError(f"eigenvector residual {res:.2e} for eigenvalue {lam[k]}")
        cols += [v, v.conj()]
        vals += [lam[k], np.conj(lam[k])]
    n_mean = real.size
    if n_mean:
        mlam = lam[real].real
        mlam = mlam[np.argsort(-mlam)]  # 0 first, then -gamma
        if abs(mlam[0] - mlam[1]) > 1e-6 * scale:
            for mu in mlam:
                w = linalg.null_space(A - mu * np.eye(N), rcond=1e-9)
                if w.shape[1] != 1:
                    raise ModalError("mean-motion eigenvalue is not simple")
                w = w[:, 0]
                w = w / w[np.argmax(np.abs(w))]
                cols.append(w.astype(complex))
                vals.append(complex(mu))
        else:
            # defective (zero damping): take the invariant subspace that the
            # oscillatory left eigenvectors annihilate
            left = VL[:, osc].conj().T
            W = linalg.null_space(np.vstack([left.real, left.imag]), rcond=1e-9)
            if W.shape[1] != 2:
                raise ModalError("could not isolate the mean-motion subspace")
            for j in range(2):
                cols.append(W[:, j].astype(complex))
                vals.append(complex(mlam[j]))
    R = np.array(cols).T
    if np.linalg.cond(R) > 1e12:
        raise ModalError("modal matrix is singular")
    Rinv = np.linalg.inv(R)
    return ModeSet(np.array(vals), R, Rinv, len(order), n_mean, A)


@dataclass(frozen=True, eq=False)
class ComplexModalSystem:
    """Polynomial field in complex modal coordinates (conjugate-paired).

    Variables 2p and 2p+1 belong to retained mode ``mode_ids[p]``.
    """

    field: PolyVectorField
    eigenvalues: np.ndarray
    mode_ids: tuple
    modes: ModeSet

    @property
    def dim(self):
        return self.field.dim

    @property
    def n_modes(self):
        return len(self.mode_ids)

    def var_mode(self):
        return np.repeat(np.arange(self.n_modes), 2)

    def pair_field(self, p):
        """Rows and variables of retained mode position p only."""
        keep_vars = [2 * p, 2 * p + 1]
        others = [v for v in range(self.dim) if v not in keep_vars]
        sel = ~np.any(self.field.exps[:, others] != 0, axis=1) if others else np.ones(
            self.field.exps.shape[0], bool)
        exps = self.field.exps[sel][:, keep_vars]
        coef = self.field.coef[keep_vars][:, sel]
        return PolyVectorField(exps, coef, self.field.order, paired=True).pruned()


def to_modal(f, modes, interest=None, coupling_tol=1e-9):
    """Field in modal coordinates with the mean motion removed.

    ``interest`` restricts the substitution to a subset of modes, which is the
    same as ``select_modes`` applied afterwards but never forms the full
    modal field (this is what makes large systems tractable).
    """
    interest = list(range(modes.n_modes)) if interest is None else sorted(set(interest))
    if not interest:
        raise ModalError("mode selection is empty")
    if f.dim != modes.R.shape[0]:
        raise ModalError("field and modal matrix dimensions differ")
    cols = modes.columns(interest)
    mean = list(range(2 * modes.n_modes, 2 * modes.n_modes + modes.n_mean))
    allcols = cols + mean
    g = linear_change(f, modes.R[:, allcols], modes.Rinv[allcols, :])
    n = len(cols)
    if mean:
        touches_mean = np.any(g.exps[:, n:] != 0, axis=1)
        leak = np.abs(g.coef[:n][:, touches_mean])
        scale = max(1.0, np.max(np.abs(g.coef[:n]))) if g.coef.size else 1.0
        if leak.size and leak.max() > coupling_tol * scale:
            raise ModalError(f"mean motion couples into relative motion (max {leak.max():.3e}); "
                             "is the damping uniform?")
        exps = g.exps[~touches_mean][:, :n]
        coef = g.coef[:n][:, ~touches_mean]
        g = PolyVectorField(exps, coef, f.order, paired=True).pruned()
    else:
        g = PolyVectorField(g.exps, g.coef, f.order, paired=True)
    lam = modes.eigenvalues[cols]
    A = g.linear_part()
    off = np.max(np.abs(A - np.diag(lam))) if A.size else 0.0
    if off > 1e-8 * max(1.0, np.max(np.abs(lam))):
        raise ModalError(f"modal linear part is not diagonal (deviation {off:.3e})")
    return ComplexModalSystem(g, lam, tuple(interest), modes)


def select_modes(sys, interest):
    """Keep only the modes of interest, setting the other modal variables to zero."""
    interest = [int(i) for i in interest]
    if not interest:
        raise ModalError("mode selection is empty")
    pos = []
    for i in interest:
        if i not in sys.mode_ids:
            raise ModalError(f"mode {i} is not part of this modal system")
        pos.append(sys.mode_ids.index(i))
    keep = []
    for p in pos:
        keep += [2 * p, 2 * p + 1]
    drop = [v for v in range(sys.dim) if v not in keep]
    f = sys.field
    sel = ~np.any(f.exps[:, drop] != 0, axis=1) if drop else np.ones(f.exps.shape[0], bool)
    field = PolyVectorField(f.exps[sel][:, keep], f.coef[keep][:, sel], f.order,
                            paired=True).pruned()
    return ComplexModalSystem(field, sys.eigenvalues[keep], tuple(sys.mode_ids[p] for p in pos),
                              sys.modes)
