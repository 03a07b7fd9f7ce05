"""Truncated multivariate polynomial vector fields.

A ``PolyVectorField`` stores one shared list of monomials (exponent rows in
graded-lex order) and a coefficient matrix with one row per field component.
Algebra (products, composition, linear substitution) runs on a dense
``MonomialBasis`` of all monomials up to the truncation order, which is cheap
for the small modal systems the decoupling works on.  Large sparse fields,
such as the Taylor expansion of a 48-machine system, are only ever fed
through ``linear_change`` which expands term by term.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

PRUNE_TOL = 1e-14


class PolyError(ValueError):
    pass


# --------------------------------------------------------------------------
# monomial bases
# --------------------------------------------------------------------------

def grlex_exponents(nvars, order, mindeg=0):
    """All exponent vectors with mindeg <= degree <= order in graded-lex order."""
    rows = []
    for d in range(mindeg, order + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), d):
            e = [0] * nvars
            for v in combo:
                e[v] += 1
            rows.append(e)
    return np.array(rows, dtype=np.int64).reshape(-1, nvars)


def grlex_key(e):
    return (int(sum(e)),) + tuple(-int(v) for v in e)


class MonomialBasis:
    """Dense basis of every monomial in ``nvars`` variables up to ``order``."""

    def __init__(self, nvars, order):
        self.nvars = nvars
        self.order = order
        self.exps = grlex_exponents(nvars, order)
        self.degree = self.exps.sum(axis=1)
        self.size = len(self.exps)
        self.index = {tuple(e): i for i, e in enumerate(self.exps.tolist())}
        self._table = None
        self._deriv = None

    @property
    def table(self):
        # product index for every pair, -1 when the degree overflows
        if self._table is None:
            T = self.size
            table = np.full((T, T), -1, dtype=np.int64)
            exps = self.exps.tolist()
            deg = self.degree
            for i in range(T):
                ei = exps[i]
                for j in range(i, T):
                    if deg[i] + deg[j] > self.order:
                        break
                    k = self.index[tuple(a + b for a, b in zip(ei, exps[j]))]
                    table[i, j] = k
                    table[j, i] = k
            self._table = table
        return self._table

    @property
    def deriv(self):
        """(target index, multiplier) per variable for d/dx_j."""
        if self._deriv is None:
            out = []
            for j in range(self.nvars):
                idx = np.full(self.size, -1, dtype=np.int64)
                mult = np.zeros(self.size)
                for t, e in enumerate(self.exps.tolist()):
                    if e[j] > 0:
                        e2 = list(e)
                        e2[j] -= 1
                        idx[t] = self.index[tuple(e2)]
                        mult[t] = e[j]
                out.append((idx, mult))
            self._deriv = out
        return self._deriv

    def mul(self, p, q):
        nzp = np.flatnonzero(p)
        nzq = np.flatnonzero(q)
        out = np.zeros(self.size, dtype=np.result_type(p, q))
        if nzp.size == 0 or nzq.size == 0:
            return out
        idx = self.table[np.ix_(nzp, nzq)]
        vals = np.multiply.outer(p[nzp], q[nzq])
        mask = idx >= 0
        np.add.at(out, idx[mask], vals[mask])
        return out

    def diff(self, p, j):
        idx, mult = self.deriv[j]
        out = np.zeros(self.size, dtype=p.dtype)
        sel = idx >= 0
        np.add.at(out, idx[sel], p[sel] * mult[sel])
        return out

    def linear(self, vec):
        """Polynomial of the linear form sum_j vec_j x_j."""
        out = np.zeros(self.size, dtype=np.result_type(vec, float))
        out[1:1 + self.nvars] = vec if self.order >= 1 else 0
        # degree-1 monomials come right after the constant, x_1 first
        return out

    def variable(self, j, dtype=float):
        out = np.zeros(self.size, dtype=dtype)
        out[self.index[tuple(int(k == j) for k in range(self.nvars))]] = 1
        return out

    def degree_mask(self, d):
        return self.degree == d

    def compose(self, coef, maps):
        """rows of ``coef`` evaluated at polynomial arguments ``maps`` (nvars x size)."""
        coef = np.atleast_2d(coef)
        dtype = np.result_type(coef, maps)
        used = np.flatnonzero(np.any(coef != 0, axis=0))
        powers = {}

        def power(j, e):
            key = (j, e)
            if key not in powers:
                if e == 1:
                    powers[key] = np.asarray(maps[j], dtype=dtype)
                else:
                    powers[key] = self.mul(power(j, e - 1), maps[j])
            return powers[key]

        out = np.zeros((coef.shape[0], self.size), dtype=dtype)
        one = np.zeros(self.size, dtype=dtype)
        one[0] = 1
        for t in used:
            term = one
            for j, e in enumerate(self.exps[t]):
                if e:
                    term = self.mul(term, power(j, int(e))) if term is not one else power(j, int(e))
            out += np.multiply.outer(coef[:, t], term)
        return out


@functools.lru_cache(maxsize=64)
def monomial_basis(nvars, order):
    return MonomialBasis(nvars, order)


# --------------------------------------------------------------------------
# vector fields
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PolyVectorField:
    """Polynomial vector field truncated at ``order``.

    ``exps`` is (T, N) with unique rows in graded-lex order; ``coef`` is
    (rows, T).  ``paired`` marks complex fields whose component 2i+1 is the
    conjugate of component 2i under the swap of variables 2i and 2i+1.
    """

    exps: np.ndarray
    coef: np.ndarray
    order: int
    paired: bool = False

    def __post_init__(self):
        exps = np.asarray(self.exps, dtype=np.int64)
        coef = np.asarray(self.coef)
        if coef.ndim != 2 or exps.ndim != 2 or coef.shape[1] != exps.shape[0]:
            raise PolyError(f"shape mismatch: exps {exps.shape}, coef {coef.shape}")
        if exps.size and exps.sum(axis=1).max() > self.order:
            raise PolyError("stored monomial exceeds the truncation order")
        object.__setattr__(self, "exps", exps)
        object.__setattr__(self, "coef", coef)

    @property
    def dim(self):
        return self.exps.shape[1]

    @property
    def nrows(self):
        return self.coef.shape[0]

    @property
    def is_complex(self):
        return np.iscomplexobj(self.coef)

    @property
    def degrees(self):
        return self.exps.sum(axis=1)

    @classmethod
    def from_terms(cls, rows, dim, order, dtype=float, paired=False):
        """Build from a list of {exponent tuple: coefficient} dicts."""
        keys = sorted({tuple(int(v) for v in k) for r in rows for k in r}, key=grlex_key)
        index = {k: i for i, k in enumerate(keys)}
        coef = np.zeros((len(rows), len(keys)), dtype=dtype)
        for r, terms in enumerate(rows):
            for k, c in terms.items():
                coef[r, index[tuple(int(v) for v in k)]] += c
        exps = np.array(keys, dtype=np.int64).reshape(-1, dim)
        return cls(exps, coef, order, paired).pruned()

    @classmethod
    def from_dense(cls, basis, coef, paired=False, tol=PRUNE_TOL):
        coef = np.atleast_2d(coef)
        keep = np.any(np.abs(coef) > tol, axis=0)
        c = np.where(np.abs(coef[:, keep]) > tol, coef[:, keep], 0)
        return cls(basis.exps[keep], c, basis.order, paired)

    def to_dense(self, basis=None):
        basis = basis or monomial_basis(self.dim, self.order)
        out = np.zeros((self.nrows, basis.size), dtype=self.coef.dtype)
        for t, e in enumerate(self.exps.tolist()):
            out[:, basis.index[tuple(e)]] += self.coef[:, t]
        return out

    def pruned(self, tol=PRUNE_TOL):
        c = np.where(np.abs(self.coef) > tol, self.coef, 0)
        keep = np.any(c != 0, axis=0)
        return PolyVectorField(self.exps[keep], c[:, keep], self.order, self.paired)

    def terms(self, row):
        out = {}
        for t in np.flatnonzero(self.coef[row]):
            out[tuple(int(v) for v in self.exps[t])] = self.coef[row, t]
        return out

    def coefficient(self, row, exponent):
        exponent = tuple(int(v) for v in exponent)
        for t, e in enumerate(self.exps.tolist()):
            if tuple(e) == exponent:
                return self.coef[row, t]
        return 0.0

    def degree_part(self, d):
        sel = self.degrees == d
        return PolyVectorField(self.exps[sel], self.coef[:, sel], self.order, self.paired)

    def census(self):
        """Number of nonzero coefficients per degree."""
        deg = self.degrees
        return {int(d): int(np.count_nonzero(self.coef[:, deg == d]))
                for d in np.unique(deg)}

    def linear_part(self):
        """Jacobian at the origin as a (rows, dim) matrix."""
        A = np.zeros((self.nrows, self.dim), dtype=self.coef.dtype)
        for t, e in enumerate(self.exps):
            if e.sum() == 1:
                A[:, int(np.argmax(e))] += self.coef[:, t]
        return A

    def __call__(self, x):
        return evaluate(self, x)

    def dump(self):
        """Debug listing, one ``row, exponents, coefficient`` line per term."""
        lines = []
        for r in range(self.nrows):
            for t, e in enumerate(self.exps.tolist()):
                c = self.coef[r, t]
                if c != 0:
                    lines.append(f"{r}, {tuple(e)}, {c!r}")
        return "\n".join(lines)


def evaluate(f, x, backend=None):
    x = np.asarray(x)
    if x.shape[-1] != f.dim:
        raise PolyError(f"point has dimension {x.shape[-1]}, field has {f.dim}")
    single = x.ndim == 1
    dtype = np.result_type(f.coef, x, float)
    out = _kernels.poly_eval(f.exps, f.coef.astype(dtype), np.atleast_2d(x).astype(dtype),
                             backend=backend)
    return out[0] if single else out


def truncate(f, order):
    if order > f.order:
        raise PolyError(f"cannot truncate order-{f.order} field to higher order {order}")
    sel = f.degrees <= order
    return PolyVectorField(f.exps[sel], f.coef[:, sel], order, f.paired)


def linear_change(f, T_in, T_out, order=None, extra_check=None):
    """Field g(y) = T_out @ f(T_in @ y), expanded and truncated.

    ``T_in`` is (N, n); the result lives in n variables with T_out.shape[0] rows.
    """
    T_in = np.asarray(T_in)
    T_out = np.asarray(T_out)
    if T_in.shape[0] != f.dim or T_out.shape[1] != f.nrows:
        raise PolyError("transformation shapes do not match the field")
    order = f.order if order is None else order
    n = T_in.shape[1]
    basis = monomial_basis(n, order)
    dtype = np.result_type(f.coef, T_in, T_out, float)
    lin = [basis.linear(T_in[j].astype(dtype)) for j in range(f.dim)]
    powers = {}

    def power(j, e):
        if (j, e) not in powers:
            powers[(j, e)] = lin[j] if e == 1 else basis.mul(power(j, e - 1), lin[j])
        return powers[(j, e)]

    S = np.zeros((f.exps.shape[0], basis.size), dtype=dtype)
    for t, e in enumerate(f.exps):
        nz = np.flatnonzero(e)
        if nz.size == 0:
            S[t, 0] = 1
            continue
        term = power(int(nz[0]), int(e[nz[0]]))
        for j in nz[1:]:
            term = basis.mul(term, power(int(j), int(e[j])))
        S[t] = term
    dense = T_out.astype(dtype) @ (f.coef.astype(dtype) @ S)
    return PolyVectorField.from_dense(basis, dense)


def substitute_linear(f, T):
    """Field of y where x = T y, i.e. g(y) = T^-1 f(T y)."""
    T = np.asarray(T)
    if T.shape != (f.dim, f.dim) or f.nrows != f.dim:
        raise PolyError("substitute_linear needs a square field and matrix")
    if np.linalg.cond(T) > 1e13:
        raise PolyError("transformation matrix is singular")
    return linear_change(f, T, np.linalg.inv(T))


def _maps_identity_plus(basis, h_dense):
    maps = np.array(h_dense, copy=True)
    for j in range(basis.nvars):
        maps[j] = maps[j] + basis.variable(j, maps.dtype)
    return maps


def jacobian_apply(basis, h_dense, v_dense):
    """(Dh) v as polynomials: row r = sum_j dh_r/dz_j * v_j."""
    out = np.zeros((h_dense.shape[0], basis.size), dtype=np.result_type(h_dense, v_dense))
    for r in range(h_dense.shape[0]):
        if not np.any(h_dense[r]):
            continue
        for j in range(basis.nvars):
            d = basis.diff(h_dense[r], j)
            if np.any(d):
                out[r] += basis.mul(d, v_dense[j])
    return out


def compose_near_identity(f, h, direction="forward"):
    """Rewrite a field under the near-identity map z_old = z_new + h(z_new).

    ``direction="forward"`` takes f in old coordinates and returns the field
    in new coordinates (the decoupling step).  ``"backward"`` takes a field in
    new coordinates and returns it in old coordinates.  Everything is kept
    modulo degree order+1.
    """
    basis = monomial_basis(f.dim, f.order)
    hd = h.dense(basis) if hasattr(h, "dense") else np.asarray(h)
    if hasattr(h, "degree") and not 2 <= h.degree <= f.order:
        raise PolyError(f"map degree {h.degree} outside 2..{f.order}")
    F = f.to_dense(basis)
    dtype = np.result_type(F, hd)
    F = F.astype(dtype)
    hd = hd.astype(dtype)
    if not np.any(hd):
        return PolyVectorField.from_dense(basis, F, f.paired)
    if direction == "forward":
        if F.shape[0] == basis.nvars:
            # split off the diagonal linear part Lz: L h - Dh (L z) is
            # (lam_r - <alpha, lam>) h per monomial, and forming it in one
            # product keeps the cancellation against the field's own
            # coefficients at rounding level (anything off the diagonal
            # goes through the generic composition below)
            lam = np.diag(F[:, 1:1 + basis.nvars]).copy()
            lin = np.zeros_like(F)
            lin[:, 1:1 + basis.nvars] = np.diag(lam)
            comm = (lam[:, None] - (basis.exps @ lam)[None, :]) * hd
            G = basis.compose(F - lin, _maps_identity_plus(basis, hd)) + comm
            w = G.copy()
            for _ in range(f.order):
                w = G - jacobian_apply(basis, hd, w)
            return PolyVectorField.from_dense(basis, lin + w, f.paired)
        G = basis.compose(F, _maps_identity_plus(basis, hd))
        # solve (I + Dh) v = G by fixed point; each pass gains >= 1 degree
        v = G.copy()
        for _ in range(f.order):
            v = G - jacobian_apply(basis, hd, v)
        return PolyVectorField.from_dense(basis, v, f.paired)
    if direction == "backward":
        # inverse map z_new = Ginv(z_old) as a truncated series
        ident = _maps_identity_plus(basis, np.zeros_like(hd))
        ginv = ident.copy()
        for _ in range(f.order):
            ginv = ident - basis.compose(hd, ginv)
        w = F + jacobian_apply(basis, hd, F)
        return PolyVectorField.from_dense(basis, basis.compose(w, ginv), f.paired)
    raise PolyError(f"unknown direction {direction!r}")


# --------------------------------------------------------------------------
# Taylor expansion of swing dynamics
# --------------------------------------------------------------------------

def _trig_derivative(func, n, theta):
    # n-th derivative of sin/cos at theta
    shift = theta + n * math.pi / 2
    return math.sin(shift) if func == "sin" else math.cos(shift)


def taylor_expand(rhs, center, order=3, tol=1e-9):
    """Analytic Taylor expansion about an equilibrium, constant term removed.

    ``rhs`` is a ``ClassicalSystem`` (swing dynamics, coefficients from the
    closed-form derivatives of sin/cos) or a square matrix A for the linear
    field x' = A x.  For a classical system ``center`` may be a full state or
    just the angle vector.  A relative equilibrium with a common residual
    acceleration is accepted: that constant only feeds the mean motion.
    """
    if order < 2:
        raise PolyError("Taylor order must be at least 2")
    if not hasattr(rhs, "network"):
        A = np.asarray(rhs, dtype=float)
        n = A.shape[0]
        rows = [{tuple(int(k == j) for k in range(n)): A[i, j]
                 for j in range(n) if A[i, j] != 0} for i in range(n)]
        return PolyVectorField.from_terms(rows, n, order)

    from .model import swing_rhs  # local: model has no dependency on poly

    sys = rhs
    m = sys.m
    center = np.asarray(center, dtype=float)
    delta0 = center[:m]
    speed0 = center[m:] if center.size == 2 * m else np.zeros(m)
    res = swing_rhs(sys, np.concatenate((delta0, speed0)))
    # equilibrium up to a uniform (mean-motion) drift
    drift = np.concatenate((res[:m] - res[0], res[m:] - res[m]))
    if np.max(np.abs(drift)) > tol:
        raise PolyError(f"center is not an equilibrium (residual {np.max(np.abs(drift)):.3e})")

    net = sys.network
    M = sys.M
    scale = sys.omega_s / M
    N = 2 * m
    rows = [dict() for _ in range(N)]
    for i in range(m):
        rows[i][_unit(N, m + i)] = 1.0
        if sys.D[i] != 0:
            rows[m + i][_unit(N, m + i)] = -sys.D[i] / M[i]
    for i in range(m):
        row = rows[m + i]
        for j in range(m):
            if j == i or (net.a[i, j] == 0 and net.b[i, j] == 0):
                continue
            theta = delta0[i] - delta0[j]
            for n in range(1, order + 1):
                c = (net.a[i, j] * _trig_derivative("sin", n, theta)
                     + net.b[i, j] * _trig_derivative("cos", n, theta)) / math.factorial(n)
                c *= -scale[i]
                if c == 0:
                    continue
                # (x_i - x_j)^n expanded binomially
                for q in range(n + 1):
                    e = [0] * N
                    e[i] += n - q
                    e[j] += q
                    key = tuple(e)
                    row[key] = row.get(key, 0.0) + c * math.comb(n, q) * (-1) ** q
    return PolyVectorField.from_terms(rows, N, order)


def _unit(n, j):
    return tuple(int(k == j) for k in range(n))
