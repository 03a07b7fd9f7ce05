"""Hot numeric loops: polynomial field evaluation and fixed-step RK4.

Every kernel exists twice, a numba ``@njit`` version and a vectorised numpy
version with identical semantics.  The numba path is used when numba imports
and the environment variable ``NMDTSA_DISABLE_NUMBA`` is unset (or ``0``).
Set ``NMDTSA_DISABLE_NUMBA=1`` to force the numpy path.
"""
import os

import numpy as np

OVERFLOW_GUARD = 1e8


def _numba_requested():
    flag = os.environ.get("NMDTSA_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by NMDTSA_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# --------------------------------------------------------------------------
# numpy reference implementations
# --------------------------------------------------------------------------

def np_monomials(exps, X):
    """Monomial values for a batch of points, shape (B, T)."""
    X = np.atleast_2d(X)
    out = np.ones((X.shape[0], exps.shape[0]), dtype=X.dtype)
    maxdeg = int(exps.max()) if exps.size else 0
    if maxdeg == 0:
        return out
    # powers[p] = X**p, avoids repeated pow on every term
    powers = [np.ones_like(X), X]
    for _ in range(2, maxdeg + 1):
        powers.append(powers[-1] * X)
    for j in range(exps.shape[1]):
        col = exps[:, j]
        for p in range(1, maxdeg + 1):
            sel = col == p
            if sel.any():
                out[:, sel] *= powers[p][:, j:j + 1]
    return out


def np_poly_eval(exps, coef, X):
    """Evaluate rows of ``coef`` over monomials ``exps`` at points X (B, N)."""
    return np_monomials(exps, X) @ coef.T


def np_rk4_path(exps, coef, x0, dt, nsteps, guard=OVERFLOW_GUARD):
    x = np.array(x0, dtype=np.result_type(coef, x0, float))
    out = np.empty((nsteps + 1, x.size), dtype=x.dtype)
    out[0] = x
    last = nsteps
    for n in range(nsteps):
        k1 = np_poly_eval(exps, coef, x)[0]
        k2 = np_poly_eval(exps, coef, x + 0.5 * dt * k1)[0]
        k3 = np_poly_eval(exps, coef, x + 0.5 * dt * k2)[0]
        k4 = np_poly_eval(exps, coef, x + dt * k3)[0]
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > guard:
            last = n
            break
        out[n + 1] = x
    return out[:last + 1], last


def np_rk4_gap(exps, coef, X0, dt, nsteps, comp, gap, guard=OVERFLOW_GUARD):
    """Batch RK4; flags trajectories whose component ``comp`` spans more than
    ``gap`` (max minus min) or that overflow the guard."""
    X = np.array(X0, dtype=float)
    B = X.shape[0]
    lo = X[:, comp].copy()
    hi = X[:, comp].copy()
    exceeded = np.zeros(B, dtype=bool)
    active = np.arange(B)
    for _ in range(nsteps):
        if active.size == 0:
            break
        x = X[active]
        k1 = np_poly_eval(exps, coef, x)
        k2 = np_poly_eval(exps, coef, x + 0.5 * dt * k1)
        k3 = np_poly_eval(exps, coef, x + 0.5 * dt * k2)
        k4 = np_poly_eval(exps, coef, x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X[active] = x
        c = x[:, comp]
        lo[active] = np.minimum(lo[active], c)
        hi[active] = np.maximum(hi[active], c)
        with np.errstate(invalid="ignore"):
            bad = (~np.isfinite(x).all(axis=1)) | (np.abs(x).max(axis=1) > guard)
            bad |= (hi[active] - lo[active]) > gap
        exceeded[active[bad]] = True
        active = active[~bad]
    return exceeded


def np_swing_rk4(a, b, gself, E, Pm, M, zeta, omega_s, x0, dt, nsteps,
                 guard=OVERFLOW_GUARD):
    m = E.size
    const = E * E * gself

    def rhs(x):
        d = x[:m]
        w = x[m:]
        diff = d[:, None] - d[None, :]
        pe = const + (a * np.sin(diff) + b * np.cos(diff)).sum(axis=1)
        return np.concatenate((w, -(zeta / M) * w - (omega_s / M) * (pe - Pm)))

    x = np.array(x0, dtype=float)
    out = np.empty((nsteps + 1, 2 * m))
    out[0] = x
    last = nsteps
    for n in range(nsteps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > guard:
            last = n
            break
        out[n + 1] = x
    return out[:last + 1], last


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_eval_into(exps, coef, x, out):
        T = exps.shape[0]
        N = exps.shape[1]
        R = coef.shape[0]
        for r in range(R):
            out[r] = 0.0
        for t in range(T):
            mv = x[0] * 0.0 + 1.0
            for j in range(N):
                e = exps[t, j]
                for _ in range(e):
                    mv = mv * x[j]
            for r in range(R):
                c = coef[r, t]
                if c != 0.0:
                    out[r] += c * mv

    @njit(cache=True)
    def nb_poly_eval(exps, coef, X):
        B = X.shape[0]
        out = np.zeros((B, coef.shape[0]), dtype=X.dtype)
        buf = np.zeros(coef.shape[0], dtype=X.dtype)
        for i in range(B):
            _nb_eval_into(exps, coef, X[i], buf)
            out[i, :] = buf
        return out

    @njit(cache=True)
    def _nb_rk4_step(exps, coef, x, dt, k1, k2, k3, k4, tmp):
        """One in-place RK4 step without temporaries."""
        N = x.size
        _nb_eval_into(exps, coef, x, k1)
        for j in range(N):
            tmp[j] = x[j] + 0.5 * dt * k1[j]
        _nb_eval_into(exps, coef, tmp, k2)
        for j in range(N):
            tmp[j] = x[j] + 0.5 * dt * k2[j]
        _nb_eval_into(exps, coef, tmp, k3)
        for j in range(N):
            tmp[j] = x[j] + dt * k3[j]
        _nb_eval_into(exps, coef, tmp, k4)
        bad = False
        for j in range(N):
            x[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            v = abs(x[j])
            if not np.isfinite(v):
                bad = True
        return bad

    @njit(cache=True)
    def nb_rk4_path(exps, coef, x0, dt, nsteps, guard):
        N = x0.size
        out = np.empty((nsteps + 1, N), dtype=x0.dtype)
        x = x0.copy()
        out[0] = x
        k1 = np.empty(N, dtype=x0.dtype)
        k2 = np.empty_like(k1)
        k3 = np.empty_like(k1)
        k4 = np.empty_like(k1)
        tmp = np.empty_like(k1)
        last = nsteps
        for n in range(nsteps):
            bad = _nb_rk4_step(exps, coef, x, dt, k1, k2, k3, k4, tmp)
            for j in range(N):
                if abs(x[j]) > guard:
                    bad = True
            if bad:
                last = n
                break
            out[n + 1] = x
        return out[:last + 1], last

    @njit(cache=True)
    def nb_rk4_gap(exps, coef, X0, dt, nsteps, comp, gap, guard):
        B, N = X0.shape
        exceeded = np.zeros(B, dtype=np.bool_)
        k1 = np.empty(N)
        k2 = np.empty(N)
        k3 = np.empty(N)
        k4 = np.empty(N)
        tmp = np.empty(N)
        x = np.empty(N)
        for i in range(B):
            for j in range(N):
                x[j] = X0[i, j]
            lo = x[comp]
            hi = x[comp]
            for n in range(nsteps):
                bad = _nb_rk4_step(exps, coef, x, dt, k1, k2, k3, k4, tmp)
                c = x[comp]
                if c < lo:
                    lo = c
                if c > hi:
                    hi = c
                if not (hi - lo <= gap):
                    bad = True
                for j in range(N):
                    if abs(x[j]) > guard:
                        bad = True
                if bad:
                    exceeded[i] = True
                    break
        return exceeded

    @njit(cache=True)
    def _nb_swing_rhs(a, b, const, Pm, M, zeta, omega_s, x, out):
        m = const.size
        for i in range(m):
            pe = const[i]
            for j in range(m):
                if j != i:
                    d = x[i] - x[j]
                    pe += a[i, j] * np.sin(d) + b[i, j] * np.cos(d)
            out[i] = x[m + i]
            out[m + i] = -(zeta[i] / M[i]) * x[m + i] - (omega_s / M[i]) * (pe - Pm[i])

    @njit(cache=True)
    def nb_swing_rk4(a, b, gself, E, Pm, M, zeta, omega_s, x0, dt, nsteps, guard):
        n = x0.size
        const = E * E * gself
        out = np.empty((nsteps + 1, n))
        x = x0.copy()
        out[0] = x
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        last = nsteps
        for s in range(nsteps):
            _nb_swing_rhs(a, b, const, Pm, M, zeta, omega_s, x, k1)
            _nb_swing_rhs(a, b, const, Pm, M, zeta, omega_s, x + 0.5 * dt * k1, k2)
            _nb_swing_rhs(a, b, const, Pm, M, zeta, omega_s, x + 0.5 * dt * k2, k3)
            _nb_swing_rhs(a, b, const, Pm, M, zeta, omega_s, x + dt * k3, k4)
            x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            bad = False
            for j in range(n):
                v = abs(x[j])
                if not np.isfinite(v) or v > guard:
                    bad = True
            if bad:
                last = s
                break
            out[s + 1] = x
        return out[:last + 1], last


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def poly_eval(exps, coef, X, backend=None):
    if _use_numba(backend):
        X = np.atleast_2d(np.asarray(X))
        dtype = np.result_type(coef, X, float)
        return nb_poly_eval(np.ascontiguousarray(exps, dtype=np.int64),
                            np.ascontiguousarray(coef, dtype=dtype),
                            np.ascontiguousarray(X, dtype=dtype))
    return np_poly_eval(exps, coef, X)


def rk4_path(exps, coef, x0, dt, nsteps, guard=OVERFLOW_GUARD, backend=None):
    if _use_numba(backend):
        dtype = np.result_type(coef, x0, float)
        return nb_rk4_path(np.ascontiguousarray(exps, dtype=np.int64),
                           np.ascontiguousarray(coef, dtype=dtype),
                           np.ascontiguousarray(x0, dtype=dtype),
                           float(dt), int(nsteps), float(guard))
    return np_rk4_path(exps, coef, x0, dt, nsteps, guard)


def rk4_gap(exps, coef, X0, dt, nsteps, comp, gap, guard=OVERFLOW_GUARD, backend=None):
    if _use_numba(backend):
        return nb_rk4_gap(np.ascontiguousarray(exps, dtype=np.int64),
                          np.ascontiguousarray(coef, dtype=np.float64),
                          np.ascontiguousarray(X0, dtype=np.float64),
                          float(dt), int(nsteps), int(comp), float(gap), float(guard))
    return np_rk4_gap(exps, coef, X0, dt, nsteps, comp, gap, guard)


def swing_rk4(a, b, gself, E, Pm, M, zeta, omega_s, x0, dt, nsteps,
              guard=OVERFLOW_GUARD, backend=None):
    args = [np.ascontiguousarray(v, dtype=np.float64) for v in (a, b, gself, E, Pm, M, zeta)]
    if _use_numba(backend):
        return nb_swing_rk4(*args, float(omega_s),
                            np.ascontiguousarray(x0, dtype=np.float64),
                            float(dt), int(nsteps), float(guard))
    return np_swing_rk4(*args, omega_s, x0, dt, nsteps, guard)


def _use_numba(backend):
    if backend is None:
        return HAVE_NUMBA
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")
