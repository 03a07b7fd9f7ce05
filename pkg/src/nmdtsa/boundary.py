"""Stability boundaries of a real (w1, w2) oscillator.

Three estimates:

sim_search
    march along M rays from the origin, simulating the oscillator and backing
    off with a halved step whenever the w2 excursion exceeds a threshold.
first_integral
    drop damping and all w1-dependent nonlinear terms, leaving a conservative
    system with energy V = w1^2/2 - sum_l v_0l/(l+1) w2^(l+1).  The critical
    energy is the smaller of the energies of the closest UEPs on each side.
zubov
    truncated power-series solution of grad V . f = -phi (1 - V); the
    critical level is the minimum of V over the set where dV/dt = 0.

Directions are measured in the (w1, w2) plane: angle theta corresponds to
the unit vector (cos theta, sin theta).
"""
from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .poly import grlex_exponents

log = logging.getLogger(__name__)


class BoundaryError(ValueError):
    pass


class ZubovError(BoundaryError):
    pass


# --------------------------------------------------------------------------
# bivariate polynomials
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LevelFunction:
    """Real polynomial V(w1, w2) stored as exponent pairs and coefficients."""

    terms: dict
    name: str = ""

    def __post_init__(self):
        clean = {(int(j), int(l)): float(c) for (j, l), c in self.terms.items() if c != 0}
        if not all(math.isfinite(c) for c in clean.values()):
            raise BoundaryError("level function has non-finite coefficients")
        object.__setattr__(self, "terms", clean)

    @property
    def degree(self):
        return max((j + l for j, l in self.terms), default=0)

    def coefficient(self, j, l):
        return self.terms.get((j, l), 0.0)

    def _arrays(self):
        keys = sorted(self.terms, key=lambda e: (e[0] + e[1], -e[0]))
        exps = np.array(keys, dtype=np.int64).reshape(-1, 2)
        return exps, np.array([self.terms[k] for k in keys])

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        single = w.ndim == 1
        W = np.atleast_2d(w)
        exps, coef = self._arrays()
        if exps.shape[0] == 0:
            out = np.zeros(W.shape[0])
        else:
            out = _kernels.np_monomials(exps, W) @ coef
        return out[0] if single else out

    def radial(self, theta):
        """Coefficients c[d] with V(r cos t, r sin t) = sum_d c[d] r^d."""
        c = np.zeros(self.degree + 1)
        ct, st = math.cos(theta), math.sin(theta)
        for (j, l), v in self.terms.items():
            c[j + l] += v * ct ** j * st ** l
        return c

    def lie_derivative(self, osc):
        """dV/dt along the oscillator field, as a LevelFunction."""
        out = {}
        f = (osc.row1, osc.row2)
        for (j, l), v in self.terms.items():
            for var, (dj, dl, pw) in enumerate(((1, 0, j), (0, 1, l))):
                if pw == 0:
                    continue
                base = (j - dj, l - dl)
                for (a, b), c in f[var].items():
                    key = (base[0] + a, base[1] + b)
                    out[key] = out.get(key, 0.0) + pw * v * c
        return LevelFunction(out, f"d/dt {self.name}")

    def to_dict(self):
        return {"name": self.name, "terms": [[j, l, c] for (j, l), c in sorted(self.terms.items())]}

    @classmethod
    def from_dict(cls, d):
        return cls({(j, l): c for j, l, c in d["terms"]}, d.get("name", ""))


def _positive_roots(c, rmin=0.0, rmax=np.inf, imag_tol=1e-7):
    """Real roots of sum c[d] r^d in (rmin, rmax], ascending."""
    c = np.asarray(c, dtype=float)
    # drop leading (high-degree) coefficients that are negligible over the
    # search radius, otherwise np.roots loses every root to cancellation
    R = min(rmax, 1e6)
    mags = np.abs(c) * R ** np.arange(c.size)
    keep = np.flatnonzero(mags > 1e-15 * mags.sum())
    if keep.size == 0:
        return np.empty(0)
    c = c[:keep[-1] + 1]
    if c.size <= 1:
        return np.empty(0)
    r = np.roots(c[::-1])
    r = r[np.abs(r.imag) <= imag_tol * np.maximum(1.0, np.abs(r))].real
    r = r[(r > rmin) & (r <= rmax)]
    return np.sort(_polish(c, r))


def _polish(c, roots, iters=3):
    if roots.size == 0:
        return roots
    dc = np.arange(1, c.size) * c[1:]
    r = roots.copy()
    for _ in range(iters):
        p = np.polyval(c[::-1], r)
        dp = np.polyval(dc[::-1], r)
        ok = dp != 0
        trial = r.copy()
        trial[ok] -= p[ok] / dp[ok]
        # near a double root (tangency) dp ~ 0 and Newton overshoots; keep
        # only steps that shrink the residual and stay local
        better = (np.abs(np.polyval(c[::-1], trial)) < np.abs(p)) & \
            (np.abs(trial - r) <= 1e-3 * np.maximum(1.0, np.abs(r)))
        r = np.where(better, trial, r)
    return r


def level_radius(V, theta, level, rmax=np.inf):
    """Innermost r > 0 where V(r n) = level along direction theta (inf if none)."""
    c = V.radial(theta)
    c[0] -= level
    roots = _positive_roots(c, 0.0, rmax)
    return float(roots[0]) if roots.size else math.inf


# --------------------------------------------------------------------------
# estimate container
# --------------------------------------------------------------------------

METHODS = ("sim_search", "first_integral", "zubov")
_ALIASES = {"sim": "sim_search", "fi": "first_integral", "zubov": "zubov",
            "sim_search": "sim_search", "first_integral": "first_integral"}


def method_name(m):
    try:
        return _ALIASES[m]
    except KeyError:
        raise BoundaryError(f"unknown boundary method {m!r}") from None


@dataclass(frozen=True, eq=False)
class BoundaryEstimate:
    """One boundary of one mode.

    ``radii`` holds the polyline radius per ray (inf where the boundary is
    unbounded up to the radius cap); ``angles`` are in radians.
    """

    method: str
    angles: np.ndarray
    radii: np.ndarray
    level: LevelFunction | None = None
    critical_value: float | None = None
    shrink_ratio: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise BoundaryError(f"unknown method {self.method!r}")
        if not 0 < self.shrink_ratio <= 1:
            raise BoundaryError("shrink ratio must be in (0, 1]")

    @property
    def effective_critical(self):
        if self.critical_value is None:
            return None
        return self.shrink_ratio * self.critical_value

    @property
    def bounded(self):
        return bool(np.any(np.isfinite(self.radii)))

    @property
    def polyline(self):
        r = self.radii
        return np.column_stack((r * np.cos(self.angles), r * np.sin(self.angles)))

    def radius_at(self, theta):
        """Boundary radius in direction theta (exact for level sets)."""
        if self.level is not None and self.critical_value is not None:
            cap = self.meta.get("radius_cap", np.inf)
            r = level_radius(self.level, theta, self.effective_critical, cap)
            return r
        if self.level is not None:
            return math.inf
        return _interp_radius(self.angles, self.radii, theta)

    def shrunk(self, ratio):
        """Same estimate with the critical level scaled by ``ratio``."""
        if self.level is None:
            raise BoundaryError("shrinking applies to level-set boundaries")
        b = replace(self, shrink_ratio=float(ratio))
        radii = np.array([b.radius_at(t) for t in self.angles]) if b.critical_value is not None \
            else self.radii
        return replace(b, radii=radii)

    def scaled_polygon(self, factor):
        """Sim-search polygon scaled radially (optional extension of shrinking)."""
        return replace(self, radii=self.radii * factor,
                       meta=dict(self.meta, radial_scale=float(factor)))

    # -- export ------------------------------------------------------------
    def to_text(self, path=None):
        buf = io.StringIO()
        meta = {"method": self.method, "critical_value": self.critical_value,
                "shrink_ratio": self.shrink_ratio, **self.meta}
        if self.level is not None:
            meta["level"] = self.level.to_dict()
        buf.write("# " + json.dumps(meta, default=_jsonable) + "\n")
        buf.write("angle_deg, w1, w2, level_value\n")
        P = self.polyline
        lv = self.level(np.nan_to_num(P, posinf=0.0)) if self.level is not None \
            else np.full(len(P), np.nan)
        lv = np.where(np.isfinite(self.radii), lv, np.nan)
        for a, (x, y), v in zip(np.degrees(self.angles), P, lv):
            buf.write(f"{a:.10g}, {x:.17g}, {y:.17g}, {v:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_text(cls, path):
        with open(path) as fh:
            meta = json.loads(fh.readline()[1:])
            fh.readline()
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        level = LevelFunction.from_dict(meta.pop("level")) if "level" in meta else None
        method = meta.pop("method")
        crit = meta.pop("critical_value")
        shrink = meta.pop("shrink_ratio")
        angles = np.radians(data[:, 0])
        radii = np.hypot(data[:, 1], data[:, 2])
        radii[~np.isfinite(data[:, 1])] = np.inf
        return cls(method, angles, radii, level, crit, shrink, meta)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


def _interp_radius(angles, radii, theta):
    """Linear interpolation of the polygon radius between adjacent rays."""
    a = np.asarray(angles)
    two_pi = 2 * math.pi
    t = theta % two_pi
    k = np.searchsorted(a, t, side="right") - 1
    k0 = int(k) % a.size
    k1 = (k0 + 1) % a.size
    a0 = a[k0]
    a1 = a[k1] if k1 > k0 else a[k1] + two_pi
    if t < a0:
        t += two_pi
    r0, r1 = radii[k0], radii[k1]
    if not (math.isfinite(r0) and math.isfinite(r1)):
        return math.inf
    u = 0.0 if a1 == a0 else (t - a0) / (a1 - a0)
    return float((1 - u) * r0 + u * r1)


def ray_angles(M):
    return 2 * math.pi * np.arange(M) / M


# --------------------------------------------------------------------------
# simulation-based search
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    M: int = 180
    s0: float = 0.1
    horizon: float = 5.0
    eps: float = 0.01
    instability_gap: float = math.radians(750.0)
    step: float = 5e-4
    radius_cap: float = 1e3
    guard: float = _kernels.OVERFLOW_GUARD

    def __post_init__(self):
        if self.M < 8:
            raise BoundaryError("need at least 8 rays")
        if not self.s0 > self.eps > 0:
            raise BoundaryError("need s0 > eps > 0")
        if not self.horizon > 0 or not self.step > 0:
            raise BoundaryError("horizon and step must be positive")


def search_boundary_sim(osc, cfg=SearchConfig(), backend=None):
    """Ray march with step halving; all rays advance together."""
    if osc.eigenvalue.real > 0:
        raise BoundaryError("oscillator equilibrium is unstable")
    f = osc.field
    angles = ray_angles(cfg.M)
    N = np.column_stack((np.cos(angles), np.sin(angles)))
    s = np.full(cfg.M, cfg.s0)
    w0 = s[:, None] * N
    active = np.ones(cfg.M, dtype=bool)
    unbounded = np.zeros(cfg.M, dtype=bool)
    nsteps = int(round(cfg.horizon / cfg.step))
    sims = 0
    while active.any():
        idx = np.flatnonzero(active)
        exceeded = _kernels.rk4_gap(f.exps, f.coef.real.astype(float), w0[idx], cfg.step, nsteps,
                                    1, cfg.instability_gap, cfg.guard, backend)
        sims += idx.size
        done = s[idx] < cfg.eps
        for k, ray in enumerate(idx):
            if done[k]:
                active[ray] = False
                continue
            if exceeded[k]:
                w0[ray] -= s[ray] * N[ray]
                s[ray] *= 0.5
            w0[ray] += s[ray] * N[ray]
            if np.hypot(*w0[ray]) > cfg.radius_cap:
                unbounded[ray] = True
                active[ray] = False
    radii = np.hypot(w0[:, 0], w0[:, 1])
    radii[unbounded] = np.inf
    meta = {"M": cfg.M, "s0": cfg.s0, "eps": cfg.eps, "horizon": cfg.horizon,
            "instability_gap": cfg.instability_gap, "step": cfg.step,
            "radius_cap": cfg.radius_cap, "simulations": sims,
            "unbounded_rays": int(unbounded.sum())}
    if unbounded.any():
        log.info("%d of %d rays unbounded up to radius %g", unbounded.sum(), cfg.M,
                 cfg.radius_cap)
    return BoundaryEstimate("sim_search", angles, radii, meta=meta)


# --------------------------------------------------------------------------
# first integral
# --------------------------------------------------------------------------

def conservative_part(osc):
    """Coefficients v_0l of the w2-only terms of row 1, l = 1..order."""
    return np.array([osc.v(0, l) for l in range(1, osc.order + 1)])


def first_integral(osc):
    v0 = conservative_part(osc)
    terms = {(2, 0): 0.5}
    for l, v in enumerate(v0, start=1):
        if v:
            terms[(0, l + 1)] = -v / (l + 1)
    return LevelFunction(terms, "first integral")


def first_integral_boundary(osc, M=180, radius_cap=1e3):
    """Energy-type boundary from the conservative part of the oscillator."""
    V = first_integral(osc)
    v0 = conservative_part(osc)
    # equilibria of w1' = sum_l v_0l w2^l, excluding w2 = 0
    roots = np.roots(v0[::-1]) if np.any(v0[1:]) else np.empty(0)
    roots = roots[np.abs(roots.imag) <= 1e-9 * np.maximum(1, np.abs(roots))].real
    roots = roots[np.abs(roots) > 1e-12]
    angles = ray_angles(M)
    ueps = []
    pos, neg = roots[roots > 0], roots[roots < 0]
    if pos.size:
        ueps.append(float(pos.min()))
    if neg.size:
        ueps.append(float(neg.max()))
    energies = [float(V([0.0, u])) for u in ueps]
    meta = {"ueps": ueps, "uep_energies": energies, "all_roots": sorted(roots.tolist()),
            "radius_cap": radius_cap, "M": M}
    if not ueps:
        log.info("no finite UEP: first-integral boundary is unbounded")
        return BoundaryEstimate("first_integral", angles, np.full(M, np.inf), V, None, 1.0,
                                dict(meta, note="no finite UEP"))
    crit = min(energies)
    radii = np.array([level_radius(V, t, crit, radius_cap) for t in angles])
    return BoundaryEstimate("first_integral", angles, radii, V, crit, 1.0, meta)


# --------------------------------------------------------------------------
# Zubov series
# --------------------------------------------------------------------------

DEFAULT_PHI = (0.0002, 0.001)


def _lie_linear_matrix(A, d):
    """Matrix of V_d -> grad V_d . (A w) on homogeneous degree-d polynomials."""
    exps = [tuple(e) for e in grlex_exponents(2, d, d).tolist()]
    index = {e: i for i, e in enumerate(exps)}
    n = len(exps)
    Lm = np.zeros((n, n))
    for col, e in enumerate(exps):
        for i in range(2):
            if e[i] == 0:
                continue
            for j in range(2):
                if A[i, j] == 0:
                    continue
                t = list(e)
                t[i] -= 1
                t[j] += 1
                Lm[index[tuple(t)], col] += e[i] * A[i, j]
    return Lm, exps


def _poly_mul(p, q, maxdeg):
    out = {}
    for (a, b), c in p.items():
        for (x, y), v in q.items():
            if a + b + x + y <= maxdeg:
                k = (a + x, b + y)
                out[k] = out.get(k, 0.0) + c * v
    return out


def _gradient_dot(V, f, deg):
    """Degree-``deg`` part of grad V . f (V, f as term dicts)."""
    out = {}
    for (j, l), v in V.items():
        for var, pw, dj, dl in ((0, j, 1, 0), (1, l, 0, 1)):
            if pw == 0:
                continue
            for (a, b), c in f[var].items():
                if j - dj + a + l - dl + b != deg:
                    continue
                k = (j - dj + a, l - dl + b)
                out[k] = out.get(k, 0.0) + pw * v * c
    return out


def zubov_series(osc, phi=DEFAULT_PHI, L=16, resonance_tol=1e-9):
    """Truncated series V = V_2 + ... + V_L solving grad V . f = -phi (1 - V).

    ``phi`` is (c1, c2) for phi = c1 w1^2 + c2 w2^2, or a dict of degree-2
    terms.
    """
    if L < 2:
        raise ZubovError("series length L must be at least 2")
    if osc.eigenvalue.real >= 0:
        raise ZubovError("Zubov requires damped oscillator (Re lambda < 0)")
    phi2 = phi if isinstance(phi, dict) else {(2, 0): float(phi[0]), (0, 2): float(phi[1])}
    if any(j + l != 2 for j, l in phi2):
        raise ZubovError("phi must be a quadratic form")
    f = (osc.row1, osc.row2)
    A = np.array([[osc.v(1, 0), osc.v(0, 1)], [osc.v(1, 0, 2), osc.v(0, 1, 2)]])
    mu = np.linalg.eigvals(A)
    scale = float(np.max(np.abs(mu)))
    parts = {}
    for var in range(2):
        for (a, b), c in f[var].items():
            parts.setdefault(a + b, ({}, {}))[var][(a, b)] = c
    V = {}
    Vdeg = {}
    for d in range(2, L + 1):
        rhs = {}
        if d == 2:
            for k, c in phi2.items():
                rhs[k] = -c
        if d - 2 >= 2 and (d - 2) in Vdeg:
            for k, c in _poly_mul(phi2, Vdeg[d - 2], d).items():
                rhs[k] = rhs.get(k, 0.0) + c
        for q in range(2, d):
            fj = parts.get(d + 1 - q)
            if fj is None or q not in Vdeg:
                continue
            for k, c in _gradient_dot(Vdeg[q], fj, d).items():
                rhs[k] = rhs.get(k, 0.0) - c
        Lm, exps = _lie_linear_matrix(A, d)
        # eigenvalues of the operator are a*mu1 + b*mu2 (a + b = d); the
        # monomial matrix itself is badly scaled, so test these directly
        gaps = [abs(a * mu[0] + (d - a) * mu[1]) for a in range(d + 1)]
        if min(gaps) <= resonance_tol * d * scale:
            if d == 2:
                raise ZubovError("Zubov requires damped oscillator: linear operator singular")
            raise ZubovError(f"Lie operator singular at degree {d} (resonance)")
        b = np.array([rhs.get(e, 0.0) for e in exps])
        x = np.linalg.solve(Lm, b)
        Vdeg[d] = {e: float(c) for e, c in zip(exps, x) if c != 0}
        V.update(Vdeg[d])
    return LevelFunction(V, f"zubov L={L}")


def zubov_residual(V, osc, phi=DEFAULT_PHI):
    """grad V . f + phi (1 - V) as a term dict (should vanish below degree L+1)."""
    phi2 = phi if isinstance(phi, dict) else {(2, 0): float(phi[0]), (0, 2): float(phi[1])}
    out = dict(V.lie_derivative(osc).terms)
    for k, c in phi2.items():
        out[k] = out.get(k, 0.0) + c
    for k, c in _poly_mul(phi2, V.terms, 10 ** 6).items():
        out[k] = out.get(k, 0.0) - c
    return out


def critical_set(V, osc, M=720, rmin=1e-3, radius_cap=1e3):
    """Points of {dV/dt = 0} outside the guard disk, by polar sweep."""
    Vdot = V.lie_derivative(osc)
    pts = []
    for t in ray_angles(M):
        for r in _positive_roots(Vdot.radial(t), rmin, radius_cap):
            pts.append((r * math.cos(t), r * math.sin(t)))
    return np.array(pts).reshape(-1, 2)


def zubov_critical_level(V, osc, M=180, sweep_rays=1440, rmin=1e-3, radius_cap=1e3,
                         refine=True):
    """v = min V over {dV/dt = 0}, and the level-set boundary V = v."""
    Vdot = V.lie_derivative(osc)
    best = (math.inf, None)
    sweep = ray_angles(sweep_rays)
    for t in sweep:
        val = _min_on_ray(V, Vdot, t, rmin, radius_cap)
        if val[0] < best[0]:
            best = (val[0], t)
    angles = ray_angles(M)
    meta = {"L": V.degree, "rmin": rmin, "radius_cap": radius_cap, "sweep_rays": sweep_rays,
            "M": M}
    if best[1] is None:
        log.warning("no critical level found within radius %g", radius_cap)
        return None, BoundaryEstimate("zubov", angles, np.full(M, np.inf), V, None, 1.0,
                                      dict(meta, note="no critical level found"))
    vcrit, tbest = best
    if refine:
        from scipy.optimize import minimize_scalar
        h = 2 * math.pi / sweep_rays
        res = minimize_scalar(lambda t: min(_min_on_ray(V, Vdot, t, rmin, radius_cap)[0], 1e300),
                              bounds=(tbest - h, tbest + h), method="bounded",
                              options={"xatol": 1e-10})
        if res.fun < vcrit:
            vcrit, tbest = float(res.fun), float(res.x)
    rstar = _min_on_ray(V, Vdot, tbest, rmin, radius_cap)[1]
    meta["critical_point"] = [rstar * math.cos(tbest), rstar * math.sin(tbest)]
    radii = np.array([level_radius(V, t, vcrit, radius_cap) for t in angles])
    return vcrit, BoundaryEstimate("zubov", angles, radii, V, float(vcrit), 1.0, meta)


def _min_on_ray(V, Vdot, t, rmin, cap, valid=(0.0, 1.0)):
    """Smallest level at which the sublevel set grown radially from the
    origin reaches a point of {dV/dt = 0} on this ray.

    A Phi point at radius rho is only reached once the level exceeds the
    maximum of V on the segment [0, rho]; far-away Phi points where the
    truncated series dips again are thereby ignored.  Values outside
    ``valid`` (a Zubov function lies in [0, 1) on the basin) are dropped.
    """
    roots = _positive_roots(Vdot.radial(t), rmin, cap)
    if roots.size == 0:
        return math.inf, math.nan
    c = V.radial(t)
    dc = np.arange(1, c.size) * c[1:]
    turns = _positive_roots(dc, 0.0, roots[-1])
    cand = np.concatenate((roots, turns))
    vals_all = np.polyval(c[::-1], cand)
    vals = np.array([vals_all[:roots.size][k] if turns.size == 0 else
                     max(vals_all[k], np.max(vals_all[roots.size:][turns < rho], initial=-np.inf))
                     for k, rho in enumerate(roots)])
    keep = (vals > valid[0]) & (vals < valid[1])
    if not keep.any():
        return math.inf, math.nan
    roots, vals = roots[keep], vals[keep]
    k = int(np.argmin(vals))
    return float(vals[k]), float(roots[k])


def zubov_boundary(osc, phi=DEFAULT_PHI, L=16, M=180, **kw):
    V = zubov_series(osc, phi, L)
    _, est = zubov_critical_level(V, osc, M=M, **kw)
    est.meta["phi"] = list(phi) if not isinstance(phi, dict) else str(phi)
    return est


def estimate(osc, method, cfg=None, phi=DEFAULT_PHI, L=16, M=None):
    method = method_name(method)
    if method == "sim_search":
        cfg = cfg or SearchConfig()
        if M is not None:
            cfg = replace(cfg, M=M)
        return search_boundary_sim(osc, cfg)
    M = M or (cfg.M if cfg else 180)
    if method == "first_integral":
        return first_integral_boundary(osc, M)
    return zubov_boundary(osc, phi, L, M)


# --------------------------------------------------------------------------
# classification
# --------------------------------------------------------------------------

INSIDE, OUTSIDE, INDETERMINATE = "inside", "outside", "indeterminate"


def classify_state(b, w):
    """inside / outside / indeterminate for one point or an array of points."""
    W = np.asarray(w, dtype=float)
    single = W.ndim == 1
    W = np.atleast_2d(W)
    out = np.array([_classify_one(b, p) for p in W], dtype=object)
    return out[0] if single else out


def _classify_one(b, p):
    if not np.all(np.isfinite(p)):
        return INDETERMINATE
    r = math.hypot(p[0], p[1])
    if r == 0.0:
        return INSIDE if (b.critical_value is None or b.effective_critical > 0) else OUTSIDE
    t = math.atan2(p[1], p[0])
    if b.level is not None:
        if b.critical_value is None:
            return INSIDE          # no finite UEP / no critical level: unbounded
        if b.level(p) >= b.effective_critical:
            return OUTSIDE
        # the point must also be in the component containing the origin
        return INSIDE if r < b.radius_at(t) else OUTSIDE
    R = b.radius_at(t)
    if not math.isfinite(R):
        return INDETERMINATE
    return INSIDE if r < R else OUTSIDE


def level_ratio(b, W):
    """level(w) / effective critical along a set of points (level methods)."""
    if b.level is None or not b.critical_value:
        return None
    return b.level(np.atleast_2d(W)) / b.effective_critical
