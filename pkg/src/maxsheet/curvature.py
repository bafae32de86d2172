"""Cross-section curvature, mean curvature and blow-up diagnostics.

Conventions for a sheet gamma(s, t) with spatial normal n = gamma_t/|gamma_t|:

* kappa_std = cross(gamma_s, gamma_ss) / |gamma_s|^3 (signed planar curvature),
* k = <gamma_ss, n> / |gamma_s|^2,
* E = |gamma_s|^2, G = |gamma_t|^2 - 1, e = -<gamma_ss, n>/sqrt(1 - |gamma_t|^2),
  g = -<gamma_tt, n>/sqrt(1 - |gamma_t|^2), h = e/E + g/G.

Undefined values are returned as NaN.
"""
from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp
from scipy.interpolate import CubicHermiteSpline

from . import tolerances as tol
from .errors import (NotSingularAnchor, NotTimelike, RequiresPeriodic,
                     SingularOnPath)
from .evolution import fmt
from .initial_data import cross, dot

_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


def _bt(s, t):
    return np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))


def _central(f, s, t, ds, dt, h):
    return (f(s + ds * h, t + dt * h) - f(s - ds * h, t - dt * h)) / (2.0 * h)


def second_derivatives(sheet, s, t, step=None, richardson=True):
    """(gamma_ss, gamma_tt, gamma_st).

    Analytic when the sheet exposes them and no step is forced; otherwise
    centered differences of the first-derivative evaluators, with one
    Richardson level unless `richardson` is False.
    """
    s, t = _bt(s, t)
    if step is None and getattr(sheet, "has_second", False):
        return sheet.dss(s, t), sheet.dtt(s, t), sheet.dst(s, t)
    h = tol.FD_STEP if step is None else step

    def fd(hh):
        return (_central(sheet.ds, s, t, 1, 0, hh),
                _central(sheet.dt, s, t, 0, 1, hh),
                _central(sheet.ds, s, t, 0, 1, hh))

    coarse = fd(h)
    if not richardson:
        return coarse
    fine = fd(0.5 * h)
    return tuple((4.0 * f - c) / 3.0 for f, c in zip(fine, coarse))


@dataclass
class CrossSectionCurvature:
    kappa_std: np.ndarray
    k_paper: np.ndarray


def cross_section_curvature(sheet, s, t, step=None, tau=None):
    """Both curvature conventions of the slice t = const at (s, t)."""
    s, t = _bt(s, t)
    tau = _tau_sing(sheet) if tau is None else tau
    gs = sheet.ds(s, t)
    gt = sheet.dt(s, t)
    gss = second_derivatives(sheet, s, t, step)[0]
    ns = np.linalg.norm(gs, axis=-1)
    nt = np.linalg.norm(gt, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kstd = cross(gs, gss) / ns ** 3
        kp = dot(gss, gt) / nt / ns ** 2
    kstd = np.where(ns > tau, kstd, np.nan)
    kp = np.where((ns > tau) & (nt > tau), kp, np.nan)
    return CrossSectionCurvature(kstd, kp)


def _tau_sing(sheet):
    data = getattr(sheet, "data", None)
    return data.tau_sing if data is not None else tol.SING_ANALYTIC


def mean_curvature_scalar(sheet, s, t, step=None):
    """Mean curvature h = e/E + g/G of the surface phi = (t, gamma)."""
    s, t = _bt(s, t)
    gs = sheet.ds(s, t)
    gt = sheet.dt(s, t)
    gss, gtt, _ = second_derivatives(sheet, s, t, step)
    vt = dot(gt, gt)
    if np.any(vt >= 1.0 - tol.TIMELIKE):
        raise NotTimelike("|gamma_t| reaches 1: the surface is not timelike here")
    nt = np.sqrt(vt)
    with np.errstate(divide="ignore", invalid="ignore"):
        n = gt / nt[..., None]
        root = np.sqrt(1.0 - vt)
        e = -dot(gss, n) / root
        g = -dot(gtt, n) / root
        h = e / dot(gs, gs) + g / (vt - 1.0)
    return np.where(nt > _tau_sing(sheet), h, np.nan)


def blowup_identity_residual(sheet, s0, t, step=tol.FD_STEP):
    """|sqrt(1 - |gamma_t|^2) h + k - <gamma_tt, n>/(1 - |gamma_t|^2)|.

    k comes from the reference second derivatives (analytic when available);
    h and the right-hand side use plain centered differences with `step`, so
    the residual measures their O(step^2) discretization error.
    """
    s0, t = _bt(s0, t)
    gs = sheet.ds(s0, t)
    gt = sheet.dt(s0, t)
    k = cross_section_curvature(sheet, s0, t).k_paper
    gss, gtt, _ = second_derivatives(sheet, s0, t, step, richardson=False)
    vt = dot(gt, gt)
    if np.any(vt >= 1.0 - tol.TIMELIKE):
        raise NotTimelike("|gamma_t| reaches 1: the surface is not timelike here")
    n = gt / np.sqrt(vt)[..., None]
    root = np.sqrt(1.0 - vt)
    h = (-dot(gss, n) / root) / dot(gs, gs) + (-dot(gtt, n) / root) / (vt - 1.0)
    lhs = root * h + k
    rhs = dot(gtt, n) / (1.0 - vt)
    return np.abs(lhs - rhs)


@dataclass
class BlowupIntegral:
    verdict: str
    deltas: np.ndarray
    partial_integrals: np.ndarray
    increments: np.ndarray
    log_model_slope: float
    log_model_r2: float
    mu: np.ndarray = field(default=None, repr=False)


def _abs_kappa(sheet, s0):
    def f(t):
        return float(np.abs(cross_section_curvature(sheet, s0, t, tau=0.0).kappa_std))
    return f


def blowup_integral(sheet, s0, t0, epsilon=0.5, n_windows=24, tau_anchor=1e-8,
                    fit_points=8, growth_factor=1.5, r2_min=0.99):
    """Partial integrals of |kappa(s0, t)| on [t0 - eps, t0 - delta_j].

    delta_j = eps 2^-j.  The verdict is "divergent" when the last three
    increments do not decay by the growth factor (bounded-below increments per
    halving) and the partial integrals follow a linear law in
    -log(1 - |gamma_t(s0, t)|^2) with R^2 >= r2_min; "convergent" when the
    increments decay geometrically; otherwise "inconclusive".
    Negative epsilon approaches t0 from above.
    """
    gs0 = np.linalg.norm(sheet.ds(s0, t0))
    if gs0 > tau_anchor:
        raise NotSingularAnchor(f"|gamma_s({s0:.6g}, {t0:.6g})| = {gs0:.3g} is not singular")
    sgn = 1.0 if epsilon > 0 else -1.0
    eps = abs(epsilon)
    deltas = eps * 0.5 ** np.arange(n_windows + 1)
    f = _abs_kappa(sheet, s0)
    incs = np.empty(n_windows)
    for j in range(1, n_windows + 1):
        a, b = t0 - sgn * deltas[j - 1], t0 - sgn * deltas[j]
        with warnings.catch_warnings():
            # round-off warnings are expected next to the blow-up
            warnings.simplefilter("ignore", IntegrationWarning)
            val, _ = quad(f, min(a, b), max(a, b), epsabs=1e-13, epsrel=1e-12, limit=200)
        incs[j - 1] = val
    partial = np.concatenate([[0.0], np.cumsum(incs)])
    tt = t0 - sgn * deltas
    gt = sheet.dt(np.full_like(tt, s0), tt)
    mu = dot(gt, gt)
    with np.errstate(divide="ignore"):
        model = -np.log(np.maximum(1.0 - mu, 1e-300))
    x = model[-fit_points:]
    y = partial[-fit_points:]
    if np.ptp(x) > 0:
        slope, icpt = np.polyfit(x, y, 1)
        resid = y - (slope * x + icpt)
        sst = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - np.sum(resid ** 2) / sst if sst > 0 else 0.0
    else:
        slope, r2 = 0.0, 0.0
    last = incs[-4:]
    ratios = last[1:] / np.where(last[:-1] > 0, last[:-1], np.inf)
    if np.all(ratios >= 1.0 / growth_factor) and r2 >= r2_min and slope > 0:
        verdict = "divergent"
    elif np.all(ratios <= 1.0 / growth_factor):
        verdict = "convergent"
    else:
        verdict = "inconclusive"
    return BlowupIntegral(verdict, deltas, partial, incs, float(slope), float(r2), mu)


@dataclass
class NormEntry:
    p: float
    q: float
    verdict: str
    last_truncation_value: float
    exponent_estimate: float


@dataclass
class NormTable:
    entries: list

    def to_csv(self):
        buf = io.StringIO()
        buf.write("p,q,verdict,last_truncation_value\n")
        for e in self.entries:
            buf.write(f"{fmt(e.p)},{fmt(e.q)},{e.verdict},{fmt(e.last_truncation_value)}\n")
        return buf.getvalue()

    def lookup(self, p, q):
        for e in self.entries:
            if e.p == p and e.q == q:
                return e
        raise KeyError((p, q))


def mixed_norm_table(sheet, p_list, q_list, t_window, n_halvings=24, n_s=256,
                     critical_band=0.05, min_exponent=0.02, period=None):
    """L^q in time of the L^p-in-arclength norm of kappa over closed slices.

    The time integral runs over t_window = (t_a, t0) towards the singular time
    t0.  Truncations stop at t0 - delta_j with delta_j halving; each halving
    piece is integrated with 16-point Gauss-Legendre in log(t0 - t).  The
    increments of a power-law integrand u^a scale by 2^-(a + 1) per halving, so
    the exponent estimate e = -log2(ratio of the last two increments) is
    positive exactly when the norm is finite.  Pairs with
    |1/p + 1/q - 1| < critical_band, or |e| < min_exponent, are inconclusive.
    """
    if period is None:
        data = getattr(sheet, "data", None)
        period = getattr(data, "period", None) if data is not None else getattr(sheet, "period", None)
    if not period:
        raise RequiresPeriodic("mixed norms need closed (periodic) cross sections")
    t_a, t0 = map(float, t_window)
    sgn = 1.0 if t0 > t_a else -1.0
    base = getattr(getattr(sheet, "data", None), "s_ref", 0.0)
    s = base + period * np.arange(n_s) / n_s
    d0 = abs(t0 - t_a)
    # u nodes on each halving piece [d0 2^-j, d0 2^-(j-1)], in log variable
    logs = np.log(d0) - np.log(2.0) * np.arange(n_halvings + 1)
    lo, hi = logs[1:], logs[:-1]
    w_nodes = lo[:, None] + 0.5 * (hi - lo)[:, None] * (_GL16_X + 1.0)
    u = np.exp(w_nodes)
    jac = 0.5 * (hi - lo)[:, None] * _GL16_W * u        # dt = u dw
    tt = t0 - sgn * u
    S, T = np.meshgrid(s, tt.ravel())
    kap = np.abs(cross_section_curvature(sheet, S, T, tau=0.0).kappa_std)
    speed = np.linalg.norm(sheet.ds(S, T), axis=-1)
    ds = period / n_s
    entries = []
    for p in p_list:
        inner = (np.sum(kap ** p * speed, axis=1) * ds) ** (1.0 / p)
        inner = inner.reshape(u.shape)
        for q in q_list:
            incs = np.sum(inner ** q * jac, axis=1)
            total = float(np.sum(incs) ** (1.0 / q))
            e = float(-np.log2(incs[-1] / incs[-2]))
            if abs(1.0 / p + 1.0 / q - 1.0) < critical_band or abs(e) < min_exponent:
                verdict = "inconclusive"
            else:
                verdict = "finite" if e > 0 else "divergent"
            entries.append(NormEntry(float(p), float(q), verdict, total, e))
    return NormTable(entries)


@dataclass
class OrthogonalRay:
    t: np.ndarray
    r: np.ndarray
    rdot: np.ndarray
    residual: float
    spline: CubicHermiteSpline = field(repr=False)

    def __call__(self, t):
        return self.spline(t)


def trace_orthogonal_ray(sheet, s0, t0, epsilon, tau=None, rtol=1e-12,
                         atol=1e-13, max_step=None):
    """Solve r' = -<gamma_s, gamma_t>/|gamma_s|^2 backwards from r(t0) = s0.

    The residual reported is max |r'_H |gamma_s|^2 + <gamma_s, gamma_t>| at the
    midpoints between solver steps, with r_H the cubic Hermite interpolant of
    the solution; it measures how well the re-centred parameterization
    s' = s - r(t) is orthogonal along the ray.
    """
    tau = _tau_sing(sheet) if tau is None else tau

    def rhs(t, r):
        gs = sheet.ds(r[0], t)
        gt = sheet.dt(r[0], t)
        n2 = float(dot(gs, gs))
        if n2 <= tau * tau:
            raise SingularOnPath(f"|gamma_s| vanishes at (s, t) = ({r[0]:.6g}, {t:.6g})")
        return [-float(dot(gs, gt)) / n2]

    t_end = t0 - epsilon
    ms = max_step if max_step is not None else abs(epsilon) / 200.0
    sol = solve_ivp(rhs, (t0, t_end), [s0], method="RK45", rtol=rtol, atol=atol,
                    max_step=ms)
    if sol.status != 0:
        raise SingularOnPath(sol.message)
    order = np.argsort(sol.t)
    ts = sol.t[order]
    rs = sol.y[0][order]
    rd = np.array([rhs(a, [b])[0] for a, b in zip(ts, rs)])
    spline = CubicHermiteSpline(ts, rs, rd)
    tm = 0.5 * (ts[1:] + ts[:-1])
    rm = spline(tm)
    dm = spline.derivative()(tm)
    gs = sheet.ds(rm, tm)
    gt = sheet.dt(rm, tm)
    residual = float(np.max(np.abs(dm * dot(gs, gs) + dot(gs, gt)))) if tm.size else 0.0
    return OrthogonalRay(ts, rs, rd, residual, spline)


@dataclass
class CurvatureReport:
    s: np.ndarray
    t: np.ndarray
    kappa_std: np.ndarray
    k_paper: np.ndarray
    h: np.ndarray
    blowup: dict = field(default_factory=dict)
    norm_table: NormTable = None

    def to_csv(self):
        buf = io.StringIO()
        buf.write("s,t,kappa_std,k_paper,h\n")
        for j, t in enumerate(self.t):
            for i, s in enumerate(self.s):
                buf.write(",".join(fmt(x) for x in (s, t, self.kappa_std[j, i],
                                                   self.k_paper[j, i], self.h[j, i])))
                buf.write("\n")
        return buf.getvalue()


def curvature_report(sheet, s_grid, t_grid, step=None):
    s = np.asarray(s_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    S, T = np.meshgrid(s, t)
    cs = cross_section_curvature(sheet, S, T, step)
    gt = sheet.dt(S, T)
    timelike = dot(gt, gt) < 1.0 - tol.TIMELIKE
    h = np.full(S.shape, np.nan)
    if timelike.any():
        h[timelike] = mean_curvature_scalar(sheet, S[timelike], T[timelike], step)
    return CurvatureReport(s, t, cs.kappa_std, cs.k_paper, h)
