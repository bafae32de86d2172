"""Conversion of arclength-per-slice sheets to isothermal gauge.

A sheet gamma(s, t) with |gamma_s| = 1 is carried along the characteristics
s'(t) = -<gamma_s, gamma_t> of the transport equation.  Labelling each
characteristic by sigma = rho(s0), with rho' = |det g(s0, 0)|^(-1/2), gives a
parameterization in which <gamma_sigma, gamma_t> = 0 and
|gamma_sigma|^2 + |gamma_t|^2 = 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from . import tolerances as tol
from .errors import GaugeViolation, NotTimelike, WindowExit
from .initial_data import CumulativeIntegral, default_knots, dot

_GL20_X, _GL20_W = np.polynomial.legendre.leggauss(20)
_FD = 1e-5


def _bt(s, t):
    return np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))


class GraphParamSheet:
    """Sheet in arclength-per-slice gauge on window (s_min, s_max, t_min, t_max)."""

    def __init__(self, eval, ds, dt, window, tau_gauge=tol.GAUGE_ANALYTIC,
                 validate=True, n_check=41):
        self._f, self._ds, self._dt = eval, ds, dt
        self.window = tuple(float(x) for x in window)
        self.tau_gauge = tau_gauge
        if validate:
            self.validate(n_check)

    def eval(self, s, t):
        return self._f(*_bt(s, t))

    __call__ = eval

    def ds(self, s, t):
        return self._ds(*_bt(s, t))

    def dt(self, s, t):
        return self._dt(*_bt(s, t))

    def shear(self, s, t):
        """<gamma_s, gamma_t>, the characteristic speed up to sign."""
        return dot(self.ds(s, t), self.dt(s, t))

    def shear_ds(self, s, t):
        s, t = _bt(s, t)
        return (self.shear(s + _FD, t) - self.shear(s - _FD, t)) / (2 * _FD)

    def shear_pair(self, s, t):
        return self.shear(s, t), self.shear_ds(s, t)

    def sample(self, n=41):
        s0, s1, t0, t1 = self.window
        return np.meshgrid(np.linspace(s0, s1, n), np.linspace(t0, t1, n))

    def det_g(self, s, t):
        """|det g| = 1 - |gamma_t|^2 + <gamma_s, gamma_t>^2 (for |gamma_s| = 1)."""
        gt = self.dt(s, t)
        return 1.0 - dot(gt, gt) + self.shear(s, t) ** 2

    def validate(self, n=41):
        S, T = self.sample(n)
        gs = self.ds(S, T)
        gt = self.dt(S, T)
        dev = np.max(np.abs(np.linalg.norm(gs, axis=-1) - 1.0))
        if dev > self.tau_gauge:
            raise GaugeViolation(f"|gamma_s| deviates from 1 by {dev:.3g}")
        if np.any(dot(gt, gt) >= 1.0) or np.any(np.abs(dot(gs, gt)) >= 1.0):
            raise NotTimelike("sheet is not timelike on its window")


class ArclengthSheet(GraphParamSheet):
    """Per-slice arclength reparameterization of a regular sheet.

    sigma(s, t) = int_{s_origin}^s |gamma_s(u, t)| du; the base sheet must
    provide ds, dt and dst and have no singular points on the window.
    """

    def __init__(self, base, window, s_origin=0.0, panel=1.0, newton_iters=8,
                 validate=True, n_check=11):
        self.base = base
        self.s_origin = float(s_origin)
        self.panel = panel
        self.newton_iters = newton_iters
        super().__init__(None, None, None, window, validate=validate, n_check=n_check)

    def _integral(self, g, s, t):
        # composite Gauss-Legendre of g(u, t) over [s_origin, s]
        a = self.s_origin
        m = max(1, int(np.ceil(np.max(np.abs(s - a), initial=0.0) / self.panel)))
        edges = np.linspace(0.0, 1.0, m + 1)
        x = (edges[:-1, None] + 0.5 * (edges[1:] - edges[:-1])[:, None] * (_GL20_X + 1)).ravel()
        w = np.tile(_GL20_W, m) * 0.5 / m
        u = a + (s - a)[..., None] * x
        vals = g(u, np.broadcast_to(t[..., None], u.shape))
        return (s - a) * np.sum(vals * w, axis=-1)

    def _speed(self, u, t):
        return np.linalg.norm(self.base.ds(u, t), axis=-1)

    def _speed_t(self, u, t):
        gs = self.base.ds(u, t)
        return dot(gs, self.base.dst(u, t)) / np.linalg.norm(gs, axis=-1)

    def _local_shear(self, s, t):
        gs = self.base.ds(s, t)
        return dot(gs, self.base.dt(s, t)) / np.linalg.norm(gs, axis=-1)

    def shear_pair(self, sigma, t):
        """<gamma_sigma, gamma_t> and its sigma-derivative with one inversion.

        shear = <g_s, g_t>/|g_s| - int |g_s|_t du, so
        d shear/d sigma = (d/ds <g_s, g_t>/|g_s| - |g_s|_t) / |g_s|.
        """
        sigma, t = _bt(sigma, t)
        s = self.base_param(sigma, t)
        sp = self._speed(s, t)
        val = self._local_shear(s, t) - self._integral(self._speed_t, s, t)
        loc = (self._local_shear(s + _FD, t) - self._local_shear(s - _FD, t)) / (2 * _FD)
        return val, (loc - self._speed_t(s, t)) / sp

    def shear(self, sigma, t):
        return self.shear_pair(sigma, t)[0]

    def shear_ds(self, sigma, t):
        return self.shear_pair(sigma, t)[1]

    def base_param(self, sigma, t):
        """s with sigma(s, t) = sigma, by Newton from s = sigma."""
        sigma, t = _bt(sigma, t)
        s = sigma.copy()
        if s.size == 0:
            return s
        for _ in range(self.newton_iters):
            step = (self._integral(self._speed, s, t) - sigma) / self._speed(s, t)
            s = s - step
            if np.max(np.abs(step), initial=0.0) < 1e-14:
                break
        return s

    def eval(self, sigma, t):
        sigma, t = _bt(sigma, t)
        return self.base.eval(self.base_param(sigma, t), t)

    __call__ = eval

    def ds(self, sigma, t):
        sigma, t = _bt(sigma, t)
        gs = self.base.ds(self.base_param(sigma, t), t)
        return gs / np.linalg.norm(gs, axis=-1)[..., None]

    def dt(self, sigma, t):
        sigma, t = _bt(sigma, t)
        s = self.base_param(sigma, t)
        gs = self.base.ds(s, t)
        # ds/dt at fixed sigma = -sigma_t / sigma_s
        s_t = -self._integral(self._speed_t, s, t) / np.linalg.norm(gs, axis=-1)
        return self.base.dt(s, t) + s_t[..., None] * gs


@dataclass
class Characteristics:
    seeds: np.ndarray
    t: np.ndarray                 # ascending sample times
    s: np.ndarray                 # (n_seeds, n_t)
    speed: np.ndarray             # ds/dt at the samples
    splines: list = field(repr=False)

    @property
    def max_speed(self):
        return float(np.max(np.abs(self.speed))) if self.speed.size else 0.0

    def __call__(self, i, t):
        return self.splines[i](t)


def _char_rhs(sheet):
    def rhs(t, s):
        return -dot(sheet.ds(s, np.full_like(s, t)), sheet.dt(s, np.full_like(s, t)))
    return rhs


def solve_characteristics(sheet, seeds, t_range, t_seed=0.0, tau_ode=tol.ODE):
    """Characteristics s(t) through s(t_seed) = seeds, covering t_range."""
    seeds = np.atleast_1d(np.asarray(seeds, dtype=float))
    ta, tb = sorted(map(float, t_range))
    window = getattr(sheet, "window", None)
    if window is not None and len(window) == 4:
        lo, hi = window[0], window[1]
        if ta < window[2] or tb > window[3]:
            raise WindowExit("t_range leaves the sheet window")
    else:
        lo, hi = -np.inf, np.inf
    if np.any(seeds < lo) or np.any(seeds > hi):
        raise WindowExit("seed outside the sheet window")
    t_seed = min(max(float(t_seed), ta), tb)
    rhs = _char_rhs(sheet)

    def leave(t, s):
        return min(np.min(s - lo), np.min(hi - s))
    leave.terminal = True

    ts, ss = [np.array([t_seed])], [seeds[:, None]]
    for end in (ta, tb):
        if end == t_seed:
            continue
        sol = solve_ivp(rhs, (t_seed, end), seeds, method="RK45", rtol=tau_ode,
                        atol=tau_ode * 1e-2, events=leave if np.isfinite(lo + hi) else None)
        if sol.status == 1:
            raise WindowExit(f"a characteristic leaves the window at t = {sol.t[-1]:.6g}")
        if sol.status != 0:
            raise WindowExit(sol.message)
        ts.append(sol.t[1:])
        ss.append(sol.y[:, 1:])
    t = np.concatenate(ts)
    s = np.concatenate(ss, axis=1)
    order = np.argsort(t)
    t, s = t[order], s[:, order]
    speed = np.stack([rhs(tk, s[:, k]) for k, tk in enumerate(t)], axis=1)
    srt = np.argsort(seeds)
    if np.any(np.diff(s[srt], axis=0) <= 0):
        raise AssertionError("characteristics cross")
    splines = [CubicHermiteSpline(t, s[i], speed[i]) if t.size > 1 else None
               for i in range(seeds.size)]
    return Characteristics(seeds, t, s, speed, splines)


class IsothermalizedSheet:
    """gamma'(sigma, t) = gamma(S(rho^-1(sigma), t), t) along characteristics."""

    has_second = False

    def __init__(self, result):
        self._r = result
        self._last = None
        src = result.sheet
        s0, s1, t0, t1 = src.window
        self.window = (float(result.rho(s0)), float(result.rho(s1)), t0, t1)

    def _flow(self, sigma, t):
        # ds and dt are usually requested at the same points: keep the last flow
        key = (sigma.shape, sigma.tobytes(), t.tobytes())
        last = self._last
        if last is not None and last[0] == key:
            return last[1]
        r = self._r
        s0 = r.rho_inverse(sigma)
        S, J = r.flow(s0, t)
        self._last = (key, (s0, S, J))
        return s0, S, J

    def eval(self, sigma, t):
        sigma, t = _bt(sigma, t)
        _, S, _ = self._flow(sigma, t)
        return self._r.sheet.eval(S, t)

    __call__ = eval

    def ds(self, sigma, t):
        sigma, t = _bt(sigma, t)
        s0, S, J = self._flow(sigma, t)
        return self._r.sheet.ds(S, t) * (J / self._r.rho_rate(s0))[..., None]

    def dt(self, sigma, t):
        sigma, t = _bt(sigma, t)
        _, S, _ = self._flow(sigma, t)
        gs = self._r.sheet.ds(S, t)
        gt = self._r.sheet.dt(S, t)
        return gt - dot(gs, gt)[..., None] * gs


@dataclass
class Isothermalization:
    sheet: GraphParamSheet
    rho: CumulativeIntegral
    basepoint: float
    tau_ode: float
    new_sheet: IsothermalizedSheet = None

    def rho_rate(self, s):
        s = np.asarray(s, dtype=float)
        return self.sheet.det_g(s, np.zeros_like(s)) ** -0.5

    def rho_inverse(self, sigma, iters=8):
        """Newton on rho(s) = sigma from the knot-table interpolant."""
        sigma = np.asarray(sigma, dtype=float)
        lo, hi = self.sheet.window[0], self.sheet.window[1]
        s = np.interp(sigma, self.rho._F, self.rho.knots)
        for _ in range(iters):
            step = (self.rho(s) - sigma) / self.rho_rate(s)
            s = np.clip(s - step, lo, hi)
            if np.max(np.abs(step), initial=0.0) < 1e-13:
                break
        return s

    def flow(self, s0, t):
        """S(s0, t) and J = dS/ds0 along each characteristic (vectorized).

        Each point is integrated on its own clock: tau in [0, 1] with
        t = tau * t_i, so one solver call serves all end times.
        """
        s0, t = _bt(s0, t)
        shape = s0.shape
        s0, t = s0.ravel(), t.ravel()
        n = s0.size
        sh = self.sheet
        lo, hi = sh.window[0], sh.window[1]

        def rhs(tau, y):
            S, J = y[:n], y[n:]
            tt = tau * t
            k, dk = sh.shear_pair(S, tt)
            return np.concatenate([-t * k, -t * dk * J])

        if n == 0:
            return s0.reshape(shape), s0.reshape(shape)
        sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([s0, np.ones(n)]),
                        method="RK45", rtol=self.tau_ode * 1e-1, atol=self.tau_ode * 1e-3)
        if sol.status != 0:
            raise WindowExit(sol.message)
        path = sol.y[:n]
        if np.any(path < lo) or np.any(path > hi):
            raise WindowExit("a characteristic leaves the window")
        return sol.y[:n, -1].reshape(shape), sol.y[n:, -1].reshape(shape)

    def forward_map(self, s, t, tol_s=1e-10):
        """s'(s, t) = rho(s0) with S(s0, t) = s, by bisection on the monotone family."""
        s, t = _bt(s, t)
        lo = np.maximum(s - np.abs(t), self.sheet.window[0])
        hi = np.minimum(s + np.abs(t), self.sheet.window[1])
        while np.max(hi - lo, initial=0.0) > tol_s:
            mid = 0.5 * (lo + hi)
            below = self.flow(mid, t)[0] < s
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return self.rho(0.5 * (lo + hi))


def isothermalize(sheet: GraphParamSheet, basepoint=0.0, tau_ode=tol.ODE,
                  tau_timelike=tol.TIMELIKE, n_check=41) -> Isothermalization:
    """Isothermal reparameterization of an arclength-per-slice sheet.

    rho is normalized by rho(basepoint) = 0 (basepoint clipped into the window).
    """
    S, T = sheet.sample(n_check)
    if np.any(sheet.det_g(S, T) <= tau_timelike):
        raise NotTimelike("|det g| vanishes on the window")
    s0, s1 = sheet.window[0], sheet.window[1]
    base = min(max(float(basepoint), s0), s1)

    def rate(u):
        u = np.asarray(u, dtype=float)
        return sheet.det_g(u, np.zeros_like(u)) ** -0.5

    rho = CumulativeIntegral(rate, default_knots((s0, s1)), origin=base, value=0.0)
    out = Isothermalization(sheet, rho, base, tau_ode)
    out.new_sheet = IsothermalizedSheet(out)
    return out


def gauge_residuals(sheet, s, t):
    """(|<gamma_s, gamma_t>|, ||gamma_s|^2 + |gamma_t|^2 - 1|) at the points."""
    gs = sheet.ds(s, t)
    gt = sheet.dt(s, t)
    return np.abs(dot(gs, gt)), np.abs(dot(gs, gs) + dot(gt, gt) - 1.0)


def sheared_plane(kappa, b, window=(-5.0, 5.0, -1.0, 1.0)):
    """gamma(s, t) = (s + kappa t, b t): |gamma_s| = 1, <gamma_s, gamma_t> = kappa."""
    def f(s, t):
        return np.stack([s + kappa * t, b * t], axis=-1)

    def ds(s, t):
        return np.stack([np.ones_like(s), np.zeros_like(s)], axis=-1)

    def dt(s, t):
        return np.stack([np.full_like(s, kappa), np.full_like(s, b)], axis=-1)

    return GraphParamSheet(f, ds, dt, window)
