"""Planar initial curves, timelike velocity fields and their orthonormal gauge.

All evaluators are vectorized: scalar-valued maps accept arrays of any shape
and return the same shape, vector-valued maps append a trailing axis of
length 2.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from . import tolerances as tol
from .errors import (DomainExceeded, GaugeViolation, GridTooCoarse,
                     NotImmersed, NotTimelike)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
TWO_PI = 2.0 * np.pi


def perp(u):
    """Rotate planar vectors by +pi/2."""
    u = np.asarray(u, dtype=float)
    return np.stack([-u[..., 1], u[..., 0]], axis=-1)


def unit(angle):
    angle = np.asarray(angle, dtype=float)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _gl_integrate(f, a, b, chunk=1 << 15):
    """Gauss-Legendre (20 nodes) integral of f over [a, b], vectorized in a, b.

    Large inputs are processed in blocks to bound the node arrays.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if a.size > chunk:
        fa, fb = a.ravel(), b.ravel()
        parts = [_gl_integrate(f, fa[i:i + chunk], fb[i:i + chunk], chunk)
                 for i in range(0, fa.size, chunk)]
        out = np.concatenate(parts)
        return out.reshape(a.shape + out.shape[1:])
    half = 0.5 * (b - a)
    nodes = a[..., None] + half[..., None] * (_GL_X + 1.0)
    vals = np.asarray(f(nodes), dtype=float)
    if vals.ndim == nodes.ndim:
        return half * (vals @ _GL_W)
    return half[..., None] * np.einsum("...jd,j->...d", vals, _GL_W)


class CumulativeIntegral:
    """Antiderivative F of f with F(origin) = value.

    Increments between knots come from 20-point Gauss-Legendre, checked
    against a two-panel estimate; intervals whose estimates disagree by more
    than `tol` are redone with adaptive Gauss-Kronrod (quad_vec).  Between
    knots F is continued by Gauss-Legendre from the nearest knot, so F is C1
    with F' = f up to quadrature error.  With `hermite=True`, F between knots
    is the cubic Hermite interpolant of the knot values and slopes instead
    (C1, one evaluation of f per knot; used for sampled data).
    """

    def __init__(self, f, knots, origin=0.0, value=0.0, tol_abs=tol.QUAD,
                 knot_values=None, hermite=False):
        self.f = f
        self.knots = np.unique(np.asarray(knots, dtype=float))
        k = self.knots
        if knot_values is None:
            a, b = k[:-1], k[1:]
            inc = _gl_integrate(f, a, b)
            mid = 0.5 * (a + b)
            inc2 = _gl_integrate(f, a, mid) + _gl_integrate(f, mid, b)
            err = np.abs(inc - inc2).reshape(len(a), -1).max(axis=1)
            for i in np.nonzero(err > tol_abs)[0]:
                inc2[i] = quad_vec(f, a[i], b[i], epsabs=tol_abs * 1e-2,
                                   epsrel=1e-13)[0]
            zero = np.zeros_like(inc2[:1])
            F = np.concatenate([zero, np.cumsum(inc2, axis=0)])
            self._inc = inc2
        else:
            F = np.asarray(knot_values, dtype=float)
            self._inc = None
        self._F = F
        self._spline = None
        if hermite:
            slopes = f(k)
            self._spline = CubicHermiteSpline(k, F, slopes, axis=0)
        shift = np.asarray(value, dtype=float) - self._raw(np.asarray(float(origin)))
        self._F = F + shift
        if hermite:
            self._spline = CubicHermiteSpline(k, self._F, slopes, axis=0)

    def _nearest(self, s):
        k = self.knots
        idx = np.clip(np.searchsorted(k, s), 1, len(k) - 1)
        left = k[idx - 1]
        right = k[idx]
        return np.where(np.abs(s - left) <= np.abs(right - s), idx - 1, idx)

    def _raw(self, s):
        if self._spline is not None:
            return self._spline(s)
        idx = self._nearest(s)
        return self._F[idx] + _gl_integrate(self.f, self.knots[idx], s)

    def __call__(self, s):
        return self._raw(np.asarray(s, dtype=float))

    def diff(self, b, a, chunk=8192):
        """F(b) - F(a) using f on [min(a, b), max(a, b)] only.

        Knot increments strictly inside the interval are summed and the two
        end pieces are integrated directly, so the value does not depend on
        the accumulation from the origin.
        """
        b, a = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(a, dtype=float))
        if self._inc is None or self._spline is not None:
            return self(b) - self(a)
        k, inc = self.knots, self._inc
        lower, upper = np.minimum(a, b).ravel(), np.maximum(a, b).ravel()
        i_lo = np.searchsorted(k, lower, "left")
        i_hi = np.searchsorted(k, upper, "right") - 1
        inner = i_lo <= i_hi
        lo_c = np.clip(i_lo, 0, len(k) - 1)
        hi_c = np.clip(i_hi, 0, len(k) - 1)
        pad = (1,) * (inc.ndim - 1)
        total = np.zeros((lower.size,) + inc.shape[1:])
        for c0 in range(0, lower.size, chunk):
            l = lo_c[c0:c0 + chunk]
            h = np.where(inner[c0:c0 + chunk], hi_c[c0:c0 + chunk], l)
            n = int(np.max(h - l, initial=0))
            if n == 0:
                continue
            j = l[:, None] + np.arange(n)
            mask = j < h[:, None]
            vals = np.where(mask.reshape(mask.shape + pad), inc[np.where(mask, j, 0)], 0.0)
            total[c0:c0 + chunk] = np.sum(vals, axis=1)
        ends = _gl_integrate(self.f, lower, np.where(inner, k[lo_c], upper))
        ends = ends + np.where(inner.reshape((-1,) + pad),
                               _gl_integrate(self.f, k[hi_c], upper), 0.0)
        out = total + ends
        sign = np.where(b.ravel() >= a.ravel(), 1.0, -1.0).reshape((-1,) + pad)
        return (sign * out).reshape(b.shape + inc.shape[1:])


class CurveProvider:
    """Evaluable planar curve with first (and optionally second) derivative.

    `domain` is the truncation window [s_min, s_max]; `period` marks closed or
    translation-periodic curves.  Breakpoints list parameters where the
    defining formula changes (the curve stays C1 there).
    """

    def __init__(self, eval, deriv, second=None, domain=(-10.0, 10.0),
                 period=None, kind="analytic", breakpoints=()):
        lo, hi = float(domain[0]), float(domain[1])
        if not hi > lo:
            raise ValueError("empty curve domain")
        self._eval = eval
        self._deriv = deriv
        self._second = second
        self.domain = (lo, hi)
        self.period = period
        self.kind = kind
        self.breakpoints = tuple(b for b in breakpoints if lo < b < hi)
        self._slack = 1e-9 * (1.0 + max(abs(lo), abs(hi)))

    @property
    def has_second(self):
        return self._second is not None

    def check(self, s):
        s = np.asarray(s, dtype=float)
        if s.size:
            lo, hi = self.domain
            if np.nanmin(s) < lo - self._slack or np.nanmax(s) > hi + self._slack:
                raise DomainExceeded(
                    f"parameter range [{np.nanmin(s):.6g}, {np.nanmax(s):.6g}] "
                    f"leaves window [{lo:.6g}, {hi:.6g}]")
        return s

    def eval(self, s):
        return self._eval(self.check(s))

    __call__ = eval

    def deriv(self, s):
        return self._deriv(self.check(s))

    def second(self, s):
        if self._second is None:
            raise AttributeError("curve provides no second derivative")
        return self._second(self.check(s))


class VelocityProvider:
    """Planar velocity field v(s); `zero=True` short-cuts the antiderivative."""

    def __init__(self, eval, deriv=None, zero=False):
        self._eval = eval
        self._deriv = deriv
        self.zero = zero

    @classmethod
    def zeros(cls):
        z = lambda s: np.zeros(np.shape(s) + (2,))
        return cls(z, z, zero=True)

    @property
    def has_deriv(self):
        return self._deriv is not None

    def eval(self, s):
        return self._eval(np.asarray(s, dtype=float))

    __call__ = eval

    def deriv(self, s):
        if self._deriv is None:
            raise AttributeError("velocity provides no derivative")
        return self._deriv(np.asarray(s, dtype=float))


def default_knots(domain, breakpoints=(), spacing=0.125):
    lo, hi = domain
    n = max(int(np.ceil((hi - lo) / spacing)), 8)
    k = np.linspace(lo, hi, n + 1)
    return np.unique(np.concatenate([k, np.asarray(breakpoints, dtype=float)]))


def _unwrap_checked(raw, tau_unwrap=tol.UNWRAP):
    steps = np.diff(raw)
    wrapped = (steps + np.pi) % TWO_PI - np.pi
    if wrapped.size and np.max(np.abs(wrapped)) > np.pi - tau_unwrap:
        i = int(np.argmax(np.abs(wrapped)))
        raise GridTooCoarse(f"tangent angle jumps by {wrapped[i]:.4g} rad between "
                            f"samples {i} and {i + 1}")
    return raw[0] + np.concatenate([[0.0], np.cumsum(wrapped)])


class _TableTheta:
    """Continuous tangent angle from a dense unwrapped table.

    The exact angle comes from atan2 of the derivative; the table only picks
    the branch, so accuracy is that of the derivative evaluator.
    """

    def __init__(self, curve, grid):
        self.curve = curve
        self.s = np.asarray(grid, dtype=float)
        d = curve.deriv(self.s)
        self.values = _unwrap_checked(np.arctan2(d[:, 1], d[:, 0]))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        d = self.curve.deriv(s)
        raw = np.arctan2(d[..., 1], d[..., 0])
        ref = np.interp(s, self.s, self.values)
        return raw + TWO_PI * np.round((ref - raw) / TWO_PI)


class InitialData:
    """Gauge-normalized initial pair (c, v) with antiderivative and lifts.

    The constructor validates |<c', v>| <= tau_gauge and
    ||c'|^2 + |v|^2 - 1| <= tau_gauge on a sample grid; use
    `normalize_initial_data` for raw input.
    """

    def __init__(self, c, v, W=None, theta=None, tau_gauge=None, knots=None,
                 validate=True, name=None):
        self.c = c
        self.v = v
        self.name = name
        self.kind = c.kind
        self.window = c.domain
        self.period = c.period
        if tau_gauge is None:
            tau_gauge = tol.GAUGE_ANALYTIC if c.kind == "analytic" else tol.GAUGE_SAMPLED
        self.tau_gauge = tau_gauge
        self.tau_sing = tol.SING_ANALYTIC if c.kind == "analytic" else tol.SING_SAMPLED
        lo, hi = self.window
        self.s_ref = 0.0 if lo <= 0.0 <= hi else lo
        self.knots = default_knots(self.window, c.breakpoints) if knots is None else knots
        if W is None:
            if v.zero:
                W = lambda s: np.zeros(np.shape(s) + (2,))
            else:
                W = CumulativeIntegral(v.eval, self.knots, origin=self.s_ref,
                                       hermite=c.kind == "sampled")
        self._W = W
        if theta is None:
            n = int(min(max(4001, 64 * (hi - lo)), 400001))
            grid = np.unique(np.concatenate([np.linspace(lo, hi, n), c.breakpoints]))
            theta = _TableTheta(c, grid)
        self._theta = theta
        if validate:
            self.check_gauge()

    @property
    def has_second(self):
        return self.c.has_second and (self.v.zero or self.v.has_deriv)

    def sample_grid(self, n=4001):
        lo, hi = self.window
        return np.unique(np.concatenate([np.linspace(lo, hi, n), self.c.breakpoints]))

    def gauge_residuals(self, s):
        dc = self.c.deriv(s)
        v = self.v.eval(s)
        return np.abs(dot(dc, v)), np.abs(dot(dc, dc) + dot(v, v) - 1.0)

    def check_gauge(self, n=4001):
        s = self.sample_grid(n)
        orth, speed = self.gauge_residuals(s)
        if orth.max() > self.tau_gauge or speed.max() > self.tau_gauge:
            raise GaugeViolation(
                f"gauge residuals {orth.max():.3g} (orthogonality), "
                f"{speed.max():.3g} (speed) exceed {self.tau_gauge:g}")
        v = self.v.eval(s)
        if np.max(dot(v, v)) >= 1.0 - tol.TIMELIKE:
            raise NotTimelike("velocity is not timelike on the window")
        dc = self.c.deriv(s)
        u0 = dc / np.linalg.norm(dc, axis=-1)[..., None]
        lift_err = np.linalg.norm(unit(self.theta(s)) - u0, axis=-1).max()
        if lift_err > max(self.tau_gauge, 1e-9):
            raise GaugeViolation(f"angle lift inconsistent with tangent ({lift_err:.3g})")

    # scalar lifts
    def theta(self, s):
        return self._theta(self.c.check(s))

    def mu(self, s):
        s = self.c.check(s)
        th = self._theta(s)
        v = self.v.eval(s)
        return -v[..., 0] * np.sin(th) + v[..., 1] * np.cos(th)

    def alpha_plus(self, s):
        s = self.c.check(s)
        return self._theta(s) + np.arcsin(np.clip(self.mu(s), -1.0, 1.0))

    def alpha_minus(self, s):
        s = self.c.check(s)
        return self._theta(s) - np.arcsin(np.clip(self.mu(s), -1.0, 1.0)) - np.pi

    # vector fields
    def W(self, s):
        return self._W(self.c.check(s))

    def W_diff(self, b, a):
        """W(b) - W(a), computed from data on [a, b] only where possible."""
        b, a = self.c.check(b), self.c.check(a)
        if hasattr(self._W, "diff"):
            return self._W.diff(b, a)
        return self._W(b) - self._W(a)

    def a_plus(self, s):
        return self.v.eval(self.c.check(s)) + self.c.deriv(s)

    def a_minus(self, s):
        return self.v.eval(self.c.check(s)) - self.c.deriv(s)

    def _dv(self, s):
        if self.v.zero:
            return np.zeros(np.shape(s) + (2,))
        return self.v.deriv(s)

    def da_plus(self, s):
        s = self.c.check(s)
        return self._dv(s) + self.c.second(s)

    def da_minus(self, s):
        s = self.c.check(s)
        return self._dv(s) - self.c.second(s)


@dataclass
class AngularLift:
    s: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray


def angular_lift(data, grid, tau_unwrap=tol.UNWRAP):
    """Unwrapped tangent angle on `grid` with theta(grid[0]) in (-pi, pi]."""
    s = np.asarray(grid, dtype=float)
    d = data.c.deriv(s)
    raw = np.arctan2(d[:, 1], d[:, 0])
    if raw[0] <= -np.pi:
        raw[0] += TWO_PI
    theta = _unwrap_checked(raw, tau_unwrap)
    v = data.v.eval(s)
    mu = -v[:, 0] * np.sin(theta) + v[:, 1] * np.cos(theta)
    asn = np.arcsin(np.clip(mu, -1.0, 1.0))
    return AngularLift(s, theta, mu, theta + asn, theta - asn - np.pi)


def null_directions(data, s):
    """Spatial parts a+ = v + c', a- = v - c' of the two null tangent directions."""
    return data.a_plus(s), data.a_minus(s)


def angle_data(theta, dtheta, domain, mu=None, dmu=None, start=(0.0, 0.0),
               s_start=None, breakpoints=(), knots=None, period=None, name=None):
    """Initial data driven by a tangent angle theta(s) and normal speed mu(s).

    The curve has speed sqrt(1 - mu^2) and v = mu U0perp, so the gauge holds by
    construction; c and W are integrated from the knots.
    """
    if mu is None:
        mu = lambda s: np.zeros(np.shape(s))
        dmu = mu
        zero_v = True
    else:
        zero_v = False

    def dc(s):
        m = mu(s)
        return np.sqrt(1.0 - m * m)[..., None] * unit(theta(s))

    def ddc(s):
        m = mu(s)
        r = np.sqrt(1.0 - m * m)
        th = theta(s)
        return ((-m * dmu(s) / r)[..., None] * unit(th)
                + (r * dtheta(s))[..., None] * perp(unit(th)))

    def v(s):
        return mu(s)[..., None] * perp(unit(theta(s)))

    def dv(s):
        th = theta(s)
        return (dmu(s)[..., None] * perp(unit(th))
                - (mu(s) * dtheta(s))[..., None] * unit(th))

    lo, hi = domain
    if s_start is None:
        s_start = 0.0 if lo <= 0.0 <= hi else lo
    if knots is None:
        knots = default_knots(domain, breakpoints)
    pos = CumulativeIntegral(dc, knots, origin=s_start, value=np.asarray(start, float))
    curve = CurveProvider(pos, dc, ddc, domain=domain, period=period,
                          breakpoints=breakpoints)
    vel = VelocityProvider.zeros() if zero_v else VelocityProvider(v, dv)
    return InitialData(curve, vel, theta=lambda s: theta(np.asarray(s, float)),
                       knots=knots, name=name)


def normalize_initial_data(c_raw, v_raw, n_samples=None, tau_gauge=None, name=None):
    """Project v onto the normal line and reparametrize c so |c'|^2 + |v|^2 = 1.

    The new parameter sigma solves dsigma/ds = |c_raw'| / sqrt(1 - mu^2) with
    sigma(s_ref) = s_ref (s_ref = 0 if inside the window, else its left end),
    which makes the operation idempotent.
    """
    lo, hi = c_raw.domain
    if n_samples is None:
        n_samples = int(min(max(4001, 200 * (hi - lo)), 200001))
    grid = np.unique(np.concatenate([np.linspace(lo, hi, n_samples), c_raw.breakpoints]))
    dcs = c_raw.deriv(grid)
    speed = np.linalg.norm(dcs, axis=-1)
    if speed.min() < tol.IMMERSION:
        i = int(np.argmin(speed))
        raise NotImmersed(f"|c'| = {speed[i]:.3g} at s = {grid[i]:.6g}")
    vs = v_raw.eval(grid)
    vmag = np.linalg.norm(vs, axis=-1)
    if vmag.max() >= 1.0 - tol.TIMELIKE:
        i = int(np.argmax(vmag))
        raise NotTimelike(f"|v| = {vmag[i]:.6g} at s = {grid[i]:.6g}")

    def mu_raw(s):
        d = c_raw.deriv(s)
        n = perp(d / np.linalg.norm(d, axis=-1)[..., None])
        return dot(v_raw.eval(s), n), n, d

    def rate(s):
        m, _, d = mu_raw(s)
        return np.linalg.norm(d, axis=-1) / np.sqrt(1.0 - m * m)

    # sigma by the same knot-wise quadrature as W; knots include every
    # breakpoint, so the rate is smooth on each knot interval
    knots = default_knots(c_raw.domain, c_raw.breakpoints,
                          spacing=min(0.125, (hi - lo) / 64))
    s_ref = 0.0 if lo <= 0.0 <= hi else lo
    sigma = CumulativeIntegral(rate, knots, origin=s_ref, value=s_ref)
    sig_knots = sigma(knots)
    # C1 Hermite guess of the inverse (exact slopes 1/rate); its O(h^4)
    # error is squared away by the Newton steps
    guess = CubicHermiteSpline(sig_knots, knots, 1.0 / rate(knots))
    last = [None]

    def s_of(sig_val):
        sig_val = np.asarray(sig_val, dtype=float)
        key = (sig_val.shape, sig_val.tobytes())
        hit = last[0]
        if hit is not None and hit[0] == key:
            return hit[1]
        s = np.clip(guess(sig_val), lo, hi)
        s = np.clip(s - (sigma(s) - sig_val) / rate(s), lo, hi)
        last[0] = (key, s)
        return s

    def c_new(x):
        return c_raw.eval(s_of(x))

    def dc_new(x):
        s = s_of(x)
        return c_raw.deriv(s) / rate(s)[..., None]

    def v_new(x):
        m, n, _ = mu_raw(s_of(x))
        return m[..., None] * n

    period = None
    if c_raw.period:
        period = float(sigma(lo + c_raw.period) - sigma(lo))
    domain = (float(sig_knots[0]), float(sig_knots[-1]))
    bps = tuple(float(sigma(b)) for b in c_raw.breakpoints)
    curve = CurveProvider(c_new, dc_new, None, domain=domain, period=period,
                          kind=c_raw.kind, breakpoints=bps)
    vel = VelocityProvider(v_new, zero=bool(getattr(v_raw, "zero", False)))
    new_knots = default_knots(domain, bps, spacing=min(0.125, (domain[1] - domain[0]) / 64))
    return InitialData(curve, vel, tau_gauge=tau_gauge, knots=new_knots, name=name)


def read_curve_csv(path):
    """Read a sampled curve with columns s,c1,c2,v1,v2 into raw providers."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    want = ["s", "c1", "c2", "v1", "v2"]
    if header != want:
        raise ValueError(f"{path}: header must be {','.join(want)}, got {','.join(header)}")
    try:
        table = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    if table.ndim != 2 or table.shape[0] < 4 or table.shape[1] != 5:
        raise ValueError(f"{path}: need at least 4 rows of 5 columns")
    s = table[:, 0]
    if np.any(np.diff(s) <= 0):
        raise ValueError(f"{path}: s must be strictly increasing")
    return sampled_providers(s, table[:, 1:3], table[:, 3:5])


def sampled_providers(s, c, v):
    """C1 (cubic spline) providers through sampled curve and velocity values."""
    cs = CubicSpline(s, c, axis=0)
    dcs = cs.derivative()
    vs = CubicSpline(s, v, axis=0)
    dvs = vs.derivative()
    zero = bool(np.all(np.asarray(v) == 0.0))
    curve = CurveProvider(cs, dcs, dcs.derivative(), domain=(s[0], s[-1]),
                          kind="sampled", breakpoints=tuple(s[1:-1]))
    vel = VelocityProvider.zeros() if zero else VelocityProvider(vs, dvs)
    return curve, vel


def load_curve_csv(path):
    c_raw, v_raw = read_curve_csv(path)
    return normalize_initial_data(c_raw, v_raw, name=str(path))
