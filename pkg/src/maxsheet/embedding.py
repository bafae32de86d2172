"""Separating directions, graph checks over diamonds, self-intersections.

All verdicts are certified on sample grids only ("numerical", not proofs).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import tolerances as tol
from .errors import MarginViolated
from .initial_data import angular_lift, dot, unit
from .singularity import CharacteristicDiamond, _grid, _local_extrema


@dataclass
class SeparationResult:
    verdict: str                 # separated | overlapping
    omega: np.ndarray = None
    margin: float = None         # min <a+(xi) - a-(eta), omega> over samples
    witness: tuple = None        # (xi, eta) with a+(xi) ~ a-(eta)
    arc: tuple = None            # (alpha_1, alpha_2) spanned by alpha+
    certification: str = "numerical"


def _margin(ap, am, phi):
    w = unit(phi)
    return np.min(ap @ w) - np.max(am @ w)


def separating_direction(data, s1, s2, step=1e-3, n_angles=3600,
                         tau_margin=tol.SUP_MARGIN) -> SeparationResult:
    """omega with <a+(xi) - a-(eta), omega> > 0 for xi, eta in [s1, s2].

    The first candidate is the midpoint of the arc swept by the continuous
    lift of alpha+; if it does not certify, the margin is maximized over all
    directions.  When no direction certifies, an overlap witness is located by
    minimizing |a+(xi) - a-(eta)|.  Margins at or below tau_margin do not
    certify.
    """
    if not s2 > s1:
        raise ValueError("need s1 < s2")
    x = _grid(s1, s2, step)
    lift = angular_lift(data, x)
    a1, a2 = float(lift.alpha_plus.min()), float(lift.alpha_plus.max())
    ap = data.a_plus(x)
    am = data.a_minus(x)
    phi = 0.5 * (a1 + a2)
    best = _margin(ap, am, phi) if a2 - a1 < np.pi else -np.inf
    if not best > 0:
        grid = np.linspace(-np.pi, np.pi, n_angles, endpoint=False)
        vals = np.min(ap @ unit(grid).T, axis=0) - np.max(am @ unit(grid).T, axis=0)
        k = int(np.argmax(vals))
        res = minimize_scalar(lambda p: -_margin(ap, am, p),
                              bounds=(grid[k] - 2 * np.pi / n_angles, grid[k] + 2 * np.pi / n_angles),
                              method="bounded", options={"xatol": 1e-12})
        phi, best = (res.x, -res.fun) if -res.fun > vals[k] else (grid[k], vals[k])
    if best > 0:
        w = unit(phi)
        # refine the sampled extrema of the two projections
        _, lo = _local_extrema(x, ap @ w, lambda z: data.a_plus(z) @ w, -1)
        _, hi = _local_extrema(x, am @ w, lambda z: data.a_minus(z) @ w, 1)
        margin = float(min(lo.min(), np.min(ap @ w)) - max(hi.max(), np.max(am @ w)))
        if margin > tau_margin:
            return SeparationResult("separated", w, margin, None, (a1, a2))
    return SeparationResult("overlapping", None, float(best), _overlap_witness(data, x, ap, am),
                            (a1, a2))


def _overlap_witness(data, x, ap, am, coarse=400):
    idx = np.linspace(0, len(x) - 1, min(coarse, len(x))).astype(int)
    d = np.linalg.norm(ap[idx][:, None, :] - am[idx][None, :, :], axis=-1)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    lo, hi = x[0], x[-1]

    def f(z):
        xi, eta = np.clip(z, lo, hi)
        return float(np.linalg.norm(data.a_plus(np.array([xi]))[0] - data.a_minus(np.array([eta]))[0]))

    res = minimize(f, [x[idx[i]], x[idx[j]]], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    xi, eta = np.clip(res.x, lo, hi)
    return float(xi), float(eta)


@dataclass
class GraphVerdict:
    verdict: str                 # graph
    min_margin: float
    location: tuple
    certification: str = "numerical"


def verify_graph_on_diamond(sheet, diamond, omega, step=None) -> GraphVerdict:
    """Check <gamma_s, omega> > 0 and strict monotonicity of <gamma, omega>
    along every slice of the diamond."""
    if not isinstance(diamond, CharacteristicDiamond):
        diamond = CharacteristicDiamond(*diamond)
    w = np.asarray(omega, dtype=float)
    s1, s2 = diamond.s1, diamond.s2
    half = diamond.half_width
    h = step if step is not None else 2 * half / 400
    nt = int(np.ceil(half / h))
    worst, where = np.inf, None
    for t in np.linspace(-half, half, 2 * nt + 1):
        a, b = s1 + abs(t), s2 - abs(t)
        if b - a < 1e-12:
            s = np.array([0.5 * (a + b)])
        else:
            s = np.linspace(a, b, max(2, int(np.ceil((b - a) / h)) + 1))
        tt = np.full_like(s, t)
        m = sheet.ds(s, tt) @ w
        k = int(np.argmin(m))
        if m[k] < worst:
            worst, where = float(m[k]), (float(s[k]), float(t))
        if m[k] <= 0:
            raise MarginViolated(f"<gamma_s, omega> = {m[k]:.3g} <= 0", (float(s[k]), float(t)))
        proj = sheet.eval(s, tt) @ w
        if s.size > 1 and np.any(np.diff(proj) <= 0):
            i = int(np.argmin(np.diff(proj)))
            raise MarginViolated("slice projection is not strictly increasing",
                                 (float(s[i]), float(t)))
    return GraphVerdict("graph", worst, where)


# ---------------------------------------------------------- self-intersections

def _segment_hits(p0, p1, q0, q1, slack=1e-9):
    """Parameters (u, w) in [0, 1] of crossings of segments p0p1 and q0q1."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = q0 - p0
    den = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / den
        w = (r[:, 0] * d1[:, 1] - r[:, 1] * d1[:, 0]) / den
    ok = (np.abs(den) > 0) & (u >= -slack) & (u <= 1 + slack) & (w >= -slack) & (w <= 1 + slack)
    return ok, np.clip(u, 0, 1), np.clip(w, 0, 1)


def _candidate_pairs(pts, cell):
    """Segment pairs sharing a spatial-hash cell (bounding boxes)."""
    a, b = pts[:-1], pts[1:]
    lo = np.floor(np.minimum(a, b) / cell).astype(np.int64)
    hi = np.floor(np.maximum(a, b) / cell).astype(np.int64)
    keys, segs = [], []
    seg = np.arange(len(a))
    for dx in (0, 1):
        for dy in (0, 1):
            cx, cy = lo[:, 0] + dx, lo[:, 1] + dy
            ok = (cx <= hi[:, 0]) & (cy <= hi[:, 1])
            keys.append(np.column_stack([cx[ok], cy[ok]]))
            segs.append(seg[ok])
    keys = np.concatenate(keys)
    segs = np.concatenate(segs)
    _, cid = np.unique(keys, axis=0, return_inverse=True)
    cid = cid.ravel()
    order = np.argsort(cid, kind="stable")
    cid, segs = cid[order], segs[order]
    bounds = np.flatnonzero(np.diff(cid)) + 1
    pairs = []
    for group in np.split(segs, bounds):
        if group.size < 2:
            continue
        i, j = np.meshgrid(group, group, indexing="ij")
        m = j > i + 1
        pairs.append(np.column_stack([i[m], j[m]]))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(np.concatenate(pairs), axis=0)


def _newton_pair(curve, r1, r2, lo, hi, iters=30):
    for _ in range(iters):
        F = curve.eval(np.array([r1]))[0] - curve.eval(np.array([r2]))[0]
        if np.linalg.norm(F) < 1e-15:
            break
        J = np.column_stack([curve.deriv(np.array([r1]))[0], -curve.deriv(np.array([r2]))[0]])
        if abs(np.linalg.det(J)) < 1e-14:
            break
        d = np.linalg.solve(J, F)
        r1, r2 = float(np.clip(r1 - d[0], lo, hi)), float(np.clip(r2 - d[1], lo, hi))
        if np.max(np.abs(d)) < 1e-15:
            break
    F = curve.eval(np.array([r1]))[0] - curve.eval(np.array([r2]))[0]
    return r1, r2, float(np.linalg.norm(F))


def detect_self_intersections(curve, s_range, step=1e-3, tau=tol.INTERSECT):
    """Pairs r1 < r2 in s_range with c(r1) = c(r2), sorted by (r1, r2).

    Trivial matches (|r2 - r1| within a few segments) are dropped; on periodic
    curves, pairs are reported once per period (closed curves: unordered pairs
    modulo the period).
    """
    lo, hi = sorted(map(float, s_range))
    P = getattr(curve, "period", None)
    closed = False
    if P:
        d0, d1 = getattr(curve, "domain", (lo, lo + 2 * P))
        if d1 - d0 >= P:
            probe = np.linspace(d0, d1 - P, 7)
            closed = np.allclose(curve.eval(probe), curve.eval(probe + P), atol=1e-9)
        if closed:
            hi = min(hi, lo + P)
    s = np.linspace(lo, hi, max(16, int(np.ceil((hi - lo) / step)) + 1))
    pts = curve.eval(s)
    seglen = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cell = max(2.0 * float(seglen.max()), 1e-12)
    pairs = _candidate_pairs(pts, cell)
    if pairs.size == 0:
        return []
    i, j = pairs[:, 0], pairs[:, 1]
    ok, u, w = _segment_hits(pts[i], pts[i + 1], pts[j], pts[j + 1])
    h = s[1] - s[0]
    found = {}
    for a, b, uu, ww in zip(i[ok], j[ok], u[ok], w[ok]):
        r1, r2, res = _newton_pair(curve, s[a] + uu * h, s[b] + ww * h, lo, hi)
        if res > tau:
            continue
        r1, r2 = min(r1, r2), max(r1, r2)
        if r2 - r1 < 3 * h:
            continue
        if closed:
            m = sorted(((r1 - lo) % P, (r2 - lo) % P))
            if min(m[1] - m[0], P - (m[1] - m[0])) < 3 * h:
                continue
            key = (round(m[0], 7), round(m[1], 7))
        elif P:
            key = (round((r1 - lo) % P, 7), round(r2 - r1, 7))
        else:
            key = (round(r1, 7), round(r2, 7))
        if key not in found:
            found[key] = (r1, r2)
    return sorted(found.values())


def tangent_arc(data, r1, r2, step=1e-3):
    """Oscillation of the tangent-angle lift over [r1, r2]."""
    x = _grid(r1, r2, step)
    th = data.theta(x)
    _, ymin = _local_extrema(x, th, data.theta, -1)
    _, ymax = _local_extrema(x, th, data.theta, 1)
    return float(ymax.max() - ymin.min())
