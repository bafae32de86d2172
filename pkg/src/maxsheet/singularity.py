"""Singular set, singularity criteria and tangent-discontinuity classification.

In characteristic coordinates xi = s + t, eta = s - t the angle function
beta(s, t) = alpha_+(xi) - alpha_-(eta) is a difference of two one-variable
functions, and the diamond D(s1, s2) is exactly the square [s1, s2]^2.  All
scans exploit this: only 1-D arrays of alpha_+- are ever evaluated on grids.
"""
from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize_scalar
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import tolerances as tol
from .errors import (GridTooCoarse, NoSignChange, NotFound,
                     NotUniformlyTimelike)
from .evolution import fmt, thread_count
from .initial_data import TWO_PI, unit

_ROWS_PER_CHUNK = 128
_POINT_BLOCK = 1 << 18
_DENSE_CELLS = 1 << 26


def wrap(x):
    """Signed remainder of x modulo 2 pi, in [-pi, pi)."""
    return (np.asarray(x, dtype=float) + np.pi) % TWO_PI - np.pi


@dataclass(frozen=True)
class CharacteristicDiamond:
    s1: float
    s2: float

    def __post_init__(self):
        if not self.s2 > self.s1:
            raise ValueError("diamond needs s1 < s2")

    @property
    def half_width(self):
        return 0.5 * (self.s2 - self.s1)

    def contains(self, s, t, slack=0.0):
        s = np.asarray(s, dtype=float)
        a = np.abs(np.asarray(t, dtype=float))
        return (self.s1 + a <= s + slack) & (s <= self.s2 - a + slack)


class BetaField:
    """beta(s, t) = alpha_+(s + t) - alpha_-(s - t) from the stored lifts."""

    def __init__(self, data):
        self.data = data

    def __call__(self, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        return self.data.alpha_plus(s + t) - self.data.alpha_minus(s - t)

    eval = __call__


def beta(data) -> BetaField:
    return BetaField(data)


@dataclass
class SingularSet:
    points: np.ndarray          # (N, 2) columns s, t
    beta_mod: np.ndarray        # signed remainder of beta modulo 2 pi
    component_id: np.ndarray
    component_class: list       # class name per component id
    diamond: CharacteristicDiamond
    grid_step: float

    @property
    def is_empty(self):
        return len(self.points) == 0

    def __len__(self):
        return len(self.points)

    @property
    def n_components(self):
        return len(self.component_class)

    def classes(self):
        return np.array([self.component_class[i] for i in self.component_id], dtype=object)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("s,t,beta_mod_2pi,component_id,class\n")
        for (s, t), b, c in zip(self.points, self.beta_mod, self.component_id):
            buf.write(f"{fmt(s)},{fmt(t)},{fmt(b)},{int(c)},{self.component_class[c]}\n")
        return buf.getvalue()


def _bisect(g, a, b, iters=64):
    """Vectorized bisection of g on brackets [a, b] with g(a) g(b) <= 0."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    ga = g(a)
    for _ in range(iters):
        m = 0.5 * (a + b)
        gm = g(m)
        left = np.sign(gm) == np.sign(ga)
        a = np.where(left, m, a)
        ga = np.where(left, gm, ga)
        b = np.where(left, b, m)
        if np.all(np.abs(b - a) <= 4e-16 * np.maximum(1.0, np.abs(a))):
            break
    return 0.5 * (a + b)


def find_singular_set(data, diamond, grid_step, tau=None, t_bound=None,
                      threads=None) -> SingularSet:
    """Locate K_sing = {beta in 2 pi Z} inside a characteristic diamond.

    The square [s1, s2]^2 in (xi, eta) is scanned row by row.  Grid values
    with |beta mod 2 pi| <= tau are kept directly; sign changes of
    beta - 2 pi k along either characteristic direction are refined by
    bisection; tangential zeros (joint extrema of alpha_+ and alpha_-) are
    found by refining the 1-D extrema.  Components come from 8-neighbour
    adjacency of the grid cells holding points.
    """
    if isinstance(diamond, tuple):
        diamond = CharacteristicDiamond(*diamond)
    tau = data.tau_sing if tau is None else tau
    s1, s2 = diamond.s1, diamond.s2
    n = int(np.ceil((s2 - s1) / grid_step)) + 1
    x = np.linspace(s1, s2, n)
    h = x[1] - x[0]
    A = data.alpha_plus(x)
    B = data.alpha_minus(x)
    ap = data.alpha_plus
    am = data.alpha_minus

    def chunk(j0):
        j1 = min(j0 + _ROWS_PER_CHUNK, n)
        jj = np.arange(j0, min(j1 + 1, n))
        Wc = A[None, :] - B[jj, None]                       # rows eta, cols xi
        w = wrap(Wc)
        exact = np.abs(w) <= tau
        kf = np.floor(Wc / TWO_PI)
        xi_out, eta_out = [], []
        # exact grid hits (own rows only)
        r, c = np.nonzero(exact[: j1 - j0])
        xi_out.append(x[c])
        eta_out.append(x[jj[r]])
        # xi-edges inside own rows
        own = slice(0, j1 - j0)
        e = (kf[own, 1:] != kf[own, :-1]) & ~exact[own, 1:] & ~exact[own, :-1]
        r, c = np.nonzero(e)
        if r.size:
            lvl = TWO_PI * np.maximum(kf[r, c], kf[r, c + 1])
            bj = B[jj[r]]
            xs = _bisect(lambda z: ap(z) - bj - lvl, x[c], x[c + 1])
            xi_out.append(xs)
            eta_out.append(x[jj[r]])
        # eta-edges between row j and j + 1
        if len(jj) > 1:
            m = len(jj) - 1
            e = (kf[1:m + 1] != kf[:m]) & ~exact[1:m + 1] & ~exact[:m]
            r, c = np.nonzero(e)
            if r.size:
                lvl = TWO_PI * np.maximum(kf[r, c], kf[r + 1, c])
                ai = A[c]
                es = _bisect(lambda z: ai - am(z) - lvl, x[jj[r]], x[jj[r] + 1])
                xi_out.append(x[c])
                eta_out.append(es)
        return np.concatenate(xi_out), np.concatenate(eta_out)

    starts = list(range(0, n, _ROWS_PER_CHUNK))
    nt = thread_count(threads)
    if nt > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=nt) as ex:
            parts = list(ex.map(chunk, starts))
    else:
        parts = [chunk(j0) for j0 in starts]
    xi = np.concatenate([p[0] for p in parts] + [np.empty(0)])
    eta = np.concatenate([p[1] for p in parts] + [np.empty(0)])

    txi, teta = _tangential_zeros(data, x, A, B, tau)
    xi = np.concatenate([xi, txi])
    eta = np.concatenate([eta, teta])

    s = 0.5 * (xi + eta)
    t = 0.5 * (xi - eta)
    if t_bound is not None:
        keep = np.abs(t) <= t_bound + 1e-12
        xi, eta, s, t = xi[keep], eta[keep], s[keep], t[keep]
    if xi.size:
        ks, kt = np.round(s, 12), np.round(t, 12)
        order = np.lexsort((kt, ks))
        ks, kt = ks[order], kt[order]
        dup = np.zeros(order.size, dtype=bool)
        dup[1:] = (ks[1:] == ks[:-1]) & (kt[1:] == kt[:-1])
        first = np.sort(order[~dup])
        del ks, kt, order, dup
        xi, eta, s, t = xi[first], eta[first], s[first], t[first]
    bm = np.empty(xi.size)
    for i in range(0, xi.size, _POINT_BLOCK):
        sl = slice(i, i + _POINT_BLOCK)
        bm[sl] = wrap(ap(xi[sl]) - am(eta[sl]))
    comp, classes = _components(xi, eta, s1, h, n)
    order = np.lexsort((s, t, comp))
    return SingularSet(np.column_stack([s, t])[order], bm[order], comp[order],
                       classes, diamond, float(h))


def _local_extrema(x, f_vals, f, sense):
    """Refined local extrema (sense=+1 max, -1 min) of a sampled function,
    endpoints included."""
    y = sense * f_vals
    n = len(y)
    if n < 3:
        idx = np.array([int(np.argmax(y))])
    else:
        d = np.diff(y)
        interior = np.nonzero((d[:-1] > 0) & (d[1:] <= 0))[0] + 1
        ends = []
        if d[0] < 0:
            ends.append(0)
        if d[-1] > 0:
            ends.append(n - 1)
        idx = np.unique(np.concatenate([interior, ends, [int(np.argmax(y))]]).astype(int))
    out_x, out_y = [], []
    for i in idx[:4000]:
        if i == 0 or i == n - 1:
            out_x.append(x[i])
            out_y.append(f_vals[i])
            continue
        res = minimize_scalar(lambda z: -sense * float(f(np.array([z]))[0]),
                              bounds=(x[i - 1], x[i + 1]), method="bounded",
                              options={"xatol": 1e-12})
        z, fz = res.x, -sense * res.fun
        if sense * fz < sense * f_vals[i]:
            z, fz = x[i], f_vals[i]
        out_x.append(z)
        out_y.append(fz)
    return np.asarray(out_x, dtype=float), np.asarray(out_y, dtype=float)


def _tangential_zeros(data, x, A, B, tau):
    """Zeros of beta - 2 pi k that the grid cannot see as sign changes.

    A zero of W(xi, eta) = A(xi) - B(eta) without a sign change is a local
    extremum of W, hence a pair of 1-D extrema of A and B.  Pairs whose value
    sits within tau of 2 pi Z are zeros; pairs that overshoot a multiple of
    2 pi by less than the local cell variation enclose a small loop of zeros,
    which is located by bisection along xi.
    """
    out_xi, out_eta = [], []
    for sa, sb in ((1, -1), (-1, 1)):
        xa, ya = _local_extrema(x, A, data.alpha_plus, sa)
        xb, yb = _local_extrema(x, B, data.alpha_minus, sb)
        if xa.size == 0 or xb.size == 0:
            continue
        W = ya[:, None] - yb[None, :]
        w = wrap(W)
        ia, ib = np.nonzero(np.abs(w) <= tau)
        out_xi.append(xa[ia])
        out_eta.append(xb[ib])
        # small closed loops around an overshooting extremum pair
        h = x[1] - x[0]
        ia, ib = np.nonzero((np.abs(w) > tau) & (sa * w > 0) & (np.abs(w) < 1.0))
        for i, j in zip(ia, ib):
            lvl = W[i, j] - w[i, j]
            g = lambda z, j=j, lvl=lvl: data.alpha_plus(z) - yb[j] - lvl
            for nb in (xa[i] - h, xa[i] + h):
                if x[0] <= nb <= x[-1] and np.sign(g(np.array(nb))) != np.sign(w[i, j]):
                    z = _bisect(g, np.array([xa[i]]), np.array([nb]))
                    out_xi.append(z)
                    out_eta.append(np.array([xb[j]]))
                    break
    if not out_xi:
        return np.empty(0), np.empty(0)
    return np.concatenate(out_xi), np.concatenate(out_eta)


def _components(xi, eta, s1, h, n):
    """8-neighbour components of the occupied scan cells, with classes.

    Components are numbered in raster order (eta row, then xi column) of
    their first cell.  Bounded cell boxes are labelled on a dense occupancy
    image; very large boxes fall back to a sparse adjacency graph.
    """
    if xi.size == 0:
        return np.zeros(0, dtype=int), []
    i = np.clip(np.round((xi - s1) / h).astype(np.int64), 0, n - 1)
    j = np.clip(np.round((eta - s1) / h).astype(np.int64), 0, n - 1)
    i0, j0 = i.min(), j.min()
    box = (int(i.max() - i0) + 3) * (int(j.max() - j0) + 3)
    if box <= _DENSE_CELLS:
        return _components_dense(i - i0 + 1, j - j0 + 1)
    keys = j * (n + 2) + i
    cells, inv = np.unique(keys, return_inverse=True)
    m = len(cells)
    rows, cols = [], []
    for dj, di in ((0, 1), (1, -1), (1, 0), (1, 1)):
        nb = cells + dj * (n + 2) + di
        pos = np.searchsorted(cells, nb)
        pos_c = np.minimum(pos, m - 1)
        ok = cells[pos_c] == nb
        rows.append(np.nonzero(ok)[0].astype(np.int32))
        cols.append(pos_c[ok].astype(np.int32))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(m, m))
    del rows, cols
    ncomp, labels = connected_components(graph, directed=False)
    # interior cells: all eight neighbours occupied
    interior = np.ones(m, dtype=bool)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj == 0 and di == 0:
                continue
            nb = cells + dj * (n + 2) + di
            pos = np.minimum(np.searchsorted(cells, nb), m - 1)
            interior &= cells[pos] == nb
    ci = cells % (n + 2)
    cj = cells // (n + 2)
    classes = []
    for c in range(ncomp):
        sel = labels == c
        if interior[sel].any():
            classes.append("region")
        elif np.ptp(ci[sel]) <= 2 and np.ptp(cj[sel]) <= 2:
            classes.append("isolated")
        else:
            classes.append("segment")
    return labels[inv].astype(int), classes


def _components_dense(i, j):
    occ = np.zeros((int(j.max()) + 2, int(i.max()) + 2), dtype=bool)
    occ[j, i] = True
    full = np.ones((3, 3), dtype=bool)
    labels, ncomp = ndimage.label(occ, structure=full)
    interior = ndimage.binary_erosion(occ, structure=full, border_value=0)
    has_interior = np.bincount(labels[interior], minlength=ncomp + 1)[1:] > 0
    classes = []
    for c, box in enumerate(ndimage.find_objects(labels)):
        rows, cols = box
        if has_interior[c]:
            classes.append("region")
        elif rows.stop - rows.start <= 3 and cols.stop - cols.start <= 3:
            classes.append("isolated")
        else:
            classes.append("segment")
    return labels[j, i].astype(int) - 1, classes


# ------------------------------------------------------------- criteria

def _grid(s1, s2, step=1e-3, min_n=2001):
    n = max(min_n, int(np.ceil((s2 - s1) / step)) + 1)
    return np.linspace(s1, s2, n)


@dataclass
class SemicircleVerdict:
    verdict: str
    sweep: float
    witness: tuple


def semicircle_criterion(data, s1, s2, tau_angle=tol.ANGLE) -> SemicircleVerdict:
    """guaranteed_singular iff the tangent angle sweeps at least a closed
    half-turn on [s1, s2]."""
    x = _grid(s1, s2)
    th = data.theta(x)
    xmin, ymin = _local_extrema(x, th, data.theta, -1)
    xmax, ymax = _local_extrema(x, th, data.theta, 1)
    a, b = xmin[np.argmin(ymin)], xmax[np.argmax(ymax)]
    sweep = float(ymax.max() - ymin.min())
    verdict = "guaranteed_singular" if sweep >= np.pi - tau_angle else "inconclusive"
    return SemicircleVerdict(verdict, sweep, (float(min(a, b)), float(max(a, b))))


@dataclass
class RegularityVerdict:
    verdict: str
    value: float
    oscillation: float
    sup_speed: float


def no_singularity_criterion(data, s1, s2, tau_sup=tol.SUP_MARGIN) -> RegularityVerdict:
    """guaranteed_regular iff osc(theta)^2 + sup|v|^2 < 1 on [s1, s2].

    Sampled suprema are inflated by the largest change between neighbouring
    samples, which bounds what the grid can miss for these continuous data.
    """
    x = _grid(s1, s2)
    th = data.theta(x)
    osc = float(np.ptp(th) + np.max(np.abs(np.diff(th))))
    vm = np.linalg.norm(data.v.eval(x), axis=-1)
    vsup = float(vm.max() + np.max(np.abs(np.diff(vm))))
    value = osc * osc + vsup * vsup
    verdict = "guaranteed_regular" if value < 1.0 - tau_sup else "inconclusive"
    return RegularityVerdict(verdict, value, osc, vsup)


def short_time_horizon(data, step=None, tau_sup=tol.SUP_MARGIN):
    """Conservative time T with no singular point for |t| <= T.

    Uses overlapping windows [s_k, s_k + delta], s_k = s_min + k delta / 2,
    and the largest delta for which each window passes the oscillation test;
    T = delta / 4.
    """
    lo, hi = data.window
    h = step or min(1e-3, (hi - lo) / 1e5)
    x = np.linspace(lo, hi, int(np.ceil((hi - lo) / h)) + 1)
    h = x[1] - x[0]
    vm = np.linalg.norm(data.v.eval(x), axis=-1)
    vsup = float(vm.max() + (np.max(np.abs(np.diff(vm))) if vm.max() > 0 else 0.0))
    if vm.max() >= 1.0 - tol.TIMELIKE:
        raise NotUniformlyTimelike(f"sup |v| = {vm.max():.12g}")
    eps = 1.0 - vsup * vsup
    th = data.theta(x)
    margin = float(np.max(np.abs(np.diff(th))))
    if np.ptp(th) + margin == 0.0 and eps > tau_sup:
        return float("inf")

    def ok(half):
        # windows are the samples [k half, (k + 2) half], length 2 half h
        starts = np.arange(0, len(x), half)
        bmax = np.maximum.reduceat(th, starts)
        bmin = np.minimum.reduceat(th, starts)
        ends = np.minimum(starts[2:], len(x) - 1)
        if ends.size == 0:
            osc = np.array([np.ptp(th)])
        else:
            wmax = np.maximum(np.maximum(bmax[:len(ends)], bmax[1:len(ends) + 1]), th[ends])
            wmin = np.minimum(np.minimum(bmin[:len(ends)], bmin[1:len(ends) + 1]), th[ends])
            osc = wmax - wmin
        osc = osc + margin
        return bool(np.all(osc * osc < eps - tau_sup))

    n_max = len(x) - 1
    good, bad = 0, 1
    while ok(bad):
        good, bad = bad, 2 * bad
        if 2 * bad > n_max:
            if ok(max(1, n_max // 2)):
                return 0.25 * (hi - lo)
            bad = max(n_max // 2, good + 1)
            break
    while bad - good > 1:
        mid = (good + bad) // 2
        if ok(mid):
            good = mid
        else:
            bad = mid
    if good == 0:
        raise GridTooCoarse("no window passes the oscillation test at grid scale")
    d_ok = 2 * good * h
    return 0.25 * d_ok


# ------------------------------------------------------------ tangents

def unit_tangent(sheet, beta_field, s, t, tau=None):
    """U = sgn(sin(beta/2)) e(s, t); NaN where |sin(beta/2)| <= tau."""
    data = sheet.data
    tau = data.tau_sing if tau is None else tau
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    ap = data.alpha_plus(s + t)
    am = data.alpha_minus(s - t)
    b = ap - am
    e = np.stack([-np.sin(0.5 * (ap + am)), np.cos(0.5 * (ap + am))], axis=-1)
    sg = np.sin(0.5 * b)
    U = np.sign(sg)[..., None] * e
    U[np.abs(sg) <= tau] = np.nan
    return U


def _sigma(data, s, t0):
    return np.sin(0.5 * (data.alpha_plus(s + t0) - data.alpha_minus(s - t0)))


@dataclass
class SignChangeTime:
    t_star: float
    s_interval: tuple
    s_negative: float
    s_positive: float
    candidates: list = field(default_factory=list)


def find_tangent_sign_change_time(data, t_range, t_step=0.01, s_step=0.01,
                                  s_range=None, tau=1e-9) -> SignChangeTime:
    """Earliest t in t_range at which sin(beta(., t)/2) takes both signs."""
    lo, hi = data.window
    t_a, t_b = float(t_range[0]), float(t_range[1])

    def probe(t):
        a, b = lo + abs(t), hi - abs(t)
        if s_range is not None:
            a, b = max(a, s_range[0]), min(b, s_range[1])
        if b <= a:
            return None
        s = np.linspace(a, b, max(3, int(np.ceil((b - a) / s_step)) + 1))
        sg = _sigma(data, s, t)
        neg, pos = np.nonzero(sg < -tau)[0], np.nonzero(sg > tau)[0]
        if neg.size and pos.size:
            return s[neg[0]], s[pos[0]]
        return None

    ts = np.linspace(t_a, t_b, max(2, int(np.ceil(abs(t_b - t_a) / t_step)) + 1))
    hits = [(t, probe(t)) for t in ts]
    cands = [float(t) for t, w in hits if w is not None]
    if not cands:
        raise NotFound("no sign change of sin(beta/2) on the scanned times")
    k = next(i for i, (_, w) in enumerate(hits) if w is not None)
    t_hit = ts[k]
    if k > 0:
        a, b = ts[k - 1], ts[k]
        for _ in range(50):
            mid = 0.5 * (a + b)
            if probe(mid) is None:
                a = mid
            else:
                b = mid
        t_hit = b
    sn, sp = probe(t_hit)
    return SignChangeTime(float(t_hit), (float(min(sn, sp)), float(max(sn, sp))),
                          float(sn), float(sp), cands)


@dataclass
class TangentClassification:
    classification: str
    r1: float
    r2: float
    m: int
    delta: float
    tangent_left: np.ndarray
    tangent_right: np.ndarray
    retrace_ratio: float = float("nan")


def _edge(data, t0, s_in, s_out, sign_in, tau):
    """Last parameter between s_in and s_out where sigma keeps sign_in."""
    g = lambda z: np.where(sign_in * _sigma(data, z, t0) > tau, 1.0, -1.0)
    return float(_bisect(g, np.array([s_in]), np.array([s_out]), iters=60)[0])


def classify_tangent_discontinuity(data, t0, s_interval, step=1e-3, tau=1e-9,
                                   tau_angle=tol.ANGLE, retrace_tol=1e-6):
    """Classify the first sign change of sin(beta(., t0)/2) in s_interval.

    r1, r2 bound the zero set between the last sample of the left sign and
    the first sample of the opposite sign.  A zero interval whose endpoint
    angles differ by an odd multiple of pi gives a C1 curve with a continuous
    tangent extension; a single zero is a cusp pair unless the two branches
    retrace each other, which leaves no continuous extension.
    """
    a, b = float(s_interval[0]), float(s_interval[1])
    s = np.linspace(a, b, max(101, int(np.ceil((b - a) / step)) + 1))
    sg = _sigma(data, s, t0)
    sign = np.where(sg > tau, 1, np.where(sg < -tau, -1, 0))
    nz = np.nonzero(sign)[0]
    change = np.nonzero(sign[nz[1:]] != sign[nz[:-1]])[0] if nz.size > 1 else []
    if len(change) == 0:
        raise NoSignChange(f"sin(beta/2) keeps its sign on [{a:.6g}, {b:.6g}] at t = {t0:.6g}")
    i_left = nz[change[0]]
    i_right = nz[change[0] + 1]
    sl = sign[i_left]
    r1 = _edge(data, t0, s[i_left], s[i_left + 1], sl, tau)
    r2 = _edge(data, t0, s[i_right], s[i_right - 1], -sl, tau)
    if r2 < r1:
        r1 = r2 = 0.5 * (r1 + r2)
    ap = data.alpha_plus
    delta = float(ap(np.array(r1 + t0)) - ap(np.array(r2 + t0)))
    m = int(np.round(delta / np.pi))
    from .evolution import IsothermalSheet
    sheet = IsothermalSheet(data)
    bf = BetaField(data)
    eps = 1e-6
    u_left = unit_tangent(sheet, bf, r1 - eps, t0, tau=0.0)
    u_right = unit_tangent(sheet, bf, r2 + eps, t0, tau=0.0)
    if r2 - r1 > 1e-6:
        if abs(delta / np.pi - m) <= tau_angle and m % 2 != 0:
            kind = "c1_curve_with_tangent_extension"
        else:
            kind = "degenerate_no_extension"
        return TangentClassification(kind, r1, r2, m, delta, u_left, u_right)
    # single zero: do the two branches trace the same arc?
    left_room, right_room = r1 - a, b - r2
    zl = np.nonzero((s < r1) & (sign != sl))[0]
    if zl.size:
        left_room = min(left_room, r1 - s[zl[-1]])
    zr = np.nonzero((s > r2) & (sign != -sl))[0]
    if zr.size:
        right_room = min(right_room, s[zr[0]] - r2)
    room = min(left_room, right_room, 0.5)
    ratio = _retrace_ratio(sheet, r1, t0, room)
    kind = "degenerate_no_extension" if ratio <= retrace_tol else "cusp_pair"
    return TangentClassification(kind, r1, r2, m, delta, u_left, u_right, ratio)


def _retrace_ratio(sheet, r, t0, room):
    """max_i dist(gamma(r - d_i), right branch) / |gamma(r - d_i) - gamma(r)|."""
    p = sheet.eval(r, t0)
    worst = 0.0
    for frac in (0.2, 0.1, 0.05):
        d = frac * room
        q = sheet.eval(r - d, t0)
        scale = np.linalg.norm(q - p)
        if scale == 0.0:
            continue
        f = lambda u: float(np.sum((sheet.eval(r + u, t0) - q) ** 2))
        us = np.linspace(0.0, min(3.0 * d, room), 301)
        vals = np.sum((sheet.eval(r + us, np.full_like(us, t0)) - q) ** 2, axis=-1)
        k = int(np.argmin(vals))
        lo_u, hi_u = us[max(k - 1, 0)], us[min(k + 1, len(us) - 1)]
        res = minimize_scalar(f, bounds=(lo_u, hi_u), method="bounded",
                              options={"xatol": 1e-14})
        dist = np.sqrt(min(res.fun, vals[k]))
        worst = max(worst, dist / scale)
    return float(worst)


def tangent_unit_formula(sheet, s, t):
    """gamma_s / |gamma_s| computed directly from the derivative evaluator."""
    g = sheet.ds(s, t)
    return g / np.linalg.norm(g, axis=-1)[..., None]


__all__ = [
    "BetaField", "CharacteristicDiamond", "SingularSet", "beta", "find_singular_set",
    "semicircle_criterion", "no_singularity_criterion", "short_time_horizon",
    "unit_tangent", "find_tangent_sign_change_time", "classify_tangent_discontinuity",
    "unit",
]
