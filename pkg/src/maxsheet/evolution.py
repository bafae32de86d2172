"""Isothermal-gauge evolution by the d'Alembert representation.

gamma(s, t) = (c(s+t) + c(s-t) + W(s+t) - W(s-t)) / 2 with W' = v.
Derivatives come from the null directions a+- = v +- c'.
"""
from __future__ import annotations

import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .initial_data import InitialData


def thread_count(default=None):
    """Worker cap from MAXSHEET_THREADS (falls back to the CPU count)."""
    env = os.environ.get("MAXSHEET_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return default or min(8, os.cpu_count() or 1)


def fmt(x):
    """Shortest round-trip decimal text for a float."""
    return repr(float(x))


class IsothermalSheet:
    """The evolved map gamma(s, t) of gauge-normalized initial data."""

    def __init__(self, data: InitialData):
        self.data = data

    @property
    def has_second(self):
        return self.data.has_second

    def _chars(self, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        return s + t, s - t

    def eval(self, s, t):
        xi, eta = self._chars(s, t)
        d = self.data
        return 0.5 * (d.c.eval(xi) + d.c.eval(eta) + d.W_diff(xi, eta))

    __call__ = eval

    def ds(self, s, t):
        xi, eta = self._chars(s, t)
        return 0.5 * (self.data.a_plus(xi) - self.data.a_minus(eta))

    def dt(self, s, t):
        xi, eta = self._chars(s, t)
        return 0.5 * (self.data.a_plus(xi) + self.data.a_minus(eta))

    def dss(self, s, t):
        xi, eta = self._chars(s, t)
        return 0.5 * (self.data.da_plus(xi) - self.data.da_minus(eta))

    dtt = dss

    def dst(self, s, t):
        xi, eta = self._chars(s, t)
        return 0.5 * (self.data.da_plus(xi) + self.data.da_minus(eta))


def evolve(data: InitialData) -> IsothermalSheet:
    return IsothermalSheet(data)


class FunctionSheet:
    """A sheet (s, t) -> gamma given by explicit vectorized callables.

    Used for parameterizations that are not in isothermal gauge (test sheets,
    per-slice arclength reparameterizations).
    """

    def __init__(self, eval, ds, dt, dss=None, dtt=None, dst=None,
                 window=None):
        self._f = eval
        self._ds, self._dt = ds, dt
        self._dss, self._dtt, self._dst = dss, dtt, dst
        self.window = window

    @property
    def has_second(self):
        return None not in (self._dss, self._dtt, self._dst)

    @staticmethod
    def _b(s, t):
        return np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))

    def eval(self, s, t):
        return self._f(*self._b(s, t))

    __call__ = eval

    def ds(self, s, t):
        return self._ds(*self._b(s, t))

    def dt(self, s, t):
        return self._dt(*self._b(s, t))

    def dss(self, s, t):
        return self._dss(*self._b(s, t))

    def dtt(self, s, t):
        return self._dtt(*self._b(s, t))

    def dst(self, s, t):
        return self._dst(*self._b(s, t))


@dataclass
class GridSample:
    """Row-major samples: axis 0 is t, axis 1 is s (s fastest)."""
    s: np.ndarray
    t: np.ndarray
    gamma: np.ndarray
    gs: np.ndarray
    gt: np.ndarray

    def to_csv(self):
        buf = io.StringIO()
        buf.write("s,t,g1,g2,gs1,gs2,gt1,gt2\n")
        for j, t in enumerate(self.t):
            for i, s in enumerate(self.s):
                g, a, b = self.gamma[j, i], self.gs[j, i], self.gt[j, i]
                buf.write(",".join(fmt(x) for x in (s, t, g[0], g[1], a[0], a[1], b[0], b[1])))
                buf.write("\n")
        return buf.getvalue()


def evaluate_grid(sheet, s_grid, t_grid, threads=None) -> GridSample:
    s = np.atleast_1d(np.asarray(s_grid, dtype=float))
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))

    def row(tj):
        tt = np.full_like(s, tj)
        return sheet.eval(s, tt), sheet.ds(s, tt), sheet.dt(s, tt)

    n = thread_count(threads)
    if n > 1 and len(t) > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            rows = list(ex.map(row, t))
    else:
        rows = [row(tj) for tj in t]
    g, gs, gt = (np.stack([r[k] for r in rows]) for k in range(3))
    return GridSample(s, t, g, gs, gt)


@dataclass
class Mesh:
    vertices: np.ndarray   # (N, 3) rows (t, x1, x2)
    faces: np.ndarray      # (M, 3), zero-based

    def to_obj(self):
        lines = [f"v {fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in self.vertices]
        lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in self.faces]
        return "\n".join(lines) + "\n"


def mesh_export(sheet, s_grid, t_grid, threads=None, grid=None) -> Mesh:
    """Triangle mesh of phi(s, t) = (t, gamma(s, t)); vertex j*ns + i is (s_i, t_j).

    `grid` may pass an already evaluated GridSample on the same grid.
    """
    s = np.asarray(s_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    if s.size < 2 or t.size < 2:
        raise ValueError("mesh_export needs at least a 2x2 grid")
    g = (grid if grid is not None else evaluate_grid(sheet, s, t, threads)).gamma
    ns, nt = s.size, t.size
    tt = np.repeat(t, ns)
    verts = np.column_stack([tt, g.reshape(-1, 2)])
    j, i = np.meshgrid(np.arange(nt - 1), np.arange(ns - 1), indexing="ij")
    v00 = (j * ns + i).ravel()
    v10 = v00 + 1
    v01 = v00 + ns
    v11 = v01 + 1
    faces = np.empty((2 * v00.size, 3), dtype=np.int64)
    faces[0::2] = np.column_stack([v00, v10, v11])
    faces[1::2] = np.column_stack([v00, v11, v01])
    return Mesh(verts, faces)
