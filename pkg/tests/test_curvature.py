import numpy as np
import pytest
import sympy as sp

from maxsheet.curvature import (blowup_identity_residual, blowup_integral,
                                cross_section_curvature, curvature_report,
                                mean_curvature_scalar, mixed_norm_table,
                                second_derivatives, trace_orthogonal_ray)
from maxsheet.errors import (NotSingularAnchor, NotTimelike, RequiresPeriodic,
                             SingularOnPath)
from maxsheet.evolution import FunctionSheet
from maxsheet.gauge_transform import ArclengthSheet
from maxsheet.initial_data import dot

from conftest import cached_entry, cached_sheet

S, T = sp.symbols("s t", real=True)


def sympy_sheet(x, y):
    """FunctionSheet with exact derivatives of gamma = (x(s, t), y(s, t))."""
    exprs = {
        "eval": (x, y),
        "ds": (sp.diff(x, S), sp.diff(y, S)),
        "dt": (sp.diff(x, T), sp.diff(y, T)),
        "dss": (sp.diff(x, S, 2), sp.diff(y, S, 2)),
        "dtt": (sp.diff(x, T, 2), sp.diff(y, T, 2)),
        "dst": (sp.diff(x, S, T), sp.diff(y, S, T)),
    }

    def wrap(pair):
        fx, fy = (sp.lambdify((S, T), e, "numpy") for e in pair)
        return lambda s, t: np.stack([fx(s, t) + 0 * s, fy(s, t) + 0 * s], axis=-1)

    return FunctionSheet(**{k: wrap(v) for k, v in exprs.items()})


def minkowski_mean_curvature(x, y):
    """tr(g^-1 II) of phi = (t, x, y) with the Minkowski-unit spacelike normal."""
    phi = sp.Matrix([T, x, y])
    eta = sp.diag(-1, 1, 1)
    ip = lambda a, b: (a.T * eta * b)[0]
    ps, pt = phi.diff(S), phi.diff(T)
    g = sp.Matrix([[ip(ps, ps), ip(ps, pt)], [ip(pt, ps), ip(pt, pt)]])
    # normal: eta-orthogonal to ps and pt
    n = eta * ps.cross(pt)
    n = n / sp.sqrt(ip(n, n))
    II = sp.Matrix([[ip(phi.diff(S, 2), n), ip(phi.diff(S, T), n)],
                    [ip(phi.diff(S, T), n), ip(phi.diff(T, 2), n)]])
    return sp.lambdify((S, T), sp.simplify((g.inv() * II).trace()), "numpy")


@pytest.mark.parametrize("x, y", [
    (S, T ** 2 / 3),
    ((2 + sp.sin(T) / 3) * sp.cos(S), (2 + sp.sin(T) / 3) * sp.sin(S)),
])
def test_mean_curvature_against_symbolic_oracle(x, y):
    sheet = sympy_sheet(x, y)
    oracle = minkowski_mean_curvature(x, y)
    s = np.linspace(-1, 1, 7)
    t = np.linspace(0.2, 1.1, 7)
    s, t = np.meshgrid(s, t)
    h = mean_curvature_scalar(sheet, s, t)
    # orientation of the normal is a convention
    assert np.max(np.abs(np.abs(h) - np.abs(oracle(s, t)))) < 1e-10
    h_fd = mean_curvature_scalar(FunctionSheet(sheet.eval, sheet.ds, sheet.dt), s, t)
    assert np.max(np.abs(h_fd - h)) < 1e-7


def test_second_derivatives_fallback():
    sheet = sympy_sheet(S * sp.cos(T), sp.sin(S) * T)
    s, t = np.linspace(-1, 1, 5), np.linspace(-1, 1, 5)
    exact = second_derivatives(sheet, s, t)
    plain = FunctionSheet(sheet.eval, sheet.ds, sheet.dt)
    approx = second_derivatives(plain, s, t)
    for a, b in zip(exact, approx):
        assert np.max(np.abs(a - b)) < 1e-9


def test_evolved_sheets_are_maximal(entry_name):
    sh = cached_sheet(entry_name)
    from maxsheet.gallery import diamond_points
    s, t = diamond_points(*cached_entry(entry_name).diamond, 512, seed=5)
    gs, gt = sh.ds(s, t), sh.dt(s, t)
    ok = (dot(gt, gt) < 1 - 1e-3) & (dot(gt, gt) > 1e-6) & (dot(gs, gs) > 1e-4)
    if not ok.any():
        pytest.skip("no point with a defined normal")
    h = mean_curvature_scalar(sh, s[ok], t[ok])
    assert np.max(np.abs(h)) < 1e-8


def test_circle_curvature():
    sh = cached_sheet("shrinking_circle")
    s, t = np.meshgrid(np.linspace(-3, 3, 13), np.linspace(-1.4, 1.4, 15))
    c = cross_section_curvature(sh, s, t)
    assert np.max(np.abs(np.abs(c.kappa_std) - 1 / np.cos(t))) < 1e-12
    assert np.isnan(cross_section_curvature(sh, 0.3, np.pi / 2).kappa_std)
    # FD path agrees with the analytic one
    fd = cross_section_curvature(sh, s, t, step=1e-4)
    assert np.max(np.abs(fd.kappa_std - c.kappa_std)) < 1e-8


def test_not_timelike_mean_curvature():
    sheet = sympy_sheet(S, T)
    with pytest.raises(NotTimelike):
        mean_curvature_scalar(sheet, np.array([0.0]), np.array([0.0]))


def test_blowup_identity_residual_second_order():
    sh = cached_sheet("cigar")
    s, t = np.linspace(-1, 1, 9), np.linspace(0.3, 0.7, 9)
    r1 = blowup_identity_residual(sh, s, t, 2e-3)
    r2 = blowup_identity_residual(sh, s, t, 1e-3)
    assert np.min(np.log2(r1 / r2)) > 1.9


def test_blowup_integral_circle():
    sh = cached_sheet("shrinking_circle")
    b = blowup_integral(sh, 0.0, np.pi / 2)
    F = lambda x: np.log(1 / np.cos(x) + np.tan(x))
    tt = np.pi / 2 - b.deltas
    assert np.max(np.abs(b.partial_integrals - (F(tt) - F(tt[0])))) < 1e-6
    assert b.verdict == "divergent"
    assert b.log_model_slope == pytest.approx(0.5, abs=0.02)
    with pytest.raises(NotSingularAnchor):
        blowup_integral(sh, 0.0, 1.0)


def test_mixed_norm_table_circle():
    sh = cached_sheet("shrinking_circle")
    tab = mixed_norm_table(sh, [1.5, 2.0, 4.0], [1.5, 2.0, 4.0], (0.0, np.pi / 2))
    assert tab.lookup(1.5, 1.5).verdict == "finite"
    assert tab.lookup(4.0, 4.0).verdict == "divergent"
    assert tab.lookup(2.0, 2.0).verdict == "inconclusive"
    lines = tab.to_csv().splitlines()
    assert lines[0] == "p,q,verdict,last_truncation_value" and len(lines) == 10
    with pytest.raises(RequiresPeriodic):
        mixed_norm_table(cached_sheet("plane"), [2.0], [2.0], (0.0, 1.0))


def test_orthogonal_ray_on_arclength_circle():
    A = ArclengthSheet(cached_sheet("shrinking_circle"), (-0.6, 0.6, 0.0, 0.8))
    ray = trace_orthogonal_ray(A, 0.4, 0.8, 0.75)
    assert ray.residual < 1e-9
    assert np.max(np.abs(ray.r - 0.4 * np.cos(ray.t) / np.cos(0.8))) < 1e-9
    assert ray(0.5) == pytest.approx(0.4 * np.cos(0.5) / np.cos(0.8), abs=1e-9)


def test_orthogonal_ray_stops_at_singularity():
    with pytest.raises(SingularOnPath):
        trace_orthogonal_ray(cached_sheet("shrinking_circle"), 0.3, np.pi / 2, 0.5)


def test_curvature_report_layout():
    rep = curvature_report(cached_sheet("shrinking_circle"), np.linspace(0, 1, 3), [0.0, 0.5])
    lines = rep.to_csv().splitlines()
    assert lines[0] == "s,t,kappa_std,k_paper,h" and len(lines) == 7
    assert rep.kappa_std.shape == (2, 3)
