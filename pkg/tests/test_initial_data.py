import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxsheet.errors import DomainExceeded, GaugeViolation, NotImmersed, NotTimelike
from maxsheet.initial_data import (CumulativeIntegral, CurveProvider, InitialData,
                                   VelocityProvider, angle_data, angular_lift, dot,
                                   load_curve_csv, normalize_initial_data, perp, unit)

from conftest import cached_entry
from helpers import random_smooth_data


def ellipse_raw(a, b, domain=(-3.0, 3.0)):
    c = lambda s: np.stack([a * np.cos(s), b * np.sin(s)], axis=-1)
    dc = lambda s: np.stack([-a * np.sin(s), b * np.cos(s)], axis=-1)
    return CurveProvider(c, dc, domain=domain)


def normal_velocity(curve, amp):
    def v(s):
        d = curve.deriv(s)
        n = perp(d / np.linalg.norm(d, axis=-1)[..., None])
        return (amp * np.cos(s))[..., None] * n
    return VelocityProvider(v)


def test_cumulative_integral_matches_antiderivative():
    F = CumulativeIntegral(np.cos, np.linspace(-3, 3, 49))
    x = np.linspace(-3, 3, 1001)
    assert np.max(np.abs(F(x) - np.sin(x))) < 1e-13


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=50, deadline=None)
def test_cumulative_difference_is_antisymmetric(a, b):
    F = CumulativeIntegral(np.cos, np.linspace(-3, 3, 49))
    d = F.diff(np.array(b), np.array(a))
    assert d == -F.diff(np.array(a), np.array(b))
    assert abs(d - (np.sin(b) - np.sin(a))) < 1e-13


def test_difference_ignores_integrand_outside_interval():
    knots = np.linspace(-3, 3, 49)
    F = CumulativeIntegral(np.cos, knots)
    bump = lambda x: np.cos(x) + np.where(np.abs(x - 2.0) < 0.3, 1.0, 0.0)
    G = CumulativeIntegral(bump, knots)
    a, b = np.array([-2.9, -1.0, 0.05]), np.array([1.69, 1.2, 0.06])
    assert np.array_equal(F.diff(b, a), G.diff(b, a))


def test_normalize_circle_to_unit_speed():
    c_raw = ellipse_raw(2.0, 2.0)
    d = normalize_initial_data(c_raw, VelocityProvider.zeros())
    x = np.linspace(*d.window, 301)
    assert np.max(np.abs(np.linalg.norm(d.c.deriv(x), axis=-1) - 1.0)) < 1e-9
    # arclength on a radius-2 circle from s = 0
    assert np.max(np.abs(d.c.eval(x) - np.stack([2 * np.cos(x / 2), 2 * np.sin(x / 2)], -1))) < 1e-8
    assert d.window == pytest.approx((-6.0, 6.0), abs=1e-9)


def test_normalize_projects_velocity_onto_normal():
    c_raw = ellipse_raw(1.5, 1.0)
    tangential = VelocityProvider(lambda s: 0.3 * c_raw.deriv(s) / np.linalg.norm(
        c_raw.deriv(s), axis=-1)[..., None])
    d = normalize_initial_data(c_raw, tangential)
    x = np.linspace(*d.window, 201)
    assert np.max(np.abs(d.v.eval(x))) < 1e-12


@given(st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(-0.7, 0.7))
@settings(max_examples=8, deadline=None)
def test_normalize_is_idempotent(a, b, amp):
    c_raw = ellipse_raw(a, b)
    d1 = normalize_initial_data(c_raw, normal_velocity(c_raw, amp))
    o, sp = d1.gauge_residuals(d1.sample_grid(501))
    assert o.max() < 1e-9 and sp.max() < 1e-9
    d2 = normalize_initial_data(d1.c, d1.v)
    assert d2.window == pytest.approx(d1.window, abs=1e-9)
    x = np.linspace(*d1.window, 101)[1:-1]
    assert np.max(np.abs(d2.c.eval(x) - d1.c.eval(x))) < 1e-8
    assert np.max(np.abs(d2.v.eval(x) - d1.v.eval(x))) < 1e-8


def test_normalize_rejects_bad_input():
    flat = CurveProvider(lambda s: np.stack([s ** 3, 0 * s], -1),
                         lambda s: np.stack([3 * s ** 2, 0 * s], -1), domain=(-1, 1))
    with pytest.raises(NotImmersed):
        normalize_initial_data(flat, VelocityProvider.zeros())
    with pytest.raises(NotTimelike):
        normalize_initial_data(ellipse_raw(1, 1), normal_velocity(ellipse_raw(1, 1), 1.0))


def test_initial_data_validates_gauge():
    c = ellipse_raw(2.0, 2.0)
    with pytest.raises(GaugeViolation):
        InitialData(c, VelocityProvider.zeros())


def test_curve_rejects_parameters_outside_window():
    d = cached_entry("shrinking_circle").data
    with pytest.raises(DomainExceeded):
        d.c.eval(np.array([d.window[1] + 1.0]))


@pytest.mark.parametrize("body, message", [
    ("", "empty"),
    ("s,x,y,v1,v2\n0,0,0,0,0\n", "header"),
    ("s,c1,c2,v1,v2\n0,0,0,0,0\n1,1,0,0,0\n", "at least 4"),
    ("s,c1,c2,v1,v2\n0,0,0,0,0\n1,1,0,0,0\n1,2,0,0,0\n3,3,0,0,0\n", "increasing"),
    ("s,c1,c2,v1,v2\n0,0,0,0,0\n1,a,0,0,0\n2,2,0,0,0\n3,3,0,0,0\n", "non-numeric"),
])
def test_csv_errors(tmp_path, body, message):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(ValueError, match=message):
        load_curve_csv(p)


def test_csv_circle_round_trip(tmp_path):
    s = np.linspace(0, 2 * np.pi, 401)
    rows = np.column_stack([s, np.cos(s), np.sin(s), 0 * s, 0 * s])
    p = tmp_path / "circle.csv"
    np.savetxt(p, rows, delimiter=",", header="s,c1,c2,v1,v2", comments="")
    d = load_curve_csv(p)
    x = np.linspace(*d.window, 200)
    assert np.max(np.abs(np.linalg.norm(d.c.eval(x), axis=-1) - 1.0)) < 1e-6
    assert d.tau_gauge == pytest.approx(1e-6)


def test_null_directions_of_static_circle():
    d = cached_entry("shrinking_circle").data
    s = np.linspace(-3, 3, 101)
    assert np.allclose(d.a_plus(s), d.c.deriv(s), atol=1e-15)
    assert np.allclose(d.a_minus(s), -d.c.deriv(s), atol=1e-15)


def test_null_directions_are_unit_and_match_lifts(entry_name):
    d = cached_entry(entry_name).data
    s = np.linspace(*d.window, 2001)
    ap, am = d.a_plus(s), d.a_minus(s)
    assert np.max(np.abs(np.linalg.norm(ap, axis=-1) - 1)) < 1e-9
    assert np.max(np.abs(np.linalg.norm(am, axis=-1) - 1)) < 1e-9
    assert np.max(np.abs(unit(d.alpha_plus(s)) - ap)) < 1e-8
    assert np.max(np.abs(unit(d.alpha_minus(s)) - am)) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_beta_at_time_zero_in_open_interval(seed):
    d = random_smooth_data(seed)
    s = np.linspace(*d.window, 2001)
    b = d.alpha_plus(s) - d.alpha_minus(s)
    assert np.all(b > 0) and np.all(b < 2 * np.pi)


def test_angular_lift_is_continuous():
    d = cached_entry("figure_eight").data
    lift = angular_lift(d, np.linspace(0, 2 * np.pi, 4001))
    assert np.max(np.abs(np.diff(lift.theta))) < 0.01
    assert -np.pi < lift.theta[0] <= np.pi


def test_angle_data_satisfies_gauge():
    d = random_smooth_data(3)
    o, sp = d.gauge_residuals(d.sample_grid(2001))
    assert o.max() < 1e-12 and sp.max() < 1e-12
    s = np.linspace(-7, 7, 11)
    h = 1e-5
    fd = (d.c.eval(s + h) - d.c.eval(s - h)) / (2 * h)
    assert np.max(np.abs(fd - d.c.deriv(s))) < 1e-8
