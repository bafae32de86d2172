import numpy as np
import pytest

from maxsheet import gallery
from maxsheet.errors import UnknownName

from conftest import cached_entry


def test_regression_passes(entry_name):
    rep = gallery.run_regression(cached_entry(entry_name))
    assert rep.passed, rep.failures
    assert all(v <= tol for v, tol in rep.deviations.values())
    assert rep.deviations


def test_build_with_parameter():
    e = gallery.build("cigar(1.0)")
    assert e.params["L"] == 1.0
    assert gallery.build("periodic_wedge", L=4.0).reference["L"] == 4.0


@pytest.mark.parametrize("name", ["nope", "plane(2)", "cigar(", ""])
def test_build_rejects_unknown(name):
    with pytest.raises(UnknownName):
        gallery.build(name)


def test_build_rejects_bad_parameter():
    with pytest.raises(ValueError):
        gallery.build("cigar", L=-1.0)


def test_check_c1_detects_kink():
    with pytest.raises(gallery.NotC1):
        gallery.check_c1([0.0], [lambda s: np.stack([s, 0 * s], -1), lambda s: np.stack([s, s], -1)],
                         [lambda s: np.stack([1 + 0 * s, 0 * s], -1),
                          lambda s: np.stack([1 + 0 * s, 1 + 0 * s], -1)])


def test_diamond_points_fill_diamond():
    s, t = gallery.diamond_points(-1.0, 3.0, 1024)
    assert np.all(np.abs(t) <= np.minimum(s + 1.0, 3.0 - s) + 1e-12)
    assert np.array_equal(s, gallery.diamond_points(-1.0, 3.0, 1024)[0])


def test_report_records_failures():
    rep = gallery.RegressionReport("x")
    rep.record("a", 1e-3, 1e-6)
    rep.expect("b", "y", "z")
    assert not rep.passed and len(rep.failures) == 2
    assert rep.max_deviation == 1e-3
