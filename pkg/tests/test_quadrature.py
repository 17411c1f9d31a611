import math

import numpy as np
import pytest

from grushin_hardy import fields as F
from grushin_hardy.quadrature import (
    QuadratureBudgetError,
    QuadratureSettings,
    integrate,
    integrate_eps_limit,
    integrate_level,
)
from grushin_hardy.space import GrushinSpace, rho_array
from grushin_hardy.weights import DomainDescriptor

LINE = GrushinSpace(1, 0, 0.0)
PLANE = GrushinSpace(1, 1, 0.0)


def test_unit_square():
    r = integrate(PLANE, lambda X, Y: np.ones(X.shape[0]), settings=QuadratureSettings(box=((0, 1), (0, 1))))
    assert abs(r.value - 1.0) <= 1e-14
    assert r.error_estimate >= 0


def test_gaussian():
    s = QuadratureSettings(box=((-6, 6), (-6, 6)))
    r = integrate(PLANE, lambda X, Y: np.exp(-(X[:, 0] ** 2 + Y[:, 0] ** 2)), settings=s)
    assert abs(r.value - math.pi) / math.pi <= 1e-8


def test_bump_against_fine_trapezoid():
    # every derivative of the bump vanishes at +-1, so the trapezoid rule converges spectrally
    t = np.linspace(-1.0, 1.0, 1_000_001)
    oracle = np.trapezoid(F.bump(t), t) if hasattr(np, "trapezoid") else np.trapz(F.bump(t), t)
    s = QuadratureSettings(box=((-1.0, 1.0),), panels=16)
    r = integrate(LINE, lambda X, Y: F.bump(X[:, 0]), settings=s)
    assert abs(r.value - oracle) / oracle <= 1e-9


@pytest.mark.parametrize("nodes", [2, 4, 8])
def test_polynomial_exactness(nodes):
    s = QuadratureSettings(nodes=nodes, panels=1, box=((0.0, 1.0),))
    for d in range(2 * nodes):
        vals, _ = integrate_level(LINE, lambda X, Y: X[:, 0] ** d, None, s, panels=1)
        assert abs(vals[0] - 1.0 / (d + 1)) <= 1e-13 / (d + 1)


def test_refinement_reduces_error_estimate():
    prev = None
    for panels in (4, 8, 16):
        s = QuadratureSettings(box=((-1.0, 1.0), (-1.0, 1.0)), panels=panels)
        r = integrate(PLANE, lambda X, Y: F.bump(X[:, 0] / 0.9) * F.bump(Y[:, 0] / 0.9), settings=s)
        if prev is not None:
            assert r.error_estimate * 4 <= prev
        prev = r.error_estimate


def test_ball_measure():
    R = 1.3
    dom = DomainDescriptor("ball", R=R)
    r = integrate(PLANE, lambda X, Y: np.ones(X.shape[0]), dom)
    assert abs(r.value - math.pi * R**2) / (math.pi * R**2) <= 1e-3


def test_eps_independent_family():
    dom = DomainDescriptor("annulus", r0=1.0, r1=2.0)
    s = GrushinSpace(1, 1, 1.0)
    g = lambda X, Y: F.bump((rho_array(s, X, Y) - 1.5) / 0.5)
    r = integrate_eps_limit(s, lambda eps: g, dom)
    base = integrate(s, g, dom)
    assert r.value == pytest.approx(base.value, rel=1e-14)
    assert r.error_estimate == pytest.approx(base.error_estimate, rel=1e-12, abs=1e-15)


def test_eps_extrapolation_matches_excluded_direct():
    s = GrushinSpace(1, 1, 1.0)
    dom = DomainDescriptor("annulus", r0=1.0, r1=2.0)

    def family(eps):
        return lambda X, Y: F.bump((rho_array(s, X, Y) - 1.5) / 0.5) / rho_array(s, X, Y, eps)

    limit = integrate_eps_limit(s, family, dom)
    direct = integrate(s, lambda X, Y: F.bump((rho_array(s, X, Y) - 1.5) / 0.5) / rho_array(s, X, Y), dom,
                       QuadratureSettings(exclusion_x=1e-6))
    assert abs(limit.value - direct.value) <= 1e-5
    assert "non_monotone_ladder" not in limit.flags


def test_non_monotone_ladder_flagged():
    vals = iter([1.0, 3.0, 2.0])
    family = lambda eps: (lambda X, Y, v=next(vals): np.full(X.shape[0], v))
    r = integrate_eps_limit(PLANE, family, settings=QuadratureSettings(box=((0, 1), (0, 1))))
    assert "non_monotone_ladder" in r.flags


def test_settings_validation():
    with pytest.raises(ValueError):
        QuadratureSettings(eps_ladder=(1e-3, 1e-2))
    with pytest.raises(ValueError):
        QuadratureSettings(nodes=1)
    with pytest.raises(ValueError):
        QuadratureSettings(exclusion_x=-1.0)
    with pytest.raises(ValueError):
        QuadratureSettings.from_dict({"nodez": 3})
    assert QuadratureSettings.from_dict({"nodes": 6}).nodes == 6


def test_budget_reports_partial():
    s = QuadratureSettings(box=((0, 1), (0, 1)), budget=100)
    with pytest.raises(QuadratureBudgetError) as info:
        integrate(PLANE, lambda X, Y: np.ones(X.shape[0]), settings=s)
    assert hasattr(info.value, "partial")


def test_dimension_cap():
    with pytest.raises(ValueError, match="m \\+ k"):
        integrate(GrushinSpace(2, 2, 0.0), lambda X, Y: np.ones(X.shape[0]),
                  settings=QuadratureSettings(box=((0, 1),) * 4))


def test_unbounded_domain_needs_box():
    with pytest.raises(ValueError, match="box"):
        integrate(PLANE, lambda X, Y: np.ones(X.shape[0]), DomainDescriptor("whole"))
