"""Jets, the bump primitive and the symbolic layer."""

import math

import numpy as np
import pytest

from grushin_hardy import fields as F
from grushin_hardy.parser import format_expr
from grushin_hardy.space import GrushinSpace, sample_annulus


def test_eval_examples():
    s0 = GrushinSpace(1, 1, 0.0)
    assert F.eval_field(F.RHO, s0, s0.point([3.0], [4.0])) == pytest.approx(5.0)
    e = F.Exp(F.Mul(F.I, F.y(1)))
    assert F.eval_field(e, s0, s0.point([0.0], [math.pi])) == pytest.approx(-1.0, abs=1e-15)
    b = F.Bump(F.Div(F.Sub(F.RHO, F.Const(1.5)), F.Const(0.5)))
    assert F.eval_field(b, s0, s0.point([0.9], [1.2])) == pytest.approx(math.exp(-1.0), rel=1e-15)


def test_jet_examples():
    s = GrushinSpace(2, 1, 1.0)
    j = F.jet2(F.x(1), s, s.point([0.3, 0.4], [0.5]))
    assert np.array_equal(j.first, [1, 0, 0]) and np.array_equal(j.second_diag, [0, 0, 0])
    s0 = GrushinSpace(2, 1, 0.0)
    z = np.array([0.3, -0.4, 1.2])
    j = F.jet2(F.RHO, s0, s0.point(z[:2], z[2:]))
    assert np.allclose(j.first, z / np.linalg.norm(z), rtol=0, atol=1e-15)


def test_rho_jet_matches_finite_differences():
    s = GrushinSpace(1, 1, 1.0)
    h = 1e-5
    j = F.jet2(F.RHO, s, s.point([1.0], [1.0]))
    fd_x = (F.eval_field(F.RHO, s, s.point([1 + h], [1])) - F.eval_field(F.RHO, s, s.point([1 - h], [1]))) / (2 * h)
    fd_y = (F.eval_field(F.RHO, s, s.point([1], [1 + h])) - F.eval_field(F.RHO, s, s.point([1], [1 - h]))) / (2 * h)
    assert abs(j.first[0] - fd_x) <= 1e-8
    assert abs(j.first[1] - fd_y) <= 1e-8


def test_rho_jet_rejected_on_x_axis():
    s = GrushinSpace(1, 1, 1.0)
    with pytest.raises(F.FieldDomainError):
        F.jet2(F.RHO, s, s.point([0.0], [1.0]))
    # the regularized quasi-norm is smooth there
    j = F.jet2(F.RhoEps(0.1), s, s.point([0.0], [1.0]))
    assert np.all(np.isfinite(j.first))


def test_domain_errors_name_the_subexpression():
    s = GrushinSpace(1, 1, 0.0)
    with pytest.raises(F.FieldDomainError, match="log"):
        F.eval_field(F.Log(F.Sub(F.x(1), F.Const(2.0))), s, s.point([1.0], [0.0]))
    with pytest.raises(F.FieldDomainError):
        F.eval_field(F.Div(F.ONE, F.x(1)), s, s.point([0.0], [1.0]))
    with pytest.raises(F.FieldDomainError):
        F.check_space(F.y(2), s)


# ---------------------------------------------------------------- bump


def test_bump_values():
    assert F.bump(0.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert F.bump(1.0) == 0.0
    assert F.bump(0.5) == pytest.approx(math.exp(-4.0 / 3.0), rel=1e-15)
    assert F.bump(0.5) == pytest.approx(0.2635971, abs=1e-7)


def test_bump_edges():
    t = np.array([-(1 - 1e-6), 1 - 1e-6])
    d = F.bump_derivatives(t, 2)
    assert np.all(np.abs(d) <= 1e-3)
    far = np.array([-3.0, -1.0, 1.0, 1.5])
    assert np.all(F.bump_derivatives(far, 4) == 0.0)


def test_bump_derivatives_against_finite_differences():
    t = np.linspace(-0.95, 0.95, 41)
    d = F.bump_derivatives(t, 3)
    h = 1e-5
    for n in range(1, 4):
        fd = (F.bump_derivatives(t + h, n - 1)[n - 1] - F.bump_derivatives(t - h, n - 1)[n - 1]) / (2 * h)
        scale = 1 + np.max(np.abs(d[n]))
        assert np.max(np.abs(d[n] - fd)) <= 1e-5 * scale


# ---------------------------------------------------------------- random-tree autodiff oracle


def _leaf(rng, space):
    kind = rng.integers(8)
    if kind == 0:
        return F.Const(complex(rng.normal(), rng.normal()))
    if kind == 1:
        return F.Const(float(rng.uniform(0.5, 2.0)))
    if kind == 2:
        return F.CoordX(int(rng.integers(space.m)))
    if kind == 3:
        return F.CoordY(int(rng.integers(space.k)))
    if kind == 4:
        return F.RHO
    if kind == 5:
        return F.RhoEps(0.2)
    if kind == 6:
        return F.ABSX
    return F.I


def _positive(rng, space, depth):
    kind = rng.integers(5 if depth > 0 else 3)
    if kind == 0:
        return F.RHO
    if kind == 1:
        return F.ABSX
    if kind == 2:
        return F.RhoEps(0.3)
    sub = _positive(rng, space, depth - 1)
    if kind == 3:
        return F.Add(F.Const(1.0), F.Mul(F.Const(0.2), F.Pow(sub, 2.0)))
    return F.Pow(sub, float(rng.choice([-1.5, -0.5, 0.5, 1.7])))


def _tree(rng, space, depth):
    if depth == 0:
        return _leaf(rng, space)
    kind = rng.integers(10)
    a = _tree(rng, space, depth - 1)
    if kind == 0:
        return F.Neg(a)
    if kind == 1:
        return F.Add(a, _tree(rng, space, depth - 1))
    if kind == 2:
        return F.Sub(a, _tree(rng, space, depth - 1))
    if kind == 3:
        return F.Mul(a, _tree(rng, space, depth - 1))
    if kind == 4:
        return F.Div(a, _positive(rng, space, depth - 1))
    if kind == 5:
        return F.Pow(_positive(rng, space, depth - 1), float(rng.choice([-2.0, -0.5, 1.5, 3.0])))
    if kind == 6:
        return F.Exp(F.Mul(F.Const(0.2), a))
    if kind == 7:
        return F.Log(_positive(rng, space, depth - 1))
    if kind == 8:
        return F.Bump(F.Div(F.Sub(F.RHO, F.Const(1.2)), F.Const(1.0)), order=int(rng.integers(2)))
    return F.ImagUnit()


def _fd(expr, space, X, Y, h):
    """Central first and pure second differences along every axis."""
    Z = np.hstack([X, Y])
    f0 = F.evaluate_batch(expr, space, X, Y).value
    first = np.zeros(Z.shape, dtype=complex)
    second = np.zeros(Z.shape, dtype=complex)
    for a in range(Z.shape[1]):
        Zp, Zm = Z.copy(), Z.copy()
        Zp[:, a] += h
        Zm[:, a] -= h
        fp = F.evaluate_batch(expr, space, Zp[:, : space.m], Zp[:, space.m :]).value
        fm = F.evaluate_batch(expr, space, Zm[:, : space.m], Zm[:, space.m :]).value
        first[:, a] = (fp - fm) / (2 * h)
        second[:, a] = (fp - 2 * f0 + fm) / h**2
    return first, second


@pytest.mark.parametrize("m,k,gamma", [(1, 1, 1.0), (2, 1, 0.5), (2, 1, 0.0)])
def test_autodiff_matches_finite_differences(m, k, gamma, rng):
    space = GrushinSpace(m, k, gamma)
    kinds = set()
    checked = 0
    while checked < 40:
        expr = _tree(rng, space, int(rng.integers(1, 4)))
        X, Y = sample_annulus(space, 5, rng, r0=0.7, r1=1.8, min_x_ratio=0.2)
        try:
            jet = F.evaluate_batch(expr, space, X, Y, order=2)
        except F.FieldDomainError:
            continue
        kinds |= {type(n).__name__ for n in F.walk(expr)}
        fd1, _ = _fd(expr, space, X, Y, 1e-5)
        _, fd2 = _fd(expr, space, X, Y, 1e-4)
        assert np.all(np.abs(jet.first - fd1) <= 1e-6 * (1 + np.abs(jet.first))), format_expr(expr)
        assert np.all(np.abs(jet.second - fd2) <= 1e-4 * (1 + np.abs(jet.second)))
        checked += 1
    assert {"Add", "Mul", "Div", "Pow", "Exp", "Log", "Rho"} <= kinds


def test_linearity_is_exact(rng):
    s = GrushinSpace(2, 1, 1.0)
    a = F.Mul(F.RHO, F.Exp(F.Mul(F.I, F.y(1))))
    b = F.Pow(F.ABSX, 1.5)
    z = s.point([0.4, -0.3], [0.8])
    ja, jb, jab = F.jet2(a, s, z), F.jet2(b, s, z), F.jet2(F.Add(a, b), s, z)
    assert jab.value == ja.value + jb.value
    assert np.array_equal(jab.first, ja.first + jb.first)
    assert np.array_equal(jab.second_diag, ja.second_diag + jb.second_diag)


# ---------------------------------------------------------------- symbolic layer


def test_partial_matches_jets(rng):
    s = GrushinSpace(2, 1, 1.0)
    f = F.Mul(F.Pow(F.RHO, -0.5), F.Log(F.Add(F.ONE, F.Pow(F.ABSX, 2.0))))
    X, Y = sample_annulus(s, 50, rng)
    jet = F.evaluate_batch(f, s, X, Y, order=1)
    for axis in range(s.n):
        d = F.evaluate_batch(F.partial(f, s, axis), s, X, Y).value
        assert np.allclose(d, jet.first[:, axis], rtol=1e-12, atol=1e-14)


def test_constant_folding():
    assert F.add(F.Const(2.0), F.Const(3.0)) == F.Const(5.0)
    assert F.mul(F.ZERO, F.RHO) == F.ZERO
    assert F.mul(F.ONE, F.RHO) == F.RHO
    assert F.power(F.RHO, 1.0) == F.RHO


def test_compose_dilation(rng):
    from grushin_hardy.space import dilate

    s = GrushinSpace(1, 1, 1.0)
    f = F.Mul(F.x(1), F.Exp(F.Neg(F.Pow(F.RHO, 2.0))))
    g = F.compose_dilation(f, s, 1.7)
    for _ in range(20):
        z = s.point(rng.normal(size=1), rng.normal(size=1))
        assert F.eval_field(g, s, z) == pytest.approx(F.eval_field(f, s, dilate(s, z, 1.7)), rel=1e-12, abs=1e-15)
