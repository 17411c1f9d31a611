import numpy as np
import pytest

from grushin_hardy import fields as F
from grushin_hardy.calculus import (
    VectorFieldExpr,
    div_gamma,
    div_gamma_batch,
    grad_gamma,
    grad_gamma_batch,
    grad_gamma_expr,
    laplacian_gamma_batch,
    p_grushin_radial,
    p_grushin_radial_batch,
)
from grushin_hardy.parser import parse
from grushin_hardy.space import GrushinSpace, rho_array, sample_annulus

SPACES = [(1, 1, 1.0), (2, 1, 0.5), (2, 3, 1.0)]


def test_grad_examples():
    s = GrushinSpace(1, 1, 1.0)
    assert np.array_equal(grad_gamma(s, F.x(1), s.point([0.5], [0.2])), [1, 0])
    assert np.allclose(grad_gamma(s, F.y(1), s.point([2.0], [0.3])), [0, 2])


def test_div_examples(rng):
    s = GrushinSpace(2, 1, 1.0)
    z = s.point([0.3, -0.2], [1.1])
    assert div_gamma(s, VectorFieldExpr((F.Const(2.0), F.Const(-1.0), F.I)), z) == 0
    assert div_gamma(s, VectorFieldExpr((F.x(1), F.x(2), F.ZERO)), z) == pytest.approx(2.0)


@pytest.mark.parametrize("m,k,gamma", SPACES)
def test_gradient_norm_identity(m, k, gamma, rng):
    s = GrushinSpace(m, k, gamma)
    X, Y = sample_annulus(s, 500, rng)
    X = X[np.linalg.norm(X, axis=1) >= 1e-2]
    Y = Y[: X.shape[0]]
    g = grad_gamma_batch(s, F.RHO, X, Y)
    r = rho_array(s, X, Y)
    want = np.linalg.norm(X, axis=1) ** gamma / r**gamma
    got = np.linalg.norm(g, axis=1)
    assert np.all(np.abs(got - want) <= 1e-8 * (1 + want))


def _div_oracle(s, c, sx, X, Y):
    Q = s.Q
    r = rho_array(s, X, Y)
    ax = np.linalg.norm(X, axis=1)
    return (Q + c + sx - 1) * ax ** (2 * s.gamma + sx) / r ** (2 * s.gamma + 1 - c)


@pytest.mark.parametrize("m,k,gamma", SPACES)
def test_divergence_identity(m, k, gamma, rng):
    s = GrushinSpace(m, k, gamma)
    grad_rho = grad_gamma_expr(s, F.RHO)
    for c in (-1.0, 0.0, 1.0, 2.5):
        for sx in (-1.0, 0.0, 1.0, 2.5):
            scale = F.mul(F.power(F.RHO, c), F.power(F.ABSX, sx))
            field = VectorFieldExpr(tuple(F.mul(scale, comp) for comp in grad_rho.components))
            X, Y = sample_annulus(s, 100, rng)
            got = div_gamma_batch(s, field, X, Y)
            want = _div_oracle(s, c, sx, X, Y)
            assert np.all(np.abs(got - want) <= 1e-7 * np.abs(want) + 1e-14), (c, sx)


def test_divergence_sample_point():
    s = GrushinSpace(1, 1, 1.0)
    field = VectorFieldExpr(tuple(F.mul(F.RHO, comp) for comp in grad_gamma_expr(s, F.RHO).components))
    z = s.point([0.7], [-0.4])
    X, Y = z.arrays()
    assert div_gamma(s, field, z) == pytest.approx(_div_oracle(s, 1.0, 0.0, X, Y)[0], rel=1e-7)


@pytest.mark.parametrize("m,k,gamma", SPACES[:2])
def test_p2_radial_matches_laplacian(m, k, gamma, rng):
    s = GrushinSpace(m, k, gamma)
    phi = parse("exp(-rho^2) + rho^3")
    X, Y = sample_annulus(s, 200, rng, min_x_ratio=0.05)
    radial = p_grushin_radial_batch(s, 2.0, phi, X, Y)
    direct = laplacian_gamma_batch(s, phi, X, Y).real
    field = grad_gamma_expr(s, phi)
    via_div = div_gamma_batch(s, field, X, Y).real
    assert np.allclose(radial, direct, rtol=1e-6, atol=1e-12)
    assert np.allclose(radial, via_div, rtol=1e-6, atol=1e-12)


def test_radial_examples(rng):
    s = GrushinSpace(2, 1, 1.0)
    Q = s.Q
    z = s.point([0.6, 0.2], [0.5])
    X, Y = z.arrays()
    r = rho_array(s, X, Y)[0]
    ax = np.linalg.norm(X)
    for p in (1.5, 2.0, 3.0):
        want = (ax / r) ** (s.gamma * p) * (Q - 1) / r
        assert p_grushin_radial(s, p, F.RHO, z) == pytest.approx(want, rel=1e-12)
    assert p_grushin_radial(s, 3.0, F.Const(2.0), z) == 0.0


def test_radial_power_solution(rng):
    s = GrushinSpace(1, 1, 1.0)
    Q = s.Q
    for p in (1.5, 2.0, 2.5):
        e = -(Q - p) / p
        phi = F.power(F.RHO, e)
        X, Y = sample_annulus(s, 50, rng, min_x_ratio=0.05)
        r = rho_array(s, X, Y)
        ax = np.linalg.norm(X, axis=1)
        # w = ((Q-p)/p)^p |x|^(gamma p) / rho^(p + gamma p)
        w = ((Q - p) / p) ** p * ax ** (s.gamma * p) / r ** (p + s.gamma * p)
        lhs = -p_grushin_radial_batch(s, p, phi, X, Y)
        rhs = w * r ** (e * (p - 1))
        assert np.allclose(lhs, rhs, rtol=1e-7)


def test_radial_rejects_singular_points():
    s = GrushinSpace(1, 1, 1.0)
    with pytest.raises(F.FieldDomainError):
        p_grushin_radial(s, 2.0, F.RHO, s.point([0.0], [1.0]))
