"""Grushin gradient, divergence and the radial p-Grushin operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields as F
from .space import GrushinSpace, Point, homogeneous_dimension


@dataclass(frozen=True)
class VectorFieldExpr:
    """Components in the order (x_1..x_m, y_1..y_k)."""

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(F._wrap(c) for c in self.components))

    def __len__(self):
        return len(self.components)

    def check(self, space: GrushinSpace):
        if len(self.components) != space.n:
            raise ValueError(f"vector field has {len(self.components)} components, space needs {space.n}")


def absx_gamma(space: GrushinSpace, X):
    """|x|^gamma on a batch, with 0^0 = 1."""
    x2 = np.sum(np.asarray(X, dtype=float) ** 2, axis=1)
    if space.gamma == 0:
        return np.ones_like(x2)
    return x2 ** (0.5 * space.gamma)


def grad_gamma_batch(space: GrushinSpace, f: F.FieldExpr, X, Y):
    """(grad_x f, |x|^gamma grad_y f) at each row; shape (N, m+k)."""
    jet = F.evaluate_batch(f, space, X, Y, order=1)
    return euclidean_to_gamma(space, jet.first, X)


def euclidean_to_gamma(space, grad, X):
    out = np.array(grad, dtype=complex, copy=True)
    if space.k:
        out[:, space.m :] *= absx_gamma(space, X)[:, None]
    return out


def grad_gamma(space: GrushinSpace, f: F.FieldExpr, z: Point):
    X, Y = z.arrays()
    return grad_gamma_batch(space, f, X, Y)[0]


def grad_gamma_expr(space: GrushinSpace, f: F.FieldExpr) -> VectorFieldExpr:
    """Symbolic Grushin gradient; the y-block carries the factor |x|^gamma."""
    scale = F.power(F.ABSX, space.gamma)
    comps = []
    for axis in range(space.n):
        d = F.partial(f, space, axis)
        comps.append(d if axis < space.m else F.mul(scale, d))
    return VectorFieldExpr(tuple(comps))


def div_gamma_batch(space: GrushinSpace, field: VectorFieldExpr, X, Y):
    field.check(space)
    jets = F.evaluate_many(field.components, space, X, Y, order=1)
    N = np.asarray(X).reshape(-1, space.m).shape[0]
    dx = np.zeros(N, dtype=complex)
    dy = np.zeros(N, dtype=complex)
    for axis, jet in enumerate(jets):
        if axis < space.m:
            dx += jet.first[:, axis]
        else:
            dy += jet.first[:, axis]
    if space.k:
        dx += absx_gamma(space, np.asarray(X).reshape(-1, space.m)) * dy
    return dx


def div_gamma(space: GrushinSpace, field: VectorFieldExpr, z: Point) -> complex:
    X, Y = z.arrays()
    return complex(div_gamma_batch(space, field, X, Y)[0])


def laplacian_gamma_batch(space: GrushinSpace, f: F.FieldExpr, X, Y):
    """div_gamma grad_gamma f = Laplacian_x f + |x|^(2 gamma) Laplacian_y f."""
    jet = F.evaluate_batch(f, space, X, Y, order=2)
    lap = jet.second[:, : space.m].sum(axis=1)
    if space.k:
        lap = lap + absx_gamma(space, X) ** 2 * jet.second[:, space.m :].sum(axis=1)
    return lap


_LINE = GrushinSpace(1, 0, 0.0)


def is_radial(expr: F.FieldExpr) -> bool:
    return not F.uses(expr, F.CoordX, F.CoordY, F.AbsX, F.RhoEps)


def as_profile(expr: F.FieldExpr) -> F.FieldExpr:
    """Rewrite a field of rho alone as a function of one real variable (x1 = rho)."""
    if not is_radial(expr):
        raise ValueError("profile must depend on rho only")
    return F.substitute(expr, lambda n: F.CoordX(0) if isinstance(n, F.Rho) else None)


def radial_jets(profile: F.FieldExpr, r):
    """(phi, phi', phi'') of a rho-profile on an array of radii."""
    r = np.asarray(r, dtype=float).reshape(-1, 1)
    jet = F.evaluate_batch(as_profile(profile), _LINE, r, np.zeros((r.shape[0], 0)), order=2)
    return jet.value, jet.first[:, 0], jet.second[:, 0]


def p_grushin_radial_batch(space: GrushinSpace, p: float, profile: F.FieldExpr, X, Y):
    from .space import rho_array

    X = np.asarray(X, dtype=float).reshape(-1, space.m)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], space.k)
    r = rho_array(space, X, Y)
    ax = np.sqrt(np.sum(X**2, axis=1))
    if np.any(r == 0) or np.any(ax == 0):
        raise F.FieldDomainError("radial p-Grushin operator is singular at the origin or on x = 0", profile)
    _, d1, d2 = radial_jets(profile, r)
    d1, d2 = d1.real, d2.real
    Q = homogeneous_dimension(space)
    if p < 2 and np.any(d1 == 0):
        raise F.FieldDomainError("|phi'|^(p-2) is singular where phi' = 0 for p < 2", profile)
    with np.errstate(divide="ignore"):
        mod = np.where(d1 == 0, 0.0 if p > 2 else 1.0, np.abs(d1) ** (p - 2.0))
    factor = (ax / r) ** (space.gamma * p)
    return factor * mod * ((p - 1.0) * d2 + (Q - 1.0) * d1 / r)


def p_grushin_radial(space: GrushinSpace, p: float, profile: F.FieldExpr, z: Point) -> float:
    X, Y = z.arrays()
    return float(p_grushin_radial_batch(space, p, profile, X, Y)[0])
