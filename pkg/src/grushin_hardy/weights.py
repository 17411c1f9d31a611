"""Weight triples (v, phi, w) and the machinery that re-derives w from (v, phi).

Every entry satisfies, off its singular set,

    -div_gamma(v |grad_gamma phi|^(p-2) grad_gamma phi) = w phi^(p-1),

which is what turns the integration-by-parts argument into an exact identity.
``w`` is stored as a main term plus a list of extra terms so that multi-term
identities can be reported integral by integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fields as F
from .calculus import VectorFieldExpr, as_profile, div_gamma_batch, grad_gamma_expr, is_radial
from .space import GrushinSpace, Point, homogeneous_dimension, rho_array, sample_annulus


class AdmissibilityError(ValueError):
    pass


class UnknownCatalogKey(KeyError):
    def __str__(self):
        return f"unknown catalog key {self.args[0]!r}"


# ---------------------------------------------------------------- domains

_KINDS = ("whole", "ball", "xslab", "quadrant", "annulus")


@dataclass(frozen=True)
class DomainDescriptor:
    kind: str = "whole"
    R: float | None = None
    r0: float | None = None
    r1: float | None = None
    exclude_origin: bool = True
    # some weight blows up on {x = 0}; test functions must vanish near it
    exclude_x0: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind in ("ball", "xslab") and not (self.R and self.R > 0):
            raise ValueError(f"{self.kind} needs R > 0")
        if self.kind == "annulus" and not (self.r0 is not None and self.r1 and 0 <= self.r0 < self.r1):
            raise ValueError("annulus needs 0 <= r0 < r1")

    def contains(self, space: GrushinSpace, X, Y):
        """Membership in the open domain (exclusions are handled by quadrature)."""
        X = np.asarray(X, dtype=float).reshape(-1, space.m)
        Y = np.asarray(Y, dtype=float).reshape(X.shape[0], space.k)
        if self.kind == "whole":
            return np.ones(X.shape[0], dtype=bool)
        if self.kind == "ball":
            return rho_array(space, X, Y) < self.R
        if self.kind == "annulus":
            r = rho_array(space, X, Y)
            return (r > self.r0) & (r < self.r1)
        if self.kind == "xslab":
            return np.linalg.norm(X, axis=1) < self.R
        return (X[:, 0] > 1.0) & (Y[:, 0] > 1.0)

    def to_dict(self):
        return {k: getattr(self, k) for k in ("kind", "R", "r0", "r1", "exclude_origin", "exclude_x0")}

    def sample(self, space: GrushinSpace, n: int, rng):
        """Points well inside the domain and away from its singular sets."""
        if self.kind == "quadrant":
            X = rng.normal(size=(n, space.m))
            Y = rng.normal(size=(n, space.k))
            X[:, 0] = rng.uniform(1.2, 3.0, n)
            Y[:, 0] = rng.uniform(1.2, 3.0, n)
            return X, Y
        r1 = 2.0
        if self.kind in ("ball", "xslab"):
            r1 = min(r1, 0.9 * self.R)
        r0 = 0.5 * r1 / 2.0
        if self.kind == "annulus":
            r0, r1 = self.r0 + 0.1 * (self.r1 - self.r0), self.r1 - 0.1 * (self.r1 - self.r0)
        X, Y = sample_annulus(space, n, rng, r0=r0, r1=r1, min_x_ratio=1e-2)
        return X, Y


# ---------------------------------------------------------------- triples


@dataclass(frozen=True)
class WeightTriple:
    name: str
    params: dict
    space: GrushinSpace
    p: float
    v: F.FieldExpr
    phi: F.FieldExpr
    w_closed: F.FieldExpr
    extra_terms: tuple = ()
    domain: DomainDescriptor = field(default_factory=DomainDescriptor)
    nonnegative_weight: bool = True
    # rho-profiles with |grad_gamma rho|^p divided out of w, when the entry is radial
    radial: tuple | None = None

    @property
    def w_total(self) -> F.FieldExpr:
        return F.total(self.w_closed, *(F.mul(c, w) for c, w in self.extra_terms))

    @property
    def log_phi(self) -> F.FieldExpr:
        return log_expr(self.phi)

    def describe(self):
        return {
            "key": self.name,
            "params": dict(self.params),
            "space": [self.space.m, self.space.k, self.space.gamma],
            "p": self.p,
        }


def log_expr(e: F.FieldExpr) -> F.FieldExpr:
    """log of a positive expression, pushed through products, powers and exp.

    Keeps gradients of log(phi) free of phi in a denominator, which matters
    where phi = exp(...) underflows.
    """
    if isinstance(e, F.Exp):
        return e.arg
    if isinstance(e, F.Pow):
        return F.mul(F.Const(e.exponent), log_expr(e.base))
    if isinstance(e, F.Mul):
        return F.add(log_expr(e.left), log_expr(e.right))
    if isinstance(e, F.Div):
        return F.sub(log_expr(e.left), log_expr(e.right))
    if isinstance(e, F.Const) and e.value.imag == 0 and e.value.real > 0:
        return F.Const(math.log(e.value.real))
    return F.Log(e)


def _c(v):
    return F.Const(float(v))


def _G(space, p):
    """|grad_gamma rho|^p = |x|^(gamma p) / rho^(gamma p)."""
    gp = space.gamma * p
    return F.mul(F.power(F.ABSX, gp), F.power(F.RHO, -gp))


def _require(conds):
    failed = [msg for ok, msg in conds if not ok]
    if failed:
        raise AdmissibilityError("inadmissible parameters: " + "; ".join(failed))


def _nch(space, p, prm):
    R = prm["R"]
    _require([(R > 0, "R > 0")])
    Q = homogeneous_dimension(space)
    c = (p - 1.0) / p
    D = F.sub(_c(R), F.RHO)
    G = _G(space, p)
    w = F.prod(_c(c**p), G, F.power(D, -p))
    extra_w = F.prod(G, F.power(D, 1.0 - p), F.power(F.RHO, -1.0))
    radial = (
        F.ONE,
        F.power(D, c),
        F.add(F.mul(_c(c**p), F.power(D, -p)), F.prod(_c((Q - 1) * c ** (p - 1)), F.power(D, 1.0 - p), F.power(F.RHO, -1.0))),
    )
    return dict(
        v=F.ONE,
        phi=F.power(D, c),
        w_closed=w,
        extra_terms=(((Q - 1.0) * c ** (p - 1.0), extra_w),),
        domain=DomainDescriptor("ball", R=R),
        radial=radial,
    )


def _dambrosio(space, p, prm):
    a, b = prm["alpha"], prm["beta"]
    Q = homogeneous_dimension(space)
    _require([(space.k >= 1, "k >= 1"), (Q >= a - b - p, f"Q >= alpha - beta - p ({Q} < {a - b - p})")])
    g = space.gamma
    c = (Q + b - a) / p
    v = F.mul(F.power(F.ABSX, b - g * p), F.power(F.RHO, (1 + g) * p - a))
    phi = F.power(F.RHO, -c)
    # |c|^p: the displayed constant is ((Q+beta-alpha)/p)^p, real only in modulus when c < 0
    w = F.prod(_c(abs(c) ** p), F.power(F.ABSX, b), F.power(F.RHO, -a))
    radial = None
    if b == g * p:
        radial = (F.power(F.RHO, (1 + g) * p - a), phi, F.mul(_c(abs(c) ** p), F.power(F.RHO, g * p - a)))
    return dict(
        v=v, phi=phi, w_closed=w,
        domain=DomainDescriptor("whole", exclude_x0=b < g * p),
        radial=radial,
    )


def _dambrosio_x(space, p, prm):
    a = prm["alpha"]
    m = space.m
    _require([(a < -m, f"alpha < -m ({a} >= {-m})")])
    s = abs(m + a) / p
    return dict(
        v=F.power(F.ABSX, a + p),
        phi=F.power(F.ABSX, s),
        w_closed=F.mul(_c(s**p), F.power(F.ABSX, a)),
        domain=DomainDescriptor("whole", exclude_x0=True),
    )


def _log_rho(space, p, prm):
    a, R = prm["alpha"], prm["R"]
    Q = homogeneous_dimension(space)
    _require([(a < -1, "alpha < -1"), (Q > p, f"Q > p ({Q} <= {p})"), (R > 0, "R > 0")])
    s = abs(a + 1.0) / p
    L = F.Log(F.Div(_c(R), F.RHO))
    G = _G(space, p)
    rp = F.power(F.RHO, -p)
    w = F.prod(_c(s**p), F.power(L, a), G, rp)
    extra = F.prod(F.power(L, a + 1.0), G, rp)
    coef = s ** (p - 1.0) * (Q - p)
    radial = (
        F.power(L, a + p),
        F.power(L, s),
        F.add(F.prod(_c(s**p), F.power(L, a), rp), F.prod(_c(coef), F.power(L, a + 1.0), rp)),
    )
    return dict(
        v=F.power(L, a + p), phi=F.power(L, s), w_closed=w,
        extra_terms=((coef, extra),),
        domain=DomainDescriptor("ball", R=R),
        radial=radial,
    )


def _log_x(space, p, prm):
    a, R = prm["alpha"], prm["R"]
    m = space.m
    _require([(a < -1, "alpha < -1"), (m > p, f"m > p ({m} <= {p})"), (R > 0, "R > 0")])
    s = abs(a + 1.0) / p
    L = F.Log(F.Div(_c(R), F.ABSX))
    xp = F.power(F.ABSX, -p)
    return dict(
        v=F.power(L, a + p), phi=F.power(L, s),
        w_closed=F.prod(_c(s**p), F.power(L, a), xp),
        extra_terms=((s ** (p - 1.0) * (m - p), F.mul(F.power(L, a + 1.0), xp)),),
        domain=DomainDescriptor("xslab", R=R, exclude_x0=True),
    )


def _hardy_poincare(space, p, prm):
    a = prm["alpha"]
    _require([(a > 1, "alpha > 1")])
    Q = homogeneous_dimension(space)
    pp = p / (p - 1.0)
    U = F.add(F.ONE, F.power(F.RHO, pp))
    K = Q * ((a - 1.0) * pp) ** (p - 1.0)
    Uw = F.power(U, (a - 1.0) * (p - 1.0))
    v = F.power(U, a * (p - 1.0))
    phi = F.power(U, 1.0 - a)
    return dict(
        v=v, phi=phi, w_closed=F.prod(_c(K), Uw, _G(space, p)),
        domain=DomainDescriptor("whole"),
        radial=(v, phi, F.mul(_c(K), Uw)),
    )


def _super(space, p, prm):
    a, b, al, be, ell = prm["a"], prm["b"], prm["alpha"], prm["beta"], prm["ell"]
    Q = homogeneous_dimension(space)
    _require([
        (a > 0, "a > 0"), (b > 0, "b > 0"), (al * be > 0, "alpha * beta > 0"),
        (Q >= p * ell + p, f"Q >= p*ell + p ({Q} < {p * ell + p})"),
    ])
    s = (Q - p * ell - p) / p
    U = F.add(_c(a), F.mul(_c(b), F.power(F.RHO, al)))
    G = _G(space, p)
    v = F.mul(F.power(U, be), F.power(F.RHO, -ell * p))
    phi = F.power(F.RHO, -s)
    main_r = F.prod(_c(s**p), F.power(U, be), F.power(F.RHO, -ell * p - p))
    coef = s ** (p - 1.0) * be * al * b
    extra_r = F.mul(F.power(U, be - 1.0), F.power(F.RHO, al - ell * p - p))
    return dict(
        v=v, phi=phi, w_closed=F.mul(main_r, G),
        extra_terms=((coef, F.mul(extra_r, G)),),
        domain=DomainDescriptor("whole"),
        radial=(v, phi, F.add(main_r, F.mul(_c(coef), extra_r))),
    )


def _yener(space, p, prm):
    _require([(space.k >= 1, "k >= 1")])
    g = space.gamma
    x1, y1 = F.CoordX(0), F.CoordY(0)
    v = F.mul(F.power(F.mul(y1, F.power(F.ABSX, -g)), p - 2.0), F.Log(x1))
    w = F.prod(F.power(F.ABSX, 2.0 * g), F.Log(x1), F.power(y1, -2.0), F.power(F.Log(y1), 1.0 - p))
    return dict(v=v, phi=F.Log(y1), w_closed=w, domain=DomainDescriptor("quadrant", exclude_origin=False))


def _hpw_seed(space, p, prm):
    a = prm["alpha"]
    _require([(a > 0, "alpha > 0")])
    Q = homogeneous_dimension(space)
    g = space.gamma
    pp = p / (p - 1.0)
    v = F.mul(F.power(F.RHO, g * p), F.power(F.ABSX, -g * p))
    phi = F.Exp(F.mul(_c(-a), F.power(F.RHO, pp)))
    w = F.mul(_c((a * pp) ** (p - 1.0)), F.sub(_c(Q), F.mul(_c(a * p), F.power(F.RHO, pp))))
    return dict(
        v=v, phi=phi, w_closed=w,
        domain=DomainDescriptor("whole", exclude_x0=g > 0),
        nonnegative_weight=False,
        radial=(F.ONE, phi, w) if g == 0 else None,
    )


CATALOG = {
    "nch": (_nch, {"R": 3.0}),
    "dambrosio": (_dambrosio, {"alpha": 4.0, "beta": 3.0}),
    "dambrosio-x": (_dambrosio_x, {"alpha": -4.0}),
    "log-rho": (_log_rho, {"alpha": -2.0, "R": 3.0}),
    "log-x": (_log_x, {"alpha": -2.0, "R": 3.0}),
    "hardy-poincare": (_hardy_poincare, {"alpha": 2.0}),
    "super": (_super, {"a": 1.0, "b": 1.0, "alpha": 2.0, "beta": 1.0, "ell": -0.5}),
    "yener-nonradial": (_yener, {}),
    "hpw-seed": (_hpw_seed, {"alpha": 0.5}),
}


def reference_params(name: str) -> dict:
    if name not in CATALOG:
        raise UnknownCatalogKey(name)
    return dict(CATALOG[name][1])


def catalog_get(name: str, params: dict | None, space: GrushinSpace, p: float) -> WeightTriple:
    """Build a catalog entry; omitted parameters take the reference values."""
    if name not in CATALOG:
        raise UnknownCatalogKey(name)
    if not (1.0 < p < np.inf):
        raise AdmissibilityError(f"inadmissible parameters: 1 < p < inf (p = {p})")
    builder, defaults = CATALOG[name]
    params = dict(params or {})
    unknown = set(params) - set(defaults)
    if unknown:
        raise AdmissibilityError(f"unknown parameter(s) for {name}: {', '.join(sorted(unknown))}")
    full = {**defaults, **{k: float(v) for k, v in params.items()}}
    parts = builder(space, float(p), full)
    return WeightTriple(name=name, params=full, space=space, p=float(p), **parts)


# ---------------------------------------------------------------- derivation


def flux_field(space: GrushinSpace, p: float, v: F.FieldExpr, phi: F.FieldExpr) -> VectorFieldExpr:
    """T = v |grad_gamma phi|^(p-2) grad_gamma phi, symbolically (phi real)."""
    g = grad_gamma_expr(space, phi).components
    mod2 = F.total(*(F.mul(c, c) for c in g))
    scale = F.mul(v, F.power(mod2, 0.5 * (p - 2.0)))
    return VectorFieldExpr(tuple(F.mul(scale, c) for c in g))


def derive_weight_batch(space: GrushinSpace, p: float, v, phi, X, Y):
    X = np.asarray(X, dtype=float).reshape(-1, space.m)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], space.k)
    phival = F.evaluate_batch(phi, space, X, Y).value
    bad = ~((phival.imag == 0) & (phival.real > 0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise F.FieldDomainError("phi must be positive", phi, (tuple(X[i]), tuple(Y[i])))
    div = div_gamma_batch(space, flux_field(space, p, v, phi), X, Y)
    return (-div / phival.real ** (p - 1.0)).real


def derive_weight(space: GrushinSpace, p: float, v, phi, z: Point) -> float:
    X, Y = z.arrays()
    return float(derive_weight_batch(space, p, v, phi, X, Y)[0])


# ---------------------------------------------------------------- Bessel pairs


def bessel_residual(space: GrushinSpace, p: float, v_radial, w_radial, phi_radial, rho_grid) -> float:
    """max_grid |(r^(Q-1) v |phi'|^(p-2) phi')' + r^(Q-1) w phi^(p-1)| / max term size.

    Profiles are fields of rho alone; the derivative of the flux comes from
    forward-mode jets of the composed one-variable expression.
    """
    r = np.asarray(rho_grid, dtype=float)
    if np.any(r <= 0):
        raise ValueError("grid points must be positive")
    if np.any(np.diff(r) <= 0):
        raise ValueError("grid must be increasing")
    Q = homogeneous_dimension(space)
    line = GrushinSpace(1, 0, 0.0)
    t = F.CoordX(0)
    v1, w1, phi1 = (as_profile(F._wrap(e)) for e in (v_radial, w_radial, phi_radial))
    d1 = F.partial(phi1, line, 0)
    flux = F.prod(F.power(t, Q - 1.0), v1, F.power(F.mul(d1, d1), 0.5 * (p - 2.0)), d1)
    source = F.prod(F.power(t, Q - 1.0), w1, F.power(phi1, p - 1.0))
    Y = np.zeros((r.size, 0))
    jf, js = F.evaluate_many([flux, source], line, r[:, None], Y, order=1)
    a = jf.first[:, 0].real
    b = js.value.real
    scale = np.maximum(np.abs(a), np.abs(b))
    res = np.abs(a + b)
    out = np.where(scale > 0, res / np.where(scale > 0, scale, 1.0), 0.0)
    return float(out.max()) if out.size else 0.0


def default_bessel_grid(triple: WeightTriple, n: int = 512):
    hi = 5.0
    if triple.domain.kind == "ball":
        hi = min(hi, 0.95 * triple.domain.R)
    return np.geomspace(0.1, hi, n)


def triple_bessel_residual(triple: WeightTriple, grid=None) -> float:
    if triple.radial is None:
        raise ValueError(f"catalog entry {triple.name} is not radial for these parameters")
    grid = default_bessel_grid(triple) if grid is None else grid
    v, phi, w = triple.radial
    return bessel_residual(triple.space, triple.p, v, w, phi, grid)


def is_radial_triple(triple: WeightTriple) -> bool:
    return triple.radial is not None and all(is_radial(e) for e in triple.radial)
