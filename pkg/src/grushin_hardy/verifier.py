"""Quadrature checks of the weighted Hardy identity and the HPW deficit.

For a triple (v, phi, w) and a test function f the checked identity is

    int v |grad_gamma f|^p = int w |f|^p + sum_i c_i int w_i |f|^p
                             + int v C_p(grad_gamma f, grad_gamma f - f grad_gamma log phi).

All terms are integrated in one pass over the same nodes, at the configured
panel count and at twice that, so the residual at the finer level doubles as
a convergence check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fields as F
from .calculus import euclidean_to_gamma
from .cp import cp_batch
from .quadrature import QuadratureSettings, domain_box, integrate_level, tensor_points
from .space import GrushinSpace, homogeneous_dimension, rho_array
from .weights import WeightTriple

TRUNCATION_RADIUS = 6.0
# test functions must vanish this close to an excluded singular set
SINGULAR_TUBE = 1e-2


class SupportError(ValueError):
    pass


# ---------------------------------------------------------------- support analysis


def _affine(e):
    """e = a * leaf + b with leaf in {rho, rho_eps, |x|, x_i, y_j}; None otherwise."""
    if isinstance(e, F.Const):
        return (None, 0.0, e.value.real) if e.value.imag == 0 else None
    if isinstance(e, (F.Rho, F.RhoEps, F.AbsX, F.CoordX, F.CoordY)):
        return (e, 1.0, 0.0)
    if isinstance(e, F.Neg):
        a = _affine(e.arg)
        return None if a is None else (a[0], -a[1], -a[2])
    if isinstance(e, (F.Add, F.Sub)):
        l, r = _affine(e.left), _affine(e.right)
        if l is None or r is None:
            return None
        sgn = 1.0 if isinstance(e, F.Add) else -1.0
        if l[0] is not None and r[0] is not None and l[0] != r[0]:
            return None
        leaf = l[0] if l[0] is not None else r[0]
        return (leaf, l[1] + sgn * r[1], l[2] + sgn * r[2])
    if isinstance(e, F.Mul):
        l, r = _affine(e.left), _affine(e.right)
        if l is None or r is None:
            return None
        if l[0] is None:
            return (r[0], l[2] * r[1], l[2] * r[2])
        if r[0] is None:
            return (l[0], r[2] * l[1], r[2] * l[2])
        return None
    if isinstance(e, F.Div):
        l, r = _affine(e.left), _affine(e.right)
        if l is None or r is None or r[0] is not None or r[2] == 0:
            return None
        return (l[0], l[1] / r[2], l[2] / r[2])
    return None


def _intersect(a, b):
    out = []
    for u, v in zip(a, b):
        if u is None:
            out.append(v)
        elif v is None:
            out.append(u)
        else:
            out.append((max(u[0], v[0]), min(u[1], v[1])))
    return out


def _hull(a, b):
    out = []
    for u, v in zip(a, b):
        out.append(None if u is None or v is None else (min(u[0], v[0]), max(u[1], v[1])))
    return out


def _bounds(e, space):
    n = space.n
    g = 1.0 + space.gamma
    free = [None] * n
    if isinstance(e, F.Bump):
        aff = _affine(e.arg)
        if aff is None or aff[0] is None or aff[1] == 0:
            return free
        leaf, a, b = aff
        lo, hi = sorted(((-1.0 - b) / a, (1.0 - b) / a))
        box = list(free)
        if isinstance(leaf, (F.Rho, F.RhoEps)):
            if hi <= 0:
                return [(0.0, 0.0)] * n
            box = [(-hi, hi)] * space.m + [(-(hi**g) / g, hi**g / g)] * space.k
        elif isinstance(leaf, F.AbsX):
            if hi <= 0:
                return [(0.0, 0.0)] * n
            box = [(-hi, hi)] * space.m + [None] * space.k
        elif isinstance(leaf, F.CoordX):
            box[leaf.index] = (lo, hi)
        elif isinstance(leaf, F.CoordY):
            box[space.m + leaf.index] = (lo, hi)
        return box
    if isinstance(e, F.Mul):
        return _intersect(_bounds(e.left, space), _bounds(e.right, space))
    if isinstance(e, F.Div):
        return _bounds(e.left, space)
    if isinstance(e, (F.Add, F.Sub)):
        return _hull(_bounds(e.left, space), _bounds(e.right, space))
    if isinstance(e, F.Neg):
        return _bounds(e.arg, space)
    if isinstance(e, F.Pow) and e.exponent > 0:
        return _bounds(e.base, space)
    return free


def support_box(f: F.FieldExpr, space: GrushinSpace, truncation: float = TRUNCATION_RADIUS):
    """A box containing the support of f; unbounded axes are cut at rho <= truncation."""
    g = 1.0 + space.gamma
    trunc = [(-truncation, truncation)] * space.m + [(-(truncation**g) / g, truncation**g / g)] * space.k
    b = _bounds(f, space)
    return tuple(t if u is None else u for u, t in zip(b, trunc))


def _clip_box(box, other):
    if other is None:
        return box
    return tuple((max(a[0], b[0]), min(a[1], b[1])) for a, b in zip(box, other))


def default_test_function(triple: WeightTriple, phase: bool = False) -> str:
    """Bump supported strictly inside the entry's domain, avoiding its singular sets."""
    space = triple.space
    if triple.domain.kind == "quadrant":
        parts = ["bump((x1-2)/0.5)", "bump((y1-2)/0.5)"]
        parts += [f"bump(x{i}/0.5)" for i in range(2, space.m + 1)]
        parts += [f"bump(y{j}/0.5)" for j in range(2, space.k + 1)]
    else:
        parts = ["bump((rho-1.5)/0.5)"]
        if triple.domain.exclude_x0:
            # wide transition; a narrow one next to |x|^-4 weights needs refined panels
            parts.append("bump((absx-2)/1.6)")
    if phase and space.k:
        parts.append("exp(i*y1)")
    return "*".join(parts)


# ---------------------------------------------------------------- reports


@dataclass
class IdentitySpec:
    triple: WeightTriple
    test_function: F.FieldExpr
    settings: QuadratureSettings = field(default_factory=QuadratureSettings)
    tolerance: float = 1e-3
    label: str | None = None

    @property
    def p(self):
        return self.triple.p

    @property
    def space(self):
        return self.triple.space

    def describe(self):
        from .parser import format_expr

        d = self.triple.describe()
        d["f"] = self.label or format_expr(self.test_function)
        return d


@dataclass
class VerificationReport:
    spec: dict
    lhs: float
    weighted: float
    extras: list
    remainder: float
    residual_rel: float
    residual_refined: float
    errors: dict
    tolerance: float
    passed: bool
    nodes_used: int = 0
    refined: dict = field(default_factory=dict)

    @property
    def extras_sum(self):
        return float(sum(self.extras))

    def to_json_dict(self):
        return {
            "spec": self.spec,
            "lhs": self.lhs,
            "weighted": self.weighted,
            "extras": list(self.extras),
            "remainder": self.remainder,
            "residual_rel": self.residual_rel,
            "residual_refined": self.residual_refined,
            "pass": self.passed,
            "errors": self.errors,
            "tolerance": self.tolerance,
        }

    def csv_row(self, run):
        return [run, self.spec.get("key", self.spec.get("kind", "")), self.spec.get("p"),
                self.lhs, self.weighted, self.extras_sum, self.remainder, self.residual_rel, self.passed]


def _residual(lhs, weighted, extras, remainder):
    return abs(lhs - weighted - sum(extras) - remainder) / max(lhs, 1e-30)


def _make_report(spec_dict, levels, tol, nodes_used, n_extra):
    """levels: [coarse, fine] arrays of term integrals (lhs, weighted, extras..., remainder)."""
    coarse, fine = (np.real(lv) for lv in levels)

    def unpack(v):
        return float(v[0]), float(v[1]), [float(x) for x in v[2 : 2 + n_extra]], float(v[2 + n_extra])

    lhs, wt, ex, rem = unpack(coarse)
    lhs2, wt2, ex2, rem2 = unpack(fine)
    res = _residual(lhs, wt, ex, rem)
    res2 = _residual(lhs2, wt2, ex2, rem2)
    diff = np.abs(fine - coarse)
    errors = {
        "lhs": float(diff[0]),
        "weighted": float(diff[1]),
        "extras": [float(x) for x in diff[2 : 2 + n_extra]],
        "remainder": float(diff[2 + n_extra]),
    }
    passed = bool(res <= tol and rem >= -tol * max(lhs, 1e-30))
    return VerificationReport(
        spec=spec_dict, lhs=lhs, weighted=wt, extras=ex, remainder=rem,
        residual_rel=res, residual_refined=res2, errors=errors, tolerance=tol,
        passed=passed, nodes_used=nodes_used,
        refined={"lhs": lhs2, "weighted": wt2, "extras": ex2, "remainder": rem2},
    )


def _gamma_grad(space, jet, X):
    return euclidean_to_gamma(space, jet.first, X)


def _require_inside(tr: WeightTriple, settings, X, Y):
    dom, space = tr.domain, tr.space
    inside = dom.contains(space, X, Y)
    if dom.exclude_origin:
        inside &= rho_array(space, X, Y) > max(settings.exclusion_origin, SINGULAR_TUBE)
    if dom.exclude_x0:
        inside &= np.linalg.norm(X, axis=1) > max(settings.exclusion_x, SINGULAR_TUBE)
    if not inside.all():
        i = int(np.flatnonzero(~inside)[0])
        raise SupportError(
            f"test function is nonzero at z=({tuple(X[i])}, {tuple(Y[i])}) outside the "
            f"{dom.kind} domain of {tr.name} or inside its singular set"
        )


def check_support(spec: IdentitySpec, box):
    """Probe the test function on the unmasked default grid.

    Quadrature masks the exclusion tubes, so a test function reaching into a
    singular set would otherwise go unnoticed.
    """
    tr, s = spec.triple, spec.settings
    for X, Y, _ in tensor_points(tr.space, box, s.panels, s.nodes):
        fj = F.evaluate_batch(spec.test_function, tr.space, X, Y, order=1)
        act = (fj.value != 0) | np.any(fj.first != 0, axis=1)
        if act.any():
            _require_inside(tr, s, X[act], Y[act])


def _identity_integrand(spec: IdentitySpec):
    tr = spec.triple
    space, p = tr.space, tr.p
    f = spec.test_function
    logphi = tr.log_phi
    weights = [tr.v, tr.w_closed] + [w for _, w in tr.extra_terms]
    coefs = [c for c, _ in tr.extra_terms]
    ncol = 3 + len(coefs)
    settings = spec.settings

    def integrand(X, Y):
        out = np.zeros((X.shape[0], ncol), dtype=complex)
        fj = F.evaluate_batch(f, space, X, Y, order=1)
        act = (fj.value != 0) | np.any(fj.first != 0, axis=1)
        if not act.any():
            return out
        Xa, Ya = X[act], Y[act]
        _require_inside(tr, settings, Xa, Ya)
        fv = fj.value[act]
        gf = _gamma_grad(space, F.Jet(fv, fj.first[act]), Xa)
        (lj,) = F.evaluate_many([logphi], space, Xa, Ya, order=1)
        glog = _gamma_grad(space, lj, Xa)
        vals = F.evaluate_many(weights, space, Xa, Ya, order=0)
        v = vals[0].value.real
        fp = np.abs(fv) ** p
        gp = np.sum(np.abs(gf) ** 2, axis=1) ** (0.5 * p)
        eta = gf - fv[:, None] * glog
        cols = [v * gp, vals[1].value.real * fp]
        cols += [c * w.value.real * fp for c, w in zip(coefs, vals[2:])]
        cols.append(v * cp_batch(p, gf, eta))
        out[act] = np.stack(cols, axis=1)
        return out

    return integrand


def _box_for(spec_box, f, space, domain):
    if spec_box is not None:
        return spec_box
    return _clip_box(support_box(f, space), domain_box(space, domain) if domain is not None else None)


def verify_identity(spec: IdentitySpec) -> VerificationReport:
    tr = spec.triple
    s = spec.settings
    F.check_space(spec.test_function, tr.space)
    box = _box_for(s.box, spec.test_function, tr.space, tr.domain)
    if any(hi <= lo for lo, hi in box):
        n = 3 + len(tr.extra_terms)
        zeros = [np.zeros(n), np.zeros(n)]
        return _make_report(spec.describe(), zeros, spec.tolerance, 0, len(tr.extra_terms))
    check_support(spec, box)
    integrand = _identity_integrand(spec)
    levels, used = [], 0
    for panels in (s.panels, 2 * s.panels):
        vals, n = integrate_level(tr.space, integrand, None, s, panels=panels, box=box)
        levels.append(vals)
        used += n
    return _make_report(spec.describe(), levels, spec.tolerance, used, len(tr.extra_terms))


# ---------------------------------------------------------------- HPW


def _hpw_moments(space, p, f, settings, box, panels):
    pp = p / (p - 1.0)

    def integrand(X, Y):
        fv = F.evaluate_batch(f, space, X, Y).value
        fp = np.abs(fv) ** p
        return np.stack([fp, rho_array(space, X, Y) ** pp * fp], axis=1)

    vals, _ = integrate_level(space, integrand, None, settings, panels=panels, box=box)
    return float(vals[0].real), float(vals[1].real)


def _alpha_from(Q, p, M, L):
    if not L > 0 or not M > 0:
        raise ZeroDivisionError("HPW moments vanish; alpha is undefined for f = 0")
    return (Q / p) * ((p - 1.0) / p) * M / L


def hpw_alpha(space: GrushinSpace, p: float, f: F.FieldExpr, settings: QuadratureSettings | None = None) -> float:
    """(Q/p)((p-1)/p) int |f|^p / int rho^(p') |f|^p at the configured panel count."""
    settings = settings or QuadratureSettings()
    box = settings.box or support_box(f, space)
    M, L = _hpw_moments(space, p, f, settings, box, settings.panels)
    return _alpha_from(homogeneous_dimension(space), p, M, L)


def hpw_deficit(space: GrushinSpace, p: float, f: F.FieldExpr, settings: QuadratureSettings | None = None,
                alpha_scale: float = 1.0, tolerance: float = 1e-3, label: str | None = None) -> VerificationReport:
    """Deficit of the product inequality, checked against the C_p remainder.

    With K = int v|grad f|^p, M = int |f|^p, L = int rho^(p')|f|^p and
    phi = exp(-alpha rho^(p')), the identity reads
    K L^(p-1) = G(alpha) + L^(p-1) int v C_p(...), where
    G(alpha) = L^(p-1) (alpha p')^(p-1) (Q M - alpha p L). At the optimal alpha
    G equals (Q/p)^p M^p, and that closed form is what is reported then.
    """
    from .parser import format_expr

    settings = settings or QuadratureSettings()
    F.check_space(f, space)
    Q = homogeneous_dimension(space)
    pp = p / (p - 1.0)
    g = space.gamma
    box = settings.box or support_box(f, space)
    v = F.mul(F.power(F.RHO, g * p), F.power(F.ABSX, -g * p))
    if g > 0 and settings.exclusion_x == 0:
        for X, Y, _ in tensor_points(space, box, settings.panels, settings.nodes):
            fj = F.evaluate_batch(f, space, X, Y, order=1)
            act = (fj.value != 0) | np.any(fj.first != 0, axis=1)
            if np.any(act & (np.linalg.norm(X, axis=1) < SINGULAR_TUBE)):
                raise SupportError(
                    "HPW weight is singular on x = 0; set exclusion_x or use f vanishing near x = 0"
                )

    levels, used, alphas = [], 0, []
    for panels in (settings.panels, 2 * settings.panels):
        M, L = _hpw_moments(space, p, f, settings, box, panels)
        alpha = alpha_scale * _alpha_from(Q, p, M, L)
        alphas.append(alpha)
        # grad log phi = -alpha p' rho^(p'-1) grad rho
        logphi = F.mul(F.Const(-alpha), F.power(F.RHO, pp))

        def integrand(X, Y, logphi=logphi):
            out = np.zeros((X.shape[0], 2), dtype=complex)
            fj = F.evaluate_batch(f, space, X, Y, order=1)
            act = (fj.value != 0) | np.any(fj.first != 0, axis=1)
            if not act.any():
                return out
            Xa, Ya = X[act], Y[act]
            fv = fj.value[act]
            gf = _gamma_grad(space, F.Jet(fv, fj.first[act]), Xa)
            (lj,) = F.evaluate_many([logphi], space, Xa, Ya, order=1)
            glog = _gamma_grad(space, lj, Xa)
            vv = F.evaluate_batch(v, space, Xa, Ya).value.real
            gp = np.sum(np.abs(gf) ** 2, axis=1) ** (0.5 * p)
            eta = gf - fv[:, None] * glog
            out[act] = np.stack([vv * gp, vv * cp_batch(p, gf, eta)], axis=1)
            return out

        vals, n = integrate_level(space, integrand, None, settings, panels=panels, box=box)
        used += n
        K, Rm = float(vals[0].real), float(vals[1].real)
        Lp = L ** (p - 1.0)
        if alpha_scale == 1.0:
            weighted = (Q / p) ** p * M**p
        else:
            weighted = Lp * (alpha * pp) ** (p - 1.0) * (Q * M - alpha * p * L)
        levels.append(np.array([K * Lp, weighted, Lp * Rm]))

    spec = {
        "kind": "hpw",
        "space": [space.m, space.k, space.gamma],
        "p": float(p),
        "f": label or format_expr(f),
        "alpha": alphas[0],
        "alpha_scale": float(alpha_scale),
    }
    return _make_report(spec, levels, tolerance, used, 0)


def dilation_exponent(triple: WeightTriple) -> float:
    """Common scaling power of every term of the d'Ambrosio identity under f -> f o delta_a."""
    if triple.name != "dambrosio":
        raise ValueError("dilation exponent is implemented for the dambrosio entry")
    Q = homogeneous_dimension(triple.space)
    return triple.params["alpha"] - triple.params["beta"] - Q


