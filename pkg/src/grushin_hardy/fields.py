"""Complex scalar fields on R^{m+k} as expression trees.

Evaluation is vectorized over batches of points and carries forward-mode
jets: the value, the Euclidean gradient and the diagonal of the Hessian.
Trees are also closed under symbolic partial differentiation (``partial``),
which is how vector fields built from gradients are differentiated again.

Coordinates are 0-based here; the text syntax in :mod:`parser` is 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .space import GrushinSpace, Point


class FieldDomainError(ValueError):
    """Evaluation left the real-analytic domain of a subexpression."""

    def __init__(self, message, expr=None, point=None):
        self.expr = expr
        self.point = point
        where = ""
        if expr is not None:
            from .parser import format_expr

            where = f" in subexpression {format_expr(expr)}"
        at = f" at z={point}" if point is not None else ""
        super().__init__(f"{message}{where}{at}")


def _wrap(v) -> "FieldExpr":
    if isinstance(v, FieldExpr):
        return v
    if isinstance(v, (int, float, complex, np.number)):
        return Const(complex(v))
    raise TypeError(f"cannot use {type(v).__name__} as a field expression")


class FieldExpr:
    """Base class. Arithmetic operators build new (unsimplified) trees."""

    def children(self) -> tuple:
        return ()

    def __add__(self, other):
        return Add(self, _wrap(other))

    def __radd__(self, other):
        return Add(_wrap(other), self)

    def __sub__(self, other):
        return Sub(self, _wrap(other))

    def __rsub__(self, other):
        return Sub(_wrap(other), self)

    def __mul__(self, other):
        return Mul(self, _wrap(other))

    def __rmul__(self, other):
        return Mul(_wrap(other), self)

    def __truediv__(self, other):
        return Div(self, _wrap(other))

    def __rtruediv__(self, other):
        return Div(_wrap(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, exponent):
        if isinstance(exponent, FieldExpr):
            raise TypeError("exponents must be real constants")
        return Pow(self, float(exponent))


@dataclass(frozen=True, eq=True, repr=True)
class Const(FieldExpr):
    value: complex

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))


@dataclass(frozen=True)
class ImagUnit(FieldExpr):
    pass


@dataclass(frozen=True)
class CoordX(FieldExpr):
    index: int


@dataclass(frozen=True)
class CoordY(FieldExpr):
    index: int


@dataclass(frozen=True)
class Rho(FieldExpr):
    pass


@dataclass(frozen=True)
class RhoEps(FieldExpr):
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"rho_eps needs eps > 0, got {self.eps!r}")
        object.__setattr__(self, "eps", float(self.eps))


@dataclass(frozen=True)
class AbsX(FieldExpr):
    pass


@dataclass(frozen=True)
class Neg(FieldExpr):
    arg: FieldExpr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Add(FieldExpr):
    left: FieldExpr
    right: FieldExpr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Sub(FieldExpr):
    left: FieldExpr
    right: FieldExpr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Mul(FieldExpr):
    left: FieldExpr
    right: FieldExpr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Div(FieldExpr):
    left: FieldExpr
    right: FieldExpr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Pow(FieldExpr):
    base: FieldExpr
    exponent: float

    def __post_init__(self):
        e = float(self.exponent)
        if not math.isfinite(e):
            raise ValueError("exponent must be finite")
        object.__setattr__(self, "exponent", e)

    def children(self):
        return (self.base,)


@dataclass(frozen=True)
class Exp(FieldExpr):
    arg: FieldExpr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Log(FieldExpr):
    arg: FieldExpr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Bump(FieldExpr):
    """``order``-th derivative of the standard bump composed with ``arg``."""

    arg: FieldExpr
    order: int = 0

    def children(self):
        return (self.arg,)


I = ImagUnit()
RHO = Rho()
ABSX = AbsX()


def x(i: int) -> CoordX:
    """1-based x coordinate, matching the text syntax."""
    return CoordX(i - 1)


def y(j: int) -> CoordY:
    return CoordY(j - 1)


def walk(expr: FieldExpr):
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(node.children())


def uses(expr: FieldExpr, *kinds) -> bool:
    return any(isinstance(node, kinds) for node in walk(expr))


def check_space(expr: FieldExpr, space: GrushinSpace):
    for node in walk(expr):
        if isinstance(node, CoordX) and not 0 <= node.index < space.m:
            raise FieldDomainError(f"x{node.index + 1} does not exist for m={space.m}")
        if isinstance(node, CoordY) and not 0 <= node.index < space.k:
            raise FieldDomainError(f"y{node.index + 1} does not exist for k={space.k}")


# ---------------------------------------------------------------- the bump


def bump(t):
    """exp(1/(t^2 - 1)) on |t| < 1 and 0 elsewhere; bump(0) = 1/e."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    with np.errstate(under="ignore", divide="ignore", over="ignore"):
        out[inside] = np.exp(1.0 / (t[inside] ** 2 - 1.0))
    return out if out.ndim else float(out)


def bump_derivatives(t, order: int):
    """Derivatives 0..order of the bump at t, shape (order+1, *t.shape).

    Taylor coefficients of q(t+h) = 1/((t+h)^2 - 1) are obtained by series
    division, then exponentiated with the usual recurrence for exp of a
    power series. Exactly zero outside (-1, 1).
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros((order + 1,) + t.shape)
    inside = np.abs(t) < 1.0
    if not inside.any():
        return out
    ti = t[inside]
    d0, d1 = ti * ti - 1.0, 2.0 * ti
    with np.errstate(all="ignore"):
        q = [1.0 / d0]
        for n in range(1, order + 1):
            prev2 = q[n - 2] if n >= 2 else 0.0
            q.append(-(d1 * q[n - 1] + prev2) / d0)
        e = [np.exp(q[0])]
        for n in range(1, order + 1):
            acc = np.zeros_like(ti)
            for j in range(1, n + 1):
                acc = acc + j * q[j] * e[n - j]
            e.append(acc / n)
        vals = np.array([math.factorial(n) * e[n] for n in range(order + 1)])
    vals[:, e[0] == 0.0] = 0.0
    vals[~np.isfinite(vals)] = 0.0
    out[:, inside] = vals
    return out


# ---------------------------------------------------------------- jets


@dataclass
class Jet:
    """Batch jet. ``first``/``second`` are None below the requested order."""

    value: np.ndarray
    first: Optional[np.ndarray] = None
    second: Optional[np.ndarray] = None

    def __add__(self, other):
        return Jet(
            self.value + other.value,
            None if self.first is None else self.first + other.first,
            None if self.second is None else self.second + other.second,
        )


@dataclass
class Jet2:
    value: complex
    first: np.ndarray
    second_diag: np.ndarray


class _Evaluator:
    def __init__(self, space: GrushinSpace, X, Y, order: int):
        self.space = space
        self.X = np.asarray(X, dtype=float).reshape(-1, space.m)
        self.N = self.X.shape[0]
        self.Y = np.asarray(Y, dtype=float).reshape(self.N, space.k)
        self.order = order
        self.n = space.n
        self.memo = {}
        self._x2 = None

    @property
    def x2(self):
        if self._x2 is None:
            self._x2 = np.sum(self.X**2, axis=1)
        return self._x2

    def zeros_first(self):
        return np.zeros((self.N, self.n), dtype=complex) if self.order >= 1 else None

    def zeros_second(self):
        return np.zeros((self.N, self.n), dtype=complex) if self.order >= 2 else None

    def const(self, c):
        return Jet(np.full(self.N, c, dtype=complex), self.zeros_first(), self.zeros_second())

    def fail(self, msg, node, mask):
        idx = int(np.flatnonzero(mask)[0])
        pt = (tuple(self.X[idx]), tuple(self.Y[idx]))
        raise FieldDomainError(msg, node, pt)

    def run(self, node) -> Jet:
        key = id(node)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[1]
        jet = self._dispatch(node)
        bad = ~np.isfinite(jet.value)
        if jet.first is not None:
            bad |= ~np.all(np.isfinite(jet.first), axis=1)
        if jet.second is not None:
            bad |= ~np.all(np.isfinite(jet.second), axis=1)
        if bad.any():
            self.fail("non-finite value or derivative", node, bad)
        # keep node alive so id() stays unique during this evaluation
        self.memo[key] = (node, jet)
        return jet

    def chain(self, u: Jet, g0, g1=None, g2=None) -> Jet:
        first = second = None
        if self.order >= 1:
            first = g1[:, None] * u.first
        if self.order >= 2:
            second = g2[:, None] * u.first**2 + g1[:, None] * u.second
        return Jet(g0, first, second)

    def _dispatch(self, node) -> Jet:
        sp = self.space
        if isinstance(node, Const):
            return self.const(node.value)
        if isinstance(node, ImagUnit):
            return self.const(1j)
        if isinstance(node, CoordX):
            if not 0 <= node.index < sp.m:
                raise FieldDomainError(f"x{node.index + 1} does not exist for m={sp.m}", node)
            jet = Jet(self.X[:, node.index].astype(complex), self.zeros_first(), self.zeros_second())
            if jet.first is not None:
                jet.first[:, node.index] = 1.0
            return jet
        if isinstance(node, CoordY):
            if not 0 <= node.index < sp.k:
                raise FieldDomainError(f"y{node.index + 1} does not exist for k={sp.k}", node)
            jet = Jet(self.Y[:, node.index].astype(complex), self.zeros_first(), self.zeros_second())
            if jet.first is not None:
                jet.first[:, sp.m + node.index] = 1.0
            return jet
        if isinstance(node, AbsX):
            return self._absx(node)
        if isinstance(node, Rho):
            return self._rho(node, 0.0)
        if isinstance(node, RhoEps):
            return self._rho(node, node.eps)
        if isinstance(node, Neg):
            u = self.run(node.arg)
            return Jet(-u.value, None if u.first is None else -u.first, None if u.second is None else -u.second)
        if isinstance(node, Add):
            return self.run(node.left) + self.run(node.right)
        if isinstance(node, Sub):
            a, b = self.run(node.left), self.run(node.right)
            return Jet(
                a.value - b.value,
                None if a.first is None else a.first - b.first,
                None if a.second is None else a.second - b.second,
            )
        if isinstance(node, Mul):
            a, b = self.run(node.left), self.run(node.right)
            return self._mul(a, b)
        if isinstance(node, Div):
            a, b = self.run(node.left), self.run(node.right)
            zero = b.value == 0
            if zero.any():
                self.fail("division by zero", node, zero)
            inv = 1.0 / b.value
            return self._mul(a, self.chain(b, inv, -inv * inv, 2.0 * inv**3))
        if isinstance(node, Pow):
            return self._pow(node)
        if isinstance(node, Exp):
            u = self.run(node.arg)
            with np.errstate(over="ignore"):
                e = np.exp(u.value)
            return self.chain(u, e, e, e)
        if isinstance(node, Log):
            u = self.run(node.arg)
            bad = (u.value.imag == 0) & (u.value.real <= 0)
            if bad.any():
                self.fail("log of a nonpositive real", node, bad)
            inv = 1.0 / u.value
            return self.chain(u, np.log(u.value), inv, -inv * inv)
        if isinstance(node, Bump):
            u = self.run(node.arg)
            bad = u.value.imag != 0
            if bad.any():
                self.fail("bump of a non-real argument", node, bad)
            d = bump_derivatives(u.value.real, node.order + self.order)
            g = [d[node.order + i].astype(complex) for i in range(self.order + 1)]
            jet = self.chain(u, *g, *([None] * (2 - self.order)))
            # outside the support every derivative vanishes, whatever the inner jet does
            outside = np.abs(u.value.real) >= 1.0
            if outside.any() and jet.first is not None:
                jet.first[outside] = 0.0
                if jet.second is not None:
                    jet.second[outside] = 0.0
            return jet
        raise TypeError(f"unknown node {node!r}")

    def _mul(self, a: Jet, b: Jet) -> Jet:
        first = second = None
        if self.order >= 1:
            first = a.first * b.value[:, None] + a.value[:, None] * b.first
        if self.order >= 2:
            second = (
                a.second * b.value[:, None]
                + 2.0 * a.first * b.first
                + a.value[:, None] * b.second
            )
        return Jet(a.value * b.value, first, second)

    def _pow(self, node: Pow) -> Jet:
        u = self.run(node.base)
        a = node.exponent
        v = u.value
        is_int = a == round(a)
        zero = v == 0
        if not is_int:
            bad = (v.imag == 0) & (v.real < 0)
            if bad.any():
                self.fail(f"non-integer power {a} of a negative real", node, bad)
        needed = [a - i for i in range(self.order + 1)]
        coef = [1.0, a, a * (a - 1.0)]
        g = []
        for i, e in enumerate(needed):
            if coef[i] == 0.0:
                g.append(np.zeros_like(v))
                continue
            if e < 0 and zero.any():
                self.fail(f"power {a} is singular at zero", node, zero)
            with np.errstate(divide="ignore", invalid="ignore"):
                if e == 0:
                    pw = np.ones_like(v)
                elif is_int:
                    pw = v ** int(round(e)) if e > 0 else 1.0 / v ** int(round(-e))
                else:
                    pw = np.where(zero, 0.0, v) ** e
                    pw = np.where(zero, 0.0, pw)
            g.append(coef[i] * pw)
        g += [None] * (3 - len(g))
        return self.chain(u, g[0], g[1], g[2])

    def _absx(self, node) -> Jet:
        r = np.sqrt(self.x2)
        first = second = None
        if self.order >= 1:
            zero = r == 0
            if zero.any():
                self.fail("|x| is not differentiable at x = 0", node, zero)
            first = np.zeros((self.N, self.n), dtype=complex)
            first[:, : self.space.m] = self.X / r[:, None]
        if self.order >= 2:
            second = np.zeros((self.N, self.n), dtype=complex)
            second[:, : self.space.m] = (r[:, None] ** 2 - self.X**2) / r[:, None] ** 3
        return Jet(r.astype(complex), first, second)

    def _rho(self, node, eps) -> Jet:
        sp = self.space
        g = 1.0 + sp.gamma
        x2e = self.x2 + eps * eps
        y2 = np.sum(self.Y**2, axis=1) if sp.k else np.zeros(self.N)
        S = x2e**g + g * g * y2
        r = S ** (0.5 / g)
        first = second = None
        if self.order >= 1:
            bad = S == 0
            if eps == 0 and sp.gamma > 0:
                bad = bad | (self.x2 == 0)
            if bad.any():
                self.fail("rho is not differentiable here (origin or x = 0)", node, bad)
            Sx = 2.0 * g * (x2e ** (g - 1.0))[:, None] * self.X
            Sy = 2.0 * g * g * self.Y
            dS = np.concatenate([Sx, Sy], axis=1)
            c1 = (0.5 / g) * r / S
            first = (c1[:, None] * dS).astype(complex)
        if self.order >= 2:
            Sxx = 2.0 * g * (x2e ** (g - 1.0))[:, None] + 4.0 * g * (g - 1.0) * (
                x2e ** (g - 2.0)
            )[:, None] * self.X**2
            Syy = np.full((self.N, sp.k), 2.0 * g * g)
            d2S = np.concatenate([Sxx, Syy], axis=1)
            c2 = (0.5 / g) * (0.5 / g - 1.0) * r / S**2
            second = (c2[:, None] * dS**2 + c1[:, None] * d2S).astype(complex)
        return Jet(r.astype(complex), first, second)


def evaluate_batch(expr: FieldExpr, space: GrushinSpace, X, Y, order: int = 0) -> Jet:
    """Jets of ``expr`` at every row of X (N, m), Y (N, k)."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    ev = _Evaluator(space, X, Y, order)
    if ev.N == 0:
        return Jet(np.zeros(0, complex), ev.zeros_first(), ev.zeros_second())
    with np.errstate(all="ignore"):
        return ev.run(expr)


def evaluate_many(exprs, space, X, Y, order=0):
    """Jets of several expressions sharing one memo (common subtrees computed once)."""
    ev = _Evaluator(space, X, Y, order)
    with np.errstate(all="ignore"):
        return [ev.run(e) for e in exprs]


def eval_field(f: FieldExpr, space: GrushinSpace, z: Point) -> complex:
    X, Y = z.arrays()
    return complex(evaluate_batch(f, space, X, Y, order=0).value[0])


def jet2(f: FieldExpr, space: GrushinSpace, z: Point) -> Jet2:
    X, Y = z.arrays()
    j = evaluate_batch(f, space, X, Y, order=2)
    return Jet2(complex(j.value[0]), j.first[0].copy(), j.second[0].copy())


# ---------------------------------------------------------------- symbolic layer

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e, value=None):
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0):
        return b
    if _is_const(b, 0):
        return a
    return Add(a, b)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return neg(b)
    return Sub(a, b)


def neg(a):
    a = _wrap(a)
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0) or _is_const(b, 0):
        return ZERO
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    return Mul(a, b)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    if _is_const(b, 1):
        return a
    if _is_const(a, 0):
        return ZERO
    if _is_const(a) and _is_const(b) and b.value != 0:
        return Const(a.value / b.value)
    return Div(a, b)


def power(a, e: float):
    a = _wrap(a)
    if e == 0:
        return ONE
    if e == 1:
        return a
    if _is_const(a) and (a.value.real > 0 or a.value.imag != 0 or e == round(e)):
        return Const(a.value**e)
    return Pow(a, e)


def prod(*factors):
    out = ONE
    for f in factors:
        out = mul(out, f)
    return out


def total(*terms):
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


def _sum_sq_x(space):
    return total(*(mul(CoordX(i), CoordX(i)) for i in range(space.m)))


def partial(expr: FieldExpr, space: GrushinSpace, axis: int) -> FieldExpr:
    """Symbolic d/dz_axis with light constant folding; axis < m is x, else y."""
    cache = {}

    def d(node):
        hit = cache.get(id(node))
        if hit is not None:
            return hit[1]
        out = _partial(node)
        cache[id(node)] = (node, out)
        return out

    m = space.m
    g = 1.0 + space.gamma

    def _partial(node):
        if isinstance(node, (Const, ImagUnit)):
            return ZERO
        if isinstance(node, CoordX):
            return ONE if axis == node.index else ZERO
        if isinstance(node, CoordY):
            return ONE if axis == m + node.index else ZERO
        if isinstance(node, AbsX):
            if axis >= m:
                return ZERO
            return div(CoordX(axis), node)
        if isinstance(node, Rho):
            tail = power(node, -(2.0 * space.gamma + 1.0))
            if axis < m:
                return prod(power(ABSX, 2.0 * space.gamma), CoordX(axis), tail)
            return prod(Const(g), CoordY(axis - m), tail)
        if isinstance(node, RhoEps):
            tail = power(node, -(2.0 * space.gamma + 1.0))
            if axis < m:
                xe2 = add(Const(node.eps**2), _sum_sq_x(space))
                return prod(power(xe2, space.gamma), CoordX(axis), tail)
            return prod(Const(g), CoordY(axis - m), tail)
        if isinstance(node, Neg):
            return neg(d(node.arg))
        if isinstance(node, Add):
            return add(d(node.left), d(node.right))
        if isinstance(node, Sub):
            return sub(d(node.left), d(node.right))
        if isinstance(node, Mul):
            return add(mul(d(node.left), node.right), mul(node.left, d(node.right)))
        if isinstance(node, Div):
            num = sub(mul(d(node.left), node.right), mul(node.left, d(node.right)))
            return div(num, power(node.right, 2.0))
        if isinstance(node, Pow):
            du = d(node.base)
            if _is_const(du, 0):
                return ZERO
            return mul(mul(Const(node.exponent), power(node.base, node.exponent - 1.0)), du)
        if isinstance(node, Exp):
            return mul(node, d(node.arg))
        if isinstance(node, Log):
            return div(d(node.arg), node.arg)
        if isinstance(node, Bump):
            du = d(node.arg)
            if _is_const(du, 0):
                return ZERO
            return mul(Bump(node.arg, node.order + 1), du)
        raise TypeError(f"unknown node {node!r}")

    return d(expr)


def substitute(expr: FieldExpr, mapping) -> FieldExpr:
    """Rebuild ``expr`` with leaves replaced by ``mapping(leaf)`` (None keeps it)."""
    cache = {}

    def go(node):
        hit = cache.get(id(node))
        if hit is not None:
            return hit[1]
        kids = node.children()
        if not kids:
            rep = mapping(node)
            out = node if rep is None else rep
        elif isinstance(node, Pow):
            out = Pow(go(node.base), node.exponent)
        elif isinstance(node, Bump):
            out = Bump(go(node.arg), node.order)
        else:
            out = type(node)(*(go(c) for c in kids))
        cache[id(node)] = (node, out)
        return out

    return go(expr)


def compose_dilation(expr: FieldExpr, space: GrushinSpace, a: float) -> FieldExpr:
    """The field z -> expr(delta_a z)."""
    s = a ** (1.0 + space.gamma)

    def leaf(node):
        if isinstance(node, CoordX):
            return Mul(Const(a), node)
        if isinstance(node, CoordY):
            return Mul(Const(s), node)
        if isinstance(node, (Rho, AbsX)):
            return Mul(Const(a), node)
        if isinstance(node, RhoEps):
            raise ValueError("rho_eps is not dilation covariant")
        return None

    return substitute(expr, leaf)
