"""The C_p remainder density and its extremal two-dimensional ratios.

For xi, eta in C^n,

    C_p(xi, eta) = |xi|^p - |xi - eta|^p - p |xi - eta|^(p-2) Re((xi - eta) . conj(eta)).

Direct evaluation cancels catastrophically when |eta| << |xi|, so values are
computed through T(q, u) = (1 + u)^q - 1 - q u with q = p/2, which is
evaluated by its binomial series for small u.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

_SERIES_CUTOFF = 0.1
_SERIES_TERMS = 24


def _check_p(p):
    if not (1.0 < p < np.inf):
        raise ValueError(f"p must lie in (1, inf), got {p!r}")


def binomial_remainder(q: float, u):
    """(1+u)^q - 1 - q u for u > -1, accurate for small |u|."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < _SERIES_CUTOFF
    if q == 1.0:
        return np.zeros_like(u)
    us = u[small]
    term = np.full_like(us, q * (q - 1.0) / 2.0) * us * us
    acc = term.copy()
    for j in range(3, _SERIES_TERMS + 3):
        term = term * (q - j + 1.0) / j * us
        acc = acc + term
    out[small] = acc
    ul = u[~small]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~small] = np.expm1(q * np.log1p(ul)) - q * ul
    return out


def cp_batch(p: float, xi, eta):
    """C_p on batches: xi, eta of shape (N, n), complex. Returns (N,) reals."""
    _check_p(p)
    xi = np.asarray(xi, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    if xi.shape != eta.shape:
        raise ValueError(f"xi and eta must have equal shapes, got {xi.shape} and {eta.shape}")
    if xi.ndim == 1:
        xi, eta = xi[None, :], eta[None, :]
    d = xi - eta
    a = np.sum(np.abs(d) ** 2, axis=1)
    e2 = np.sum(np.abs(eta) ** 2, axis=1)
    b = 2.0 * np.sum((d * np.conj(eta)).real, axis=1) + e2
    q = 0.5 * p
    out = np.empty(a.shape)
    zero = a == 0
    # convention 0^(p-2) * 0 = 0 when xi = eta
    out[zero] = np.sum(np.abs(xi[zero]) ** 2, axis=1) ** q
    with np.errstate(divide="ignore", invalid="ignore"):
        u = b / a
    # series form only where |eta| << |xi - eta|; elsewhere the direct form
    # is well conditioned and the series form would cancel huge terms
    small = ~zero & (np.abs(u) < _SERIES_CUTOFF)
    an = a[small]
    out[small] = an**q * binomial_remainder(q, u[small]) + q * an ** (q - 1.0) * e2[small]
    big = ~zero & ~small
    ab = a[big]
    xi2 = np.sum(np.abs(xi[big]) ** 2, axis=1)
    re = b[big] - e2[big]  # 2 Re((xi - eta) . conj(eta))
    out[big] = xi2**q - ab**q - q * ab ** (q - 1.0) * re
    return out


def cp(p: float, xi, eta) -> float:
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    eta = np.atleast_1d(np.asarray(eta, dtype=complex))
    if xi.shape != eta.shape:
        raise ValueError(f"length mismatch: {xi.size} vs {eta.size}")
    return float(cp_batch(p, xi[None, :], eta[None, :])[0])


def _ratio_parts(p, s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    r2 = s * s + t * t
    b = 2.0 * s + r2
    num = binomial_remainder(0.5 * p, b) + 0.5 * p * r2
    return num, r2, b


def cp_ratio(p: float, s, t, kind: str = "c1"):
    """The ratio whose extrema define the constants.

    kind="c1":  ((1+2s+s^2+t^2)^(p/2) - 1 - p s) / (s^2+t^2)^(p/2)
    kind="c23": the same numerator over (sqrt(1+2s+s^2+t^2) + 1)^(p-2) (s^2+t^2)
    """
    _check_p(p)
    num, r2, b = _ratio_parts(p, s, t)
    if np.any(r2 == 0):
        raise ValueError("the ratio is undefined at (s, t) = (0, 0)")
    if kind == "c1":
        out = num / r2 ** (0.5 * p)
    elif kind == "c23":
        out = num / ((np.sqrt(1.0 + b) + 1.0) ** (p - 2.0) * r2)
    else:
        raise ValueError(f"unknown ratio kind {kind!r}")
    return out if np.ndim(out) else float(out)


@dataclass
class Extremum:
    value: float
    bracket: float
    location: tuple


@dataclass
class CpConstants:
    p: float
    c1: float | None = None
    c2_inf: float | None = None
    c3_sup: float | None = None
    brackets: dict = field(default_factory=dict)
    locations: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "p": self.p,
            "c1": self.c1,
            "c2_inf": self.c2_inf,
            "c3_sup": self.c3_sup,
            "bracket_c1": self.brackets.get("c1"),
            "bracket_c2_inf": self.brackets.get("c2_inf"),
            "bracket_c3_sup": self.brackets.get("c3_sup"),
        }


def _grid_extreme(func, n, sign):
    # open grid in (-pi/2, pi/2)^2 that avoids the origin for even n
    u = (np.arange(n) + 0.5) / n * np.pi - 0.5 * np.pi
    S, T = np.meshgrid(np.tan(u), np.tan(u), indexing="ij")
    vals = sign * func(S, T)
    idx = np.unravel_index(np.argmin(vals), vals.shape)
    return sign * vals[idx], (S[idx], T[idx]), S, T, vals


def _limit_probes(func, sign, angles=720):
    th = np.arange(angles) / angles * 2.0 * np.pi
    best, loc = np.inf, None
    for r in (1e-6, 1e6):
        s, t = r * np.cos(th), r * np.sin(th)
        vals = sign * func(s, t)
        j = int(np.argmin(vals))
        if vals[j] < best:
            best, loc = vals[j], (s[j], t[j])
    return sign * best, loc


def _extremize_once(func, sign, grid, starts):
    best, loc, S, T, vals = _grid_extreme(func, grid, sign)
    lim, lim_loc = _limit_probes(func, sign)
    if sign * lim < sign * best:
        best, loc = lim, lim_loc

    def obj(uw):
        s, t = np.tan(np.clip(uw, -1.5707963, 1.5707963))
        if s == 0 and t == 0:
            return np.inf
        return sign * float(func(s, t))

    for flat in np.argsort(vals, axis=None)[:starts]:
        i, j = np.unravel_index(flat, vals.shape)
        x0 = np.arctan([S[i, j], T[i, j]])
        res = minimize(obj, x0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        if np.isfinite(res.fun) and res.fun < sign * best:
            best = sign * res.fun
            loc = tuple(np.tan(res.x))
    return float(best), tuple(float(v) for v in loc)


def _extremize(func, sign, grid=400, starts=8):
    """sign=+1 finds the infimum, sign=-1 the supremum.

    The bracket is the change in the refined value when the search grid is
    halved; the value itself comes from the finer search.
    """
    coarse, _ = _extremize_once(func, sign, grid // 2, starts)
    best, loc = _extremize_once(func, sign, grid, starts)
    return Extremum(best, abs(best - coarse), loc)


def extremal_constants(p: float, grid: int = 400) -> CpConstants:
    """c1 for p >= 2; c2 (infimum) and c3 (supremum) of the shared ratio for p < 2."""
    _check_p(p)
    out = CpConstants(p=float(p))
    if p >= 2:
        ex = _extremize(lambda s, t: cp_ratio(p, s, t, "c1"), +1, grid)
        out.c1 = ex.value
        out.brackets["c1"] = ex.bracket
        out.locations["c1"] = ex.location
    else:
        f = lambda s, t: cp_ratio(p, s, t, "c23")  # noqa: E731
        lo = _extremize(f, +1, grid)
        hi = _extremize(f, -1, grid)
        out.c2_inf, out.c3_sup = lo.value, hi.value
        out.brackets.update(c2_inf=lo.bracket, c3_sup=hi.bracket)
        out.locations.update(c2_inf=lo.location, c3_sup=hi.location)
    return out
