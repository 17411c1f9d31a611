"""Composite tensor Gauss-Legendre quadrature on truncated Grushin domains.

Integrands are batch callables ``g(X, Y) -> (N,)`` or ``(N, K)`` complex
arrays. Domains are applied by masking; singular loci are handled by
exclusion tubes or by the eps-ladder in :func:`integrate_eps_limit`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np
from numpy.polynomial.legendre import leggauss

from .space import GrushinSpace, rho_array

MAX_DIM = 3
CHUNK = 1 << 18


class QuadratureBudgetError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class QuadratureSettings:
    nodes: int = 8
    panels: int = 8
    # per-axis (lo, hi); None derives the box from the domain or the test function
    box: tuple | None = None
    exclusion_x: float = 0.0
    exclusion_origin: float = 0.0
    eps_ladder: tuple = (1e-2, 1e-3, 1e-4)
    budget: int = 40_000_000
    target_rel_err: float = 1e-3

    def __post_init__(self):
        if int(self.nodes) != self.nodes or self.nodes < 2:
            raise ValueError("nodes must be an integer >= 2")
        if int(self.panels) != self.panels or self.panels < 1:
            raise ValueError("panels must be a positive integer")
        if self.exclusion_x < 0 or self.exclusion_origin < 0:
            raise ValueError("exclusion radii must be nonnegative")
        ladder = tuple(float(e) for e in self.eps_ladder)
        if not ladder or any(e <= 0 for e in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("eps_ladder must be nonempty, positive and strictly decreasing")
        object.__setattr__(self, "eps_ladder", ladder)
        if self.box is not None:
            object.__setattr__(self, "box", tuple((float(a), float(b)) for a, b in self.box))

    @classmethod
    def from_dict(cls, d: dict | None) -> "QuadratureSettings":
        d = dict(d or {})
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown quadrature setting(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def refined(self) -> "QuadratureSettings":
        return replace(self, panels=2 * self.panels)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class IntegralResult:
    value: complex
    error_estimate: float
    nodes_used: int
    flags: list = field(default_factory=list)


def _axis_rule(lo, hi, panels, nodes, split_at_zero=False):
    t, w = leggauss(nodes)
    if split_at_zero and lo < 0 < hi:
        # keep x = 0 on a panel boundary
        a = max(-lo, hi)
        lo, hi = -a, a
        if panels % 2:
            panels += 1
    edges = np.linspace(lo, hi, panels + 1)
    h = np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    pts = (mids[:, None] + 0.5 * h[:, None] * t[None, :]).ravel()
    wts = (0.5 * h[:, None] * w[None, :]).ravel()
    return pts, wts


def _rules(space, box, panels, nodes):
    rules = []
    for axis, (lo, hi) in enumerate(box):
        if not hi > lo:
            raise ValueError(f"empty box interval on axis {axis}: ({lo}, {hi})")
        rules.append(_axis_rule(lo, hi, panels, nodes, split_at_zero=axis < space.m))
    return rules


def domain_box(space: GrushinSpace, domain) -> tuple | None:
    """Bounding box of a bounded domain, or None."""
    g = 1.0 + space.gamma
    if domain is None or domain.kind == "whole" or domain.kind == "quadrant":
        return None
    R = domain.R if domain.kind in ("ball", "xslab") else domain.r1
    if domain.kind == "xslab":
        return None
    return tuple([(-R, R)] * space.m + [(-(R**g) / g, R**g / g)] * space.k)


def _mask(space, domain, settings, X, Y):
    keep = np.ones(X.shape[0], dtype=bool)
    if domain is not None:
        keep &= domain.contains(space, X, Y)
    if settings.exclusion_x > 0:
        keep &= np.linalg.norm(X, axis=1) >= settings.exclusion_x
    if settings.exclusion_origin > 0:
        keep &= rho_array(space, X, Y) >= settings.exclusion_origin
    return keep


def tensor_points(space, box, panels, nodes):
    """Generator of (X, Y, weights) chunks over the tensor grid."""
    rules = _rules(space, box, panels, nodes)
    pts = [r[0] for r in rules]
    wts = [r[1] for r in rules]
    sizes = [len(p) for p in pts]
    total = int(np.prod(sizes))
    # iterate over the leading axis in slabs so chunks stay bounded
    lead = sizes[0]
    inner = total // lead
    per = max(1, CHUNK // max(inner, 1))
    inner_grid = [np.ravel(a) for a in np.meshgrid(*pts[1:], indexing="ij")] if len(pts) > 1 else []
    inner_w = np.ones(1)
    for w in wts[1:]:
        inner_w = np.multiply.outer(inner_w, w).ravel()
    for start in range(0, lead, per):
        sl = slice(start, min(lead, start + per))
        p0, w0 = pts[0][sl], wts[0][sl]
        cols = [np.repeat(p0, inner)] + [np.tile(a, len(p0)) for a in inner_grid]
        Z = np.stack(cols, axis=1)
        W = np.multiply.outer(w0, inner_w).ravel()
        yield Z[:, : space.m], Z[:, space.m :], W


def integrate_level(space, integrand, domain, settings, panels=None, box=None):
    """One tensor-grid level. Returns (values (K,), nodes_used)."""
    if space.n > MAX_DIM:
        raise ValueError(f"tensor quadrature supports m + k <= {MAX_DIM}, got {space.n}")
    panels = settings.panels if panels is None else panels
    box = box or settings.box or domain_box(space, domain)
    if box is None:
        raise ValueError("an unbounded domain needs an explicit truncation box")
    if len(box) != space.n:
        raise ValueError(f"box has {len(box)} axes, space has {space.n}")
    acc = None
    used = 0
    for X, Y, W in tensor_points(space, box, panels, settings.nodes):
        keep = _mask(space, domain, settings, X, Y)
        if not keep.any():
            continue
        X, Y, W = X[keep], Y[keep], W[keep]
        if used + len(W) > settings.budget:
            raise QuadratureBudgetError(
                f"quadrature budget of {settings.budget} nodes exceeded", partial=acc
            )
        vals = np.asarray(integrand(X, Y), dtype=complex)
        part = np.tensordot(W, vals.reshape(len(W), -1), axes=(0, 0))
        acc = part if acc is None else acc + part
        used += len(W)
    if acc is None:
        probe = np.asarray(integrand(np.zeros((1, space.m)), np.zeros((1, space.k))), dtype=complex)
        acc = np.zeros(probe.reshape(1, -1).shape[1], dtype=complex)
    return acc, used


def integrate(space: GrushinSpace, integrand, domain=None, settings: QuadratureSettings | None = None, box=None):
    """Value at doubled panels, error estimate |I(2P) - I(P)|."""
    settings = settings or QuadratureSettings()
    coarse, n0 = integrate_level(space, integrand, domain, settings, box=box)
    fine, n1 = integrate_level(space, integrand, domain, settings, panels=2 * settings.panels, box=box)
    if fine.size == 1:
        return IntegralResult(complex(fine[0]), float(abs(fine[0] - coarse[0])), n0 + n1)
    return [IntegralResult(complex(f), float(abs(f - c)), n0 + n1) for f, c in zip(fine, coarse)]


def integrate_eps_limit(space, family, domain=None, settings: QuadratureSettings | None = None, box=None):
    """Integrate ``family(eps)`` along the ladder and extrapolate linearly to eps = 0."""
    settings = settings or QuadratureSettings()
    ladder = tuple(settings.eps_ladder)
    if not ladder:
        raise ValueError("eps_ladder is empty")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps_ladder must be strictly decreasing")
    results = [integrate(space, family(e), domain, settings, box=box) for e in ladder]
    vals = np.array([r.value for r in results])
    flags = []
    steps = np.diff(vals.real)
    if len(steps) > 1 and not (np.all(steps >= 0) or np.all(steps <= 0)):
        flags.append("non_monotone_ladder")
    if len(ladder) == 1:
        r = results[0]
        return IntegralResult(r.value, r.error_estimate, r.nodes_used, flags)
    e1, e2 = ladder[-2], ladder[-1]
    v1, v2 = vals[-2], vals[-1]
    extrap = v2 - e2 * (v1 - v2) / (e1 - e2)
    err = results[-1].error_estimate + abs(extrap - v2)
    return IntegralResult(complex(extrap), float(err), sum(r.nodes_used for r in results), flags)


__all__ = [
    "QuadratureSettings",
    "IntegralResult",
    "QuadratureBudgetError",
    "integrate",
    "integrate_level",
    "integrate_eps_limit",
    "domain_box",
    "tensor_points",
]
