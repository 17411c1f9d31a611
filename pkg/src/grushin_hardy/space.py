"""Baouendi-Grushin ambient space: quasi-norm, regularization, dilations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GrushinSpace:
    """R^{m+k} with the vector fields d/dx_i and |x|^gamma d/dy_j."""

    m: int
    k: int
    gamma: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a nonnegative integer, got {self.k!r}")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be a finite nonnegative real, got {self.gamma!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n(self) -> int:
        return self.m + self.k

    @property
    def Q(self) -> float:
        return homogeneous_dimension(self)

    def point(self, x, y=()) -> "Point":
        return Point.of(self, x, y)


@dataclass(frozen=True)
class Point:
    x: tuple
    y: tuple

    @classmethod
    def of(cls, space: GrushinSpace, x, y=()) -> "Point":
        x = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
        y = tuple(float(v) for v in np.atleast_1d(np.asarray(y, dtype=float))) if np.size(y) else ()
        if len(x) != space.m or len(y) != space.k:
            raise ValueError(
                f"point has dims ({len(x)}, {len(y)}), space expects ({space.m}, {space.k})"
            )
        return cls(x, y)

    def arrays(self):
        """Batch-of-one coordinate arrays of shape (1, m) and (1, k)."""
        return np.array([self.x], dtype=float), np.array([self.y], dtype=float).reshape(1, -1)


def homogeneous_dimension(space: GrushinSpace) -> float:
    return space.m + (1.0 + space.gamma) * space.k


def _norm_sq(a):
    return np.sum(np.square(a), axis=-1)


def rho_array(space: GrushinSpace, X, Y, eps: float = 0.0):
    """Vectorized quasi-norm on coordinate arrays X (..., m), Y (..., k).

    With ``eps > 0`` |x| is replaced by (eps^2 + |x|^2)^(1/2).
    """
    g = 1.0 + space.gamma
    x2 = _norm_sq(np.asarray(X, dtype=float)) + eps * eps
    y2 = _norm_sq(np.asarray(Y, dtype=float)) if space.k else 0.0
    S = x2**g + g * g * y2
    return S ** (0.5 / g)


def rho(space: GrushinSpace, z: Point) -> float:
    X, Y = z.arrays()
    return float(rho_array(space, X, Y)[0])


def rho_eps(space: GrushinSpace, z: Point, eps: float) -> float:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    X, Y = z.arrays()
    return float(rho_array(space, X, Y, eps=eps)[0])


def dilate(space: GrushinSpace, z: Point, a: float) -> Point:
    if not a > 0:
        raise ValueError(f"dilation factor must be positive, got {a!r}")
    s = a ** (1.0 + space.gamma)
    return Point(tuple(a * v for v in z.x), tuple(s * v for v in z.y))


def sample_annulus(space: GrushinSpace, n: int, rng, r0=0.5, r1=2.0, min_x_ratio=1e-2):
    """Random points with r0 <= rho <= r1 and |x| >= min_x_ratio * rho.

    Points are drawn on rho-spheres through the dilation structure: a random
    direction is normalized to rho = 1 and then dilated.
    """
    out_x, out_y = [], []
    while sum(len(b) for b in out_x) < n:
        X = rng.normal(size=(2 * n, space.m))
        Y = rng.normal(size=(2 * n, space.k))
        r = rho_array(space, X, Y)
        X = X / r[:, None]
        Y = Y / (r ** (1.0 + space.gamma))[:, None]
        a = rng.uniform(r0, r1, size=2 * n)
        X = X * a[:, None]
        Y = Y * (a ** (1.0 + space.gamma))[:, None]
        keep = np.linalg.norm(X, axis=1) >= min_x_ratio * a
        out_x.append(X[keep])
        out_y.append(Y[keep])
    return np.concatenate(out_x)[:n], np.concatenate(out_y)[:n]
