"""Numerical verification of sharp weighted Hardy-type identities on Grushin spaces."""

from .space import GrushinSpace, Point, homogeneous_dimension, rho, rho_eps, dilate

__all__ = ["GrushinSpace", "Point", "homogeneous_dimension", "rho", "rho_eps", "dilate"]
