"""Vectors, rays, the reflection law, and segment slopes in R^{n+1}, n in {1, 2}.

Points on a mirror live in R^{n+1} = (horizontal label in R^n, height z).
Beams travel along straight rays and reflect specularly off mirror surfaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormalError

_NORMAL_EPS = 1e-15


def unit(v):
    """Return v / |v|."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < _NORMAL_EPS:
        raise DegenerateNormalError("cannot normalize a (near-)zero vector")
    return v / n


def reflect(v, n):
    """Specular reflection of velocity ``v`` across a surface with normal ``n``.

    Implements v' = v - 2 <v, n> n / |n|^2. The normal need not be unit
    length and either orientation gives the same result. Norm of ``v`` is
    preserved exactly by the formula.
    """
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    nn = float(np.dot(n, n))
    if nn < _NORMAL_EPS**2:
        raise DegenerateNormalError("reflection normal is numerically zero")
    return v - (2.0 * float(np.dot(v, n)) / nn) * n


def upward_normal(gradient):
    """Upward normal (-grad(h), 1) of the surface z = h(x) at a point.

    ``gradient`` is grad(h) in R^n; the result lives in R^{n+1}.
    """
    g = np.atleast_1d(np.asarray(gradient, dtype=float))
    return np.concatenate([-g, [1.0]])


def reflect_vertical(gradient):
    """Direction of a vertical up ray after hitting z = h(x): closed form.

    Returns (2 g, |g|^2 - 1) / (1 + |g|^2) where g = grad(h) at the point.
    Equals ``reflect(e_z, upward_normal(g))`` but cheaper and exact.
    """
    g = np.atleast_1d(np.asarray(gradient, dtype=float))
    s = float(np.dot(g, g))
    return np.concatenate([2.0 * g, [s - 1.0]]) / (1.0 + s)


def segment_slope(a, b):
    """Signed slope (rise over horizontal run) of the segment from a to b.

    Vertical segments return ``math.inf`` with the sign of the rise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rise = float(b[-1] - a[-1])
    run = float(np.linalg.norm(b[:-1] - a[:-1]))
    if run == 0.0:
        return math.copysign(math.inf, rise) if rise != 0.0 else 0.0
    return rise / run


@dataclass(frozen=True)
class Ray:
    """A ray origin + unit direction in R^{n+1}."""

    origin: np.ndarray
    direction: np.ndarray

    def __init__(self, origin, direction):
        origin = np.asarray(origin, dtype=float).copy()
        direction = unit(direction)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)
        if origin.shape != direction.shape:
            raise ValueError("origin and direction dimensions differ")

    @property
    def dim(self):
        return self.origin.shape[0]

    def at(self, t):
        return self.origin + float(t) * self.direction


def vertical_ray(label, z):
    """Upward vertical ray through horizontal label ``label`` starting at height z."""
    label = np.atleast_1d(np.asarray(label, dtype=float))
    origin = np.concatenate([label, [float(z)]])
    direction = np.zeros_like(origin)
    direction[-1] = 1.0
    return Ray(origin, direction)
