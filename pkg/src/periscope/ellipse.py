"""Reflection in an ellipse as a map between the two focal pencils.

Scale the ellipse so the string length |CA| + |CB| equals 2 (semi-major
axis 1); the foci then sit at (-c, 0) and (c, 0) with 0 <= c < 1. A ray
leaving focus A at angle alpha from the focal axis hits the ellipse at a
point C and, by the focal property, passes through focus B at an angle
beta. Eliminating the chord lengths from the triangle relations

    v sin(alpha) = u sin(beta),  u + v = 2,  v cos(alpha) + u cos(beta) = 2c

gives sin(alpha + beta) = c (sin(alpha) + sin(beta)), which in
tan-half-angle coordinates collapses to the fractional-linear form

    tan(beta/2) = ((1 - c) / (1 + c)) / tan(alpha/2).

Two independent routes to beta are provided: the closed form above and a
synthetic construction that places C, reflects the incident ray in the
tangent line, and measures the angle at B. Their agreement is the main
correctness check for the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure, UsageError, VerificationError
from .geometry import reflect

__all__ = [
    "EllipseConfig",
    "chord_point",
    "focal_chord_length",
    "mobius_fit",
    "pencil_map_angle",
    "pencil_map_geometric",
    "pencil_table",
]


@dataclass(frozen=True)
class EllipseConfig:
    """Ellipse with string length 2 and focal half-distance ``c``."""

    c: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.c < 1.0:
            raise UsageError(f"focal half-distance must satisfy 0 <= c < 1, got {self.c}")

    @property
    def focus_a(self) -> np.ndarray:
        return np.array([-self.c, 0.0])

    @property
    def focus_b(self) -> np.ndarray:
        return np.array([self.c, 0.0])

    @property
    def semi_minor(self) -> float:
        return math.sqrt(1.0 - self.c * self.c)

    @property
    def half_angle_coefficient(self) -> float:
        """The constant value of tan(alpha/2) * tan(beta/2)."""
        return (1.0 - self.c) / (1.0 + self.c)


def _check_angle(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= math.pi:
        raise UsageError(f"pencil angle must lie in [0, pi], got {alpha}")
    return alpha


def pencil_map_angle(cfg: EllipseConfig, alpha: float) -> float:
    """Angle ``beta`` at the far focus, via the tan-half-angle closed form.

    Endpoints map by continuity (0 -> pi, pi -> 0). For interior alpha the
    result is cross-checked against sin(a+b) = c (sin a + sin b); a residual
    above 1e-12 would indicate a bug rather than bad input.
    """
    alpha = _check_angle(alpha)
    if alpha == 0.0:
        return math.pi
    if alpha == math.pi:
        return 0.0
    # atan2 keeps precision for alpha near both ends of (0, pi)
    beta = 2.0 * math.atan2(cfg.half_angle_coefficient, math.tan(0.5 * alpha))
    residual = math.sin(alpha + beta) - cfg.c * (math.sin(alpha) + math.sin(beta))
    if abs(residual) > 1e-12:
        raise NumericalFailure(
            f"closed-form pencil map violates the sine identity by {residual:.3e}"
        )
    return beta


def focal_chord_length(cfg: EllipseConfig, alpha: float) -> float:
    """Distance |AC| from the near focus to the ellipse along direction alpha.

    Law of cosines in triangle ABC with |AB| = 2c and |CA| + |CB| = 2 gives
    |AC| = (1 - c^2) / (1 - c cos(alpha)).
    """
    alpha = _check_angle(alpha)
    return (1.0 - cfg.c * cfg.c) / (1.0 - cfg.c * math.cos(alpha))


def chord_point(cfg: EllipseConfig, alpha: float) -> np.ndarray:
    """Ellipse point hit by the ray from focus A at angle alpha."""
    v = focal_chord_length(cfg, alpha)
    return cfg.focus_a + v * np.array([math.cos(alpha), math.sin(alpha)])


def pencil_map_geometric(cfg: EllipseConfig, alpha: float, tol: float = 1e-10) -> float:
    """Angle ``beta`` by synthetic construction: place C, reflect, measure.

    The incident direction is reflected in the ellipse tangent at C and the
    outgoing ray is required to pass through the far focus within ``tol``
    (transverse miss per unit length). A miss indicates an internal bug.
    """
    alpha = _check_angle(alpha)
    if alpha == 0.0:
        return math.pi
    if alpha == math.pi:
        return 0.0
    point = chord_point(cfg, alpha)
    b2 = 1.0 - cfg.c * cfg.c
    on_ellipse = point[0] ** 2 + point[1] ** 2 / b2 - 1.0
    if abs(on_ellipse) > 1e-12:
        raise VerificationError(f"chord point off the ellipse by {on_ellipse:.3e}")
    # implicit gradient of x^2 + y^2/b^2 is an (inward or outward) normal
    normal = np.array([point[0], point[1] / b2])
    incident = np.array([math.cos(alpha), math.sin(alpha)])
    outgoing = reflect(incident, normal)
    to_b = cfg.focus_b - point
    dist = np.linalg.norm(to_b)
    if dist > 1e-12:
        miss = abs(outgoing[0] * to_b[1] - outgoing[1] * to_b[0]) / dist
        if miss > tol or np.dot(outgoing, to_b) <= 0.0:
            raise VerificationError(
                f"reflected chord misses the far focus by {miss:.3e} (tol {tol:.1e})"
            )
    chords = np.linalg.norm(point - cfg.focus_a) + dist
    if abs(chords - 2.0) > 1e-12:
        raise VerificationError(f"string length |AC| + |CB| = {chords!r}, expected 2")
    # angle at B, measured from the axis direction pointing back toward A
    return math.atan2(point[1], -(point[0] - cfg.c))


def _interior_angles(samples: int) -> np.ndarray:
    if samples < 3:
        raise UsageError(f"need at least 3 samples, got {samples}")
    return math.pi * (np.arange(1, samples + 1)) / (samples + 1.0)


def mobius_fit(cfg: EllipseConfig, samples: int) -> tuple[float, float]:
    """Estimate the constant tan(alpha/2) tan(beta/2) over sampled angles.

    Returns (mean product, max |product - (1-c)/(1+c)|). A small deviation
    certifies that the pencil map is fractional-linear in tan-half-angle
    coordinates with coefficient (1-c)/(1+c).
    """
    alphas = _interior_angles(samples)
    target = cfg.half_angle_coefficient
    products = np.empty(samples)
    for i, alpha in enumerate(alphas):
        beta = pencil_map_angle(cfg, float(alpha))
        products[i] = math.tan(0.5 * alpha) * math.tan(0.5 * beta)
    return float(products.mean()), float(np.abs(products - target).max())


def pencil_table(cfg: EllipseConfig, samples: int) -> np.ndarray:
    """(alpha, beta, tan(alpha/2) tan(beta/2)) rows over interior angles."""
    alphas = _interior_angles(samples)
    rows = np.empty((samples, 3))
    for i, alpha in enumerate(alphas):
        beta = pencil_map_angle(cfg, float(alpha))
        rows[i] = (alpha, beta, math.tan(0.5 * alpha) * math.tan(0.5 * beta))
    return rows
