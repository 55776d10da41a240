"""Planar maps between beam cross sections, and gradient-field utilities.

A ``PlaneMap`` sends horizontal labels to horizontal labels. The package
cares about three questions answered here: is the displacement a gradient
(``curl_deficit`` / ``potential_from_gradient``), is the map invertible where
needed (``invert_map``), and does it preserve or reverse orientation
(``orientation``).
"""

from __future__ import annotations

import numpy as np

from .errors import InversionError, NotGradientError, NumericalFailure, SingularJacobianError
from .fields import PolynomialField, ScalarField, _pts, _solve_small, poly_trim


class PlaneMap:
    """Base class: batched ``__call__`` and exact ``jacobian``."""

    dim = 2

    def __call__(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def displacement(self, x):
        x, single = _pts(x, self.dim)
        out = np.atleast_2d(self(x)) - x
        return out[0] if single else out


class LinearMap(PlaneMap):
    def __init__(self, matrix, offset=None):
        self.matrix = np.asarray(matrix, dtype=float).reshape(2, 2)
        self.offset = np.zeros(2) if offset is None else np.asarray(offset, dtype=float)

    def __call__(self, x):
        x, single = _pts(x, 2)
        out = x @ self.matrix.T + self.offset
        return out[0] if single else out

    def jacobian(self, x):
        x, single = _pts(x, 2)
        out = np.broadcast_to(self.matrix, (x.shape[0], 2, 2)).copy()
        return out[0] if single else out


class GradientMap(PlaneMap):
    """x + grad(G)(x) (``displacement`` flavor) or grad(G)(x) (``pure``)."""

    def __init__(self, potential: ScalarField, flavor="displacement"):
        if flavor not in ("displacement", "pure"):
            raise ValueError("flavor must be 'displacement' or 'pure'")
        self.potential = potential
        self.flavor = flavor
        self.dim = potential.dim

    def __call__(self, x):
        x, single = _pts(x, self.dim)
        g = np.atleast_2d(self.potential.gradient(x))
        out = x + g if self.flavor == "displacement" else g
        return out[0] if single else out

    def jacobian(self, x):
        x, single = _pts(x, self.dim)
        H = self.potential.hessian(x).reshape(x.shape[0], self.dim, self.dim)
        if self.flavor == "displacement":
            H = H + np.eye(self.dim)
        return H[0] if single else H


class AnalyticMap(PlaneMap):
    """Components given as scalar fields; Jacobian rows are their gradients."""

    def __init__(self, f1: ScalarField, f2: ScalarField):
        self.f1, self.f2 = f1, f2

    def __call__(self, x):
        x, single = _pts(x, 2)
        out = np.column_stack([np.atleast_1d(self.f1.value(x)), np.atleast_1d(self.f2.value(x))])
        return out[0] if single else out

    def jacobian(self, x):
        x, single = _pts(x, 2)
        out = np.stack([np.atleast_2d(self.f1.gradient(x)), np.atleast_2d(self.f2.gradient(x))], axis=1)
        return out[0] if single else out


class CallableMap(PlaneMap):
    """Arbitrary smooth map given as callables for f and its Jacobian."""

    def __init__(self, fn, jac):
        self.fn = fn
        self.jac = jac

    def __call__(self, x):
        x, single = _pts(x, 2)
        out = np.atleast_2d(np.asarray(self.fn(x), dtype=float))
        return out[0] if single else out

    def jacobian(self, x):
        x, single = _pts(x, 2)
        out = np.asarray(self.jac(x), dtype=float).reshape(x.shape[0], 2, 2)
        return out[0] if single else out


class CompositeMap(PlaneMap):
    def __init__(self, outer: PlaneMap, inner: PlaneMap):
        self.outer, self.inner = outer, inner

    def __call__(self, x):
        return self.outer(self.inner(x))

    def jacobian(self, x):
        x, single = _pts(x, 2)
        mid = np.atleast_2d(self.inner(x))
        Jo = self.outer.jacobian(mid).reshape(x.shape[0], 2, 2)
        Ji = self.inner.jacobian(x).reshape(x.shape[0], 2, 2)
        out = Jo @ Ji
        return out[0] if single else out


def polynomial_displacement(m: PlaneMap):
    """Displacement components as polynomial tables about a common center.

    Returns ``(p1, p2)`` as PolynomialFields, or ``None`` when the map has no
    exact polynomial form.
    """
    if isinstance(m, GradientMap) and isinstance(m.potential, PolynomialField):
        from .fields import poly_dx, poly_dy

        G = m.potential
        if m.flavor == "displacement":
            return (
                PolynomialField(poly_dx(G.coeffs), G.center),
                PolynomialField(poly_dy(G.coeffs), G.center),
            )
        p1 = PolynomialField(poly_dx(G.coeffs), G.center).plus_linear((-1.0, 0.0))
        p2 = PolynomialField(poly_dy(G.coeffs), G.center).plus_linear((0.0, -1.0))
        return (p1, p2)
    if isinstance(m, LinearMap):
        A = m.matrix - np.eye(2)
        t1 = np.zeros((2, 2))
        t1[0, 0] = m.offset[0]
        t1[1, 0] = A[0, 0]
        t1[0, 1] = A[0, 1]
        t2 = np.zeros((2, 2))
        t2[0, 0] = m.offset[1]
        t2[1, 0] = A[1, 0]
        t2[0, 1] = A[1, 1]
        return (PolynomialField(t1), PolynomialField(t2))
    if isinstance(m, AnalyticMap) and isinstance(m.f1, PolynomialField) and isinstance(m.f2, PolynomialField):
        if np.array_equal(m.f1.center, m.f2.center):
            p1 = m.f1.plus_linear((-1.0, 0.0))
            p2 = m.f2.plus_linear((0.0, -1.0))
            return (p1, p2)
    return None


def curl_deficit(m: PlaneMap, region, samples=64):
    """max |d(g1)/dx2 - d(g2)/dx1| of the displacement over sampled points."""
    pts = region.sample_points(grid=samples)
    J = m.jacobian(pts).reshape(len(pts), 2, 2)
    return float(np.abs(J[:, 0, 1] - J[:, 1, 0]).max())


def orientation(m: PlaneMap, region, samples=64, tol=1e-12):
    """'preserving', 'reversing', or 'mixed' from det(J) on a sample grid."""
    pts = region.sample_points(grid=samples)
    J = m.jacobian(pts).reshape(len(pts), 2, 2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    scale = max(1.0, float(np.abs(J).max()) ** 2)
    if np.all(det > tol * scale):
        return "preserving"
    if np.all(det < -tol * scale):
        return "reversing"
    return "mixed"


def invert_map(m: PlaneMap, y, guess=None, tol=1e-11, max_iter=50):
    """Solve m(x) = y by damped Newton. Batched over rows of y."""
    y, single = _pts(np.asarray(y, dtype=float), 2)
    x = y.copy() if guess is None else np.atleast_2d(np.asarray(guess, dtype=float)).copy()
    scale = 1.0 + float(np.abs(y).max())
    res = np.atleast_2d(m(x)) - y
    err = np.linalg.norm(res, axis=1)
    for _ in range(max_iter):
        active = err > tol * scale
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        J = m.jacobian(x[idx]).reshape(len(idx), 2, 2)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(np.abs(det) < 1e-14 * scale):
            raise SingularJacobianError("Jacobian numerically singular during inversion")
        step = _solve_small(J, res[idx])
        lam = np.ones(len(idx))
        cur = err[idx]
        for _ in range(8):
            trial = x[idx] - lam[:, None] * step
            rt = np.atleast_2d(m(trial)) - y[idx]
            et = np.linalg.norm(rt, axis=1)
            bad = et > cur * (1.0 - 0.25 * lam)
            if not bad.any():
                break
            lam[bad] *= 0.5
        x[idx] = x[idx] - lam[:, None] * step
        res[idx] = np.atleast_2d(m(x[idx])) - y[idx]
        err[idx] = np.linalg.norm(res[idx], axis=1)
    if np.any(err > tol * scale):
        raise InversionError(f"map inversion did not converge for {int((err > tol * scale).sum())} points")
    return x[0] if single else x


class ReconstructedPotential(ScalarField):
    """Potential recovered by line integration of a sampled gradient field.

    Values integrate the displacement along axis-aligned paths (both leg
    orders, averaged, which symmetrizes any residual curl error); gradient
    and Hessian delegate to the field itself, so they are exact.
    """

    def __init__(self, m: PlaneMap, base):
        self.m = m
        self.base = np.asarray(base, dtype=float)
        self.dim = 2
        self._cache = {}

    def _leg(self, p, q):
        from scipy.integrate import quad

        p = np.asarray(p)
        q = np.asarray(q)
        d = q - p
        if np.allclose(d, 0):
            return 0.0
        total = 0.0
        for k in range(2):
            if d[k] == 0.0:
                continue

            def integrand(t, k=k):
                pt = p + t * d
                return float(self.m.displacement(pt[None, :])[0, k]) * d[k]

            val, est = quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
            if est > 1e-8 * (1.0 + abs(val)):
                raise NumericalFailure("quadrature did not converge while integrating potential")
            total += val
        return total

    def value(self, x):
        x, single = _pts(x, 2)
        out = np.empty(x.shape[0])
        for i, pt in enumerate(x):
            key = (pt[0], pt[1])
            if key not in self._cache:
                b = self.base
                mid1 = np.array([pt[0], b[1]])
                mid2 = np.array([b[0], pt[1]])
                path1 = self._leg(b, mid1) + self._leg(mid1, pt)
                path2 = self._leg(b, mid2) + self._leg(mid2, pt)
                self._cache[key] = 0.5 * (path1 + path2)
            out[i] = self._cache[key]
        return float(out[0]) if single else out

    def gradient(self, x):
        return self.m.displacement(x)

    def hessian(self, x):
        x, single = _pts(x, 2)
        out = self.m.jacobian(x).reshape(x.shape[0], 2, 2) - np.eye(2)
        return out[0] if single else out


def potential_from_gradient(m: PlaneMap, base, region=None, curl_tol=1e-8):
    """Reconstruct G with grad(G) = displacement of ``m``, G(base) = 0.

    Polynomial displacements integrate exactly (radial path, closed form);
    anything else becomes a :class:`ReconstructedPotential`. When ``region``
    is given the displacement is first checked to be curl-free on it.
    """
    base = np.asarray(base, dtype=float)
    if region is not None:
        deficit = curl_deficit(m, region)
        if deficit > curl_tol:
            raise NotGradientError(f"curl deficit {deficit:.3e} exceeds tolerance {curl_tol:.1e}")
    poly = polynomial_displacement(m)
    if poly is not None:
        p1, p2 = poly
        t1 = poly_trim(p1.recentre(base).coeffs, 0.0)
        t2 = poly_trim(p2.recentre(base).coeffs, 0.0)
        return PolynomialField(_radial_integral(t1, t2), base)
    return ReconstructedPotential(m, base)


def _radial_integral(t1, t2):
    """Closed-form potential of the 1-form t1 du + t2 dv along radial paths.

    For a monomial u^a v^b in component k the radial path from the origin
    contributes u^{a+1} v^b / (a + b + 1) (resp. v exponent bumped).
    """
    n = max(t1.shape[0] + 1, t2.shape[0], t1.shape[1], t2.shape[1] + 1)
    out = np.zeros((n, n))
    for a in range(t1.shape[0]):
        for b in range(t1.shape[1]):
            if t1[a, b] != 0.0:
                out[a + 1, b] += t1[a, b] / (a + b + 1)
    for a in range(t2.shape[0]):
        for b in range(t2.shape[1]):
            if t2[a, b] != 0.0:
                out[a, b + 1] += t2[a, b] / (a + b + 1)
    return poly_trim(out, 0.0)
