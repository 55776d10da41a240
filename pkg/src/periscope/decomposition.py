"""Splitting a plane diffeomorphism into two gradient diffeomorphisms.

For linear maps the split is exact: F = S2 S1 with both factors symmetric
(a linear gradient map is the gradient of a quadratic). For nonlinear maps
the split is local: find u near f(x0) whose pulled-back gradient field
grad(u) o f is itself a gradient (of phi), by forcing the curl of the
pullback to vanish. That curl condition is the second-order PDE

    A u_xx + B u_xy + C u_yy = 0,
    A = df1/dx2 o g,  B = (df2/dx2 - df1/dx1) o g,  C = -df2/dx1 o g,

with g the inverse map. Its discriminant equals (tr J)^2 - 4 det J, which
is positive wherever det J < 0: orientation-reversing maps are always
hyperbolic and decomposable; at degenerate points (the exponential
homogeneous counterexample) the construction is refused.

Here u is built as a truncated Taylor polynomial: second-order data taken
from the two characteristic directions (making Hess u positive definite),
higher orders solved degree by degree from the PDE, which is exact for
polynomial maps and error-controlled for analytic ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import Disc
from .errors import (
    HessianDegenerateError,
    NotHyperbolicError,
    NumericalFailure,
    RadiusUnderflowError,
    SingularJacobianError,
)
from .fields import PolynomialField, poly_dx, poly_dy, poly_mul, poly_trim
from .maps import (
    AnalyticMap,
    CallableMap,
    PlaneMap,
    invert_map,
    polynomial_displacement,
    potential_from_gradient,
)


# -- exact factorization of linear maps ------------------------------------


def factor_linear(F):
    """Symmetric nonsingular S1, S2 with S2 @ S1 = F.

    S2 = F S1^{-1} is symmetric iff S1 F = F^T S1, a single linear
    constraint on the entries of S1; among the 2-parameter family of
    solutions, the determinant (a quadratic form in the parameters) is
    maximized for the best-conditioned factor.
    """
    F = np.asarray(F, dtype=float)
    if F.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    scale = max(1.0, float(np.abs(F).max()))
    det = float(np.linalg.det(F))
    if abs(det) < 1e-14 * scale**2:
        raise SingularJacobianError("cannot factor a singular matrix")
    if np.abs(F - F.T).max() <= 1e-14 * scale:
        S1 = 0.5 * (F + F.T)
        return S1, np.eye(2)

    a, b = F[0, 0], F[0, 1]
    c, d = F[1, 0], F[1, 1]
    # S1 = [[p, q], [q, r]] must satisfy b p + (d - a) q - c r = 0
    w = np.array([b, d - a, -c])
    basis = []
    seed = np.eye(3)[np.argmin(np.abs(w))]
    v1 = np.cross(w, seed)
    v1 /= np.linalg.norm(v1)
    v2 = np.cross(w, v1)
    v2 /= np.linalg.norm(v2)
    for v in (v1, v2):
        basis.append(np.array([[v[0], v[1]], [v[1], v[2]]]))
    V1, V2 = basis

    q11 = np.linalg.det(V1)
    q22 = np.linalg.det(V2)
    q12 = 0.5 * (np.linalg.det(V1 + V2) - q11 - q22)
    Q = np.array([[q11, q12], [q12, q22]])
    vals, vecs = np.linalg.eigh(Q)
    alpha, beta = vecs[:, np.argmax(np.abs(vals))]
    S1 = alpha * V1 + beta * V2
    if abs(np.linalg.det(S1)) < 1e-12:
        raise SingularJacobianError("no well-conditioned symmetric factor exists")

    S2 = F @ np.linalg.inv(S1)
    S2 = 0.5 * (S2 + S2.T)
    # balance the factor norms (the pair is only defined up to t, 1/t)
    t = np.sqrt(np.linalg.norm(S2) / np.linalg.norm(S1))
    return t * S1, S2 / t


# -- hyperbolicity and PDE data --------------------------------------------


def hyperbolicity(f, x0, tol=1e-10):
    """Classify by the sign of (tr J)^2 - 4 det J at x0."""
    J = np.asarray(f.jacobian(np.asarray(x0, dtype=float)), dtype=float).reshape(2, 2)
    disc = float(np.trace(J) ** 2 - 4.0 * np.linalg.det(J))
    scale = max(1.0, float(np.abs(J).max()) ** 2)
    if abs(disc) <= tol * scale:
        return "degenerate"
    return "hyperbolic" if disc > 0 else "elliptic"


@dataclass
class PDECoefficients:
    """Coefficients A, B, C of the curl PDE at image points."""

    f: PlaneMap
    x0: np.ndarray
    xi0: np.ndarray

    def at(self, xi):
        xi = np.asarray(xi, dtype=float)
        x = invert_map(self.f, xi, guess=self.x0)
        J = np.asarray(self.f.jacobian(x), dtype=float).reshape(2, 2)
        return float(J[0, 1]), float(J[1, 1] - J[0, 0]), float(-J[1, 0])

    def A(self, xi):
        return self.at(xi)[0]

    def B(self, xi):
        return self.at(xi)[1]

    def C(self, xi):
        return self.at(xi)[2]

    def discriminant(self, xi):
        A, B, C = self.at(xi)
        return B * B - 4.0 * A * C


def pde_coefficients(f, x0):
    x0 = np.asarray(x0, dtype=float)
    return PDECoefficients(f=f, x0=x0, xi0=np.asarray(f(x0), dtype=float))


def _char_pair(A, B, C, primary, fallback):
    v = np.array(primary, dtype=float)
    if np.linalg.norm(v) < 1e-14 * max(1.0, abs(A), abs(B), abs(C)):
        v = np.array(fallback, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise NotHyperbolicError("characteristic direction collapsed", classification="degenerate")
    return v / n


def characteristic_directions(A, B, C):
    """Unit tangents of the two characteristic families for the operator
    A u_xx + B u_xy + C u_yy (slopes solve A m^2 - B m + C = 0)."""
    disc = B * B - 4.0 * A * C
    if disc <= 0.0:
        raise NotHyperbolicError(
            "operator is not hyperbolic", classification="degenerate" if disc == 0 else "elliptic"
        )
    s = np.sqrt(disc)
    d_plus = _char_pair(A, B, C, (2.0 * A, B + s), (B - s, 2.0 * C))
    d_minus = _char_pair(A, B, C, (2.0 * A, B - s), (B + s, 2.0 * C))
    return d_plus, d_minus


@dataclass
class CharacteristicCurves:
    directions: tuple
    curves: tuple
    center: np.ndarray


def characteristics(coeffs, xi0, length=1.0, steps=256):
    """The two characteristic curves through xi0, integrated by RK4 along
    the continuously-reoriented unit direction fields."""
    xi0 = np.asarray(xi0, dtype=float)
    A, B, C = coeffs.at(xi0)
    dirs = characteristic_directions(A, B, C)

    def field(which):
        def tangent(xi, prev):
            a, b, c = coeffs.at(xi)
            d = characteristic_directions(a, b, c)[which]
            return -d if np.dot(d, prev) < 0 else d

        return tangent

    curves = []
    h = length / steps
    for which in (0, 1):
        tangent = field(which)
        for sign in (1.0, -1.0):
            pts = [xi0.copy()]
            prev = sign * dirs[which]
            xi = xi0.copy()
            for _ in range(steps):
                k1 = tangent(xi, prev)
                k2 = tangent(xi + 0.5 * h * k1, k1)
                k3 = tangent(xi + 0.5 * h * k2, k2)
                k4 = tangent(xi + h * k3, k3)
                step = (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
                xi = xi + h * step
                prev = step / np.linalg.norm(step)
                pts.append(xi.copy())
            if sign > 0:
                fwd = pts
            else:
                bwd = pts
        curves.append(np.vstack([np.asarray(bwd)[::-1], np.asarray(fwd)[1:]]))
    return CharacteristicCurves(directions=dirs, curves=tuple(curves), center=xi0)


# -- truncated power series tools (dense tables, total degree <= K) --------


def _trunc(tab, K):
    tab = np.asarray(tab, dtype=float)
    n = min(tab.shape[0], K + 1)
    out = np.zeros((K + 1, K + 1))
    out[:n, : min(tab.shape[1], K + 1)] = tab[:n, : K + 1]
    for i in range(K + 1):
        out[i, max(0, K + 1 - i) :] = 0.0
    return out


def _series_mul(a, b, K):
    return _trunc(poly_mul(a, b), K)


def _series_compose(P, d1, d2, K):
    """P(d1, d2) for series d1, d2 with zero constant term."""
    P = np.asarray(P, dtype=float)
    out = np.zeros((K + 1, K + 1))
    deg = P.shape[0] - 1
    pow1 = [np.zeros((K + 1, K + 1)) for _ in range(deg + 1)]
    pow2 = [np.zeros((K + 1, K + 1)) for _ in range(deg + 1)]
    pow1[0][0, 0] = 1.0
    pow2[0][0, 0] = 1.0
    for i in range(1, deg + 1):
        pow1[i] = _series_mul(pow1[i - 1], d1, K)
        pow2[i] = _series_mul(pow2[i - 1], d2, K)
    for i in range(P.shape[0]):
        for j in range(P.shape[1]):
            if P[i, j] != 0.0:
                out += P[i, j] * _series_mul(pow1[i], pow2[j], K)
    return out


def _series_dx(t):
    out = np.zeros_like(t)
    if t.shape[0] > 1:
        out[:-1, :] = t[1:, :] * np.arange(1, t.shape[0])[:, None]
    return out


def _series_dy(t):
    out = np.zeros_like(t)
    if t.shape[1] > 1:
        out[:, :-1] = t[:, 1:] * np.arange(1, t.shape[1])[None, :]
    return out


def _map_taylor(f, x0, K, fit_radius=None):
    """Taylor tables of (f1, f2) about x0, exact for polynomial maps."""
    disp = polynomial_displacement(f)
    if disp is not None:
        tabs = []
        for comp, axis in zip(disp, (0, 1)):
            t = _trunc(comp.recentre(x0).coeffs, K)
            t[1 - axis, axis] += 1.0  # displacement -> map: add the identity
            t[0, 0] += x0[axis]
            tabs.append(t)
        return tabs[0], tabs[1], True
    # sampled map: least-squares polynomial fit on a Chebyshev grid
    r = fit_radius if fit_radius is not None else 0.05 * (1.0 + np.linalg.norm(x0))
    nodes = np.cos(np.pi * (2 * np.arange(2 * K + 2) + 1) / (4 * K + 4))
    U, V = np.meshgrid(nodes, nodes, indexing="ij")
    pts = np.column_stack([x0[0] + r * U.ravel(), x0[1] + r * V.ravel()])
    vals = np.atleast_2d(f(pts))
    idx = [(i, j) for i in range(K + 1) for j in range(K + 1 - i)]
    M = np.column_stack([(U.ravel() ** i) * (V.ravel() ** j) for i, j in idx])
    tabs = []
    for comp in range(2):
        sol, *_ = np.linalg.lstsq(M, vals[:, comp], rcond=None)
        t = np.zeros((K + 1, K + 1))
        for (i, j), cval in zip(idx, sol):
            t[i, j] = cval / r ** (i + j)
        tabs.append(t)
    return tabs[0], tabs[1], False


def _inverse_series(t1, t2, x0, K):
    """Series of the inverse map about xi0 = f(x0): returns (g1, g2) with
    zero constant term, in powers of (xi - xi0)."""
    J0 = np.array([[t1[1, 0], t1[0, 1]], [t2[1, 0], t2[0, 1]]])
    det = np.linalg.det(J0)
    if abs(det) < 1e-14 * max(1.0, np.abs(J0).max() ** 2):
        raise SingularJacobianError("map Jacobian is singular at the expansion point")
    Jinv = np.linalg.inv(J0)

    # F(delta) = f(x0 + delta) - f(x0): zero constant term
    F1 = _trunc(t1, K).copy()
    F2 = _trunc(t2, K).copy()
    F1[0, 0] = 0.0
    F2[0, 0] = 0.0

    id1 = np.zeros((K + 1, K + 1))
    id2 = np.zeros((K + 1, K + 1))
    id1[1, 0] = 1.0
    id2[0, 1] = 1.0

    g1 = Jinv[0, 0] * id1 + Jinv[0, 1] * id2
    g2 = Jinv[1, 0] * id1 + Jinv[1, 1] * id2
    for _ in range(int(np.ceil(np.log2(max(K, 2)))) + 2):
        r1 = id1 - _series_compose(F1, g1, g2, K)
        r2 = id2 - _series_compose(F2, g1, g2, K)
        g1 = g1 + Jinv[0, 0] * r1 + Jinv[0, 1] * r2
        g2 = g2 + Jinv[1, 0] * r1 + Jinv[1, 1] * r2
    return g1, g2


# -- the local construction -------------------------------------------------


@dataclass
class DecompositionResult:
    phi: object
    u: PolynomialField
    center: np.ndarray
    radius: float
    residual: float
    hessian_condition: float
    degree: int

    def factors(self):
        """(grad phi, grad u) as plane maps."""
        from .maps import GradientMap

        return GradientMap(self.phi, flavor="pure"), GradientMap(self.u, flavor="pure")


def _solve_u(A_tab, B_tab, C_tab, w_plus, w_minus, degree, K):
    """Taylor table of u about xi0: zero first-order data, prescribed
    second-order data, higher orders from the PDE degree by degree."""
    u = np.zeros((degree + 1, degree + 1))
    H = np.outer(w_plus, w_plus) + np.outer(w_minus, w_minus)
    u[2, 0] = 0.5 * H[0, 0]
    u[1, 1] = H[0, 1]
    u[0, 2] = 0.5 * H[1, 1]

    A0, B0, C0 = A_tab[0, 0], B_tab[0, 0], C_tab[0, 0]
    op_scale = max(1.0, abs(A0), abs(B0), abs(C0))
    for d in range(3, degree + 1):
        m = d - 2
        res = (
            _series_mul(A_tab, _series_dx(_series_dx(_trunc(u, K))), K)
            + _series_mul(B_tab, _series_dy(_series_dx(_trunc(u, K))), K)
            + _series_mul(C_tab, _series_dy(_series_dy(_trunc(u, K))), K)
        )
        rhs = np.array([res[k, m - k] for k in range(m + 1)])
        M = np.zeros((m + 1, d + 1))
        for k in range(m + 1):
            M[k, k + 2] += A0 * (k + 2) * (k + 1)
            M[k, k + 1] += B0 * (k + 1) * (m - k + 1)
            M[k, k] += C0 * (m - k + 2) * (m - k + 1)
        sol, _, rank, _ = np.linalg.lstsq(M, -rhs, rcond=None)
        if rank < m + 1:
            raise HessianDegenerateError(
                "PDE order system lost rank; operator is effectively degenerate"
            )
        check = M @ sol + rhs
        if np.abs(check).max() > 1e-9 * op_scale * max(1.0, np.abs(rhs).max()):
            raise NumericalFailure("degree-by-degree PDE solve did not close")
        for k in range(d + 1):
            u[k, d - k] = sol[k]
    return u, H


def decompose_local(f, x0, tol=1e-6, degree=8, radius_hint=None, max_halvings=20):
    """Find (phi, u) with grad(u)(f(x)) = grad(phi)(x) near x0.

    Returns the largest validated radius from the starting guess downward;
    validation samples the exact curl of the pulled-back gradient, the
    nondegeneracy of both Hessians, and the diffeomorphism property of f.
    """
    x0 = np.asarray(x0, dtype=float)
    cls = hyperbolicity(f, x0)
    if cls != "hyperbolic":
        raise NotHyperbolicError(
            f"map is {cls} at {x0}; the curl PDE admits no nondegenerate local solution",
            classification=cls,
        )
    xi0 = np.asarray(f(x0), dtype=float)
    K = max(degree - 2, 1) + 2

    t1, t2, exact = _map_taylor(f, x0, max(degree, 3), fit_radius=radius_hint)
    g1, g2 = _inverse_series(t1, t2, x0, K)

    # A, B, C as series about xi0 (compose the partials with the inverse)
    f1x2 = _series_dy(_trunc(t1, K))
    f1x1 = _series_dx(_trunc(t1, K))
    f2x2 = _series_dy(_trunc(t2, K))
    f2x1 = _series_dx(_trunc(t2, K))
    A_tab = _series_compose(f1x2, g1, g2, K)
    B_tab = _series_compose(f2x2 - f1x1, g1, g2, K)
    C_tab = _series_compose(-f2x1, g1, g2, K)

    A0, B0, C0 = A_tab[0, 0], B_tab[0, 0], C_tab[0, 0]
    disc = B0 * B0 - 4.0 * A0 * C0
    w_plus, w_minus = _pde_null_directions(A0, B0, C0, disc)

    u_tab, H0 = _solve_u(A_tab, B_tab, C_tab, w_plus, w_minus, degree, K)
    u = PolynomialField(poly_trim(u_tab), center=xi0)
    hess_cond = float(np.linalg.cond(H0))

    if radius_hint is not None:
        r = float(radius_hint)
    else:
        third = _third_derivative_estimate(t1, t2)
        r = 0.1 / (1.0 + third)
    scale = 1.0 + float(np.linalg.norm(x0))

    last_residual = np.inf
    for _ in range(max_halvings + 1):
        region = Disc(tuple(x0), r)
        ok, residual = _validate_radius(f, u, region, tol)
        if ok:
            phi = _build_phi(f, u, x0, exact)
            return DecompositionResult(
                phi=phi,
                u=u,
                center=x0,
                radius=r,
                residual=residual,
                hessian_condition=hess_cond,
                degree=degree,
            )
        last_residual = residual
        r *= 0.5
        if r < 1e-6 * scale:
            raise RadiusUnderflowError(
                f"no radius above {1e-6 * scale:.1e} met the curl tolerance "
                f"(last residual {last_residual:.3e})"
            )
    raise RadiusUnderflowError(
        f"radius halving budget exhausted (last residual {last_residual:.3e})"
    )


def _pde_null_directions(A, B, C, disc):
    """Two independent directions w with A w1^2 + B w1 w2 + C w2^2 = 0."""
    if disc <= 0.0:
        raise NotHyperbolicError(
            "operator is not hyperbolic at the expansion point",
            classification="degenerate" if disc == 0 else "elliptic",
        )
    s = np.sqrt(disc)
    w_plus = _char_pair(A, B, C, (-B + s, 2.0 * A), (2.0 * C, -B - s))
    w_minus = _char_pair(A, B, C, (-B - s, 2.0 * A), (2.0 * C, -B + s))
    return w_plus, w_minus


def _third_derivative_estimate(t1, t2):
    out = 0.0
    for t in (t1, t2):
        n = t.shape[0]
        for i in range(n):
            for j in range(n - i):
                if i + j == 3:
                    out += abs(t[i, j]) * 6.0
    return out


def _validate_radius(f, u, region, tol):
    pts = np.atleast_2d(region.sample_points(grid=17, boundary=48))
    J = np.asarray(f.jacobian(pts), dtype=float).reshape(len(pts), 2, 2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.sign(det).min() != np.sign(det).max() or np.abs(det).min() < 1e-12:
        return False, np.inf
    img = np.atleast_2d(f(pts))
    Hu = u.hessian(img).reshape(len(pts), 2, 2)
    det_h = Hu[:, 0, 0] * Hu[:, 1, 1] - Hu[:, 0, 1] * Hu[:, 1, 0]
    h_scale = np.abs(Hu).reshape(len(pts), -1).max(axis=1)
    if (np.abs(det_h) < 1e-8 * np.maximum(1.0, h_scale) ** 2).any():
        return False, np.inf
    M = np.einsum("nij,njk->nik", Hu, J)
    curl = np.abs(M[:, 0, 1] - M[:, 1, 0])
    residual = float(curl.max())
    bound = tol * max(1.0, float(h_scale.max()))
    return residual <= bound, residual


def _build_phi(f, u, x0, exact_poly):
    """phi with grad(phi) = grad(u) o f, exact when f and u are polynomial.

    The reconstruction helper integrates a map's displacement, so the field
    to integrate is packaged as the map x -> x + grad(u)(f(x)).
    """
    disp = polynomial_displacement(f) if exact_poly else None
    if disp is not None:
        p1, p2 = disp
        f1 = p1.plus_linear((1.0, 0.0))
        f2 = p2.plus_linear((0.0, 1.0))
        du1 = PolynomialField(poly_dx(u.coeffs), center=u.center)
        du2 = PolynomialField(poly_dy(u.coeffs), center=u.center)
        comp1 = _poly_compose_field(du1, f1, f2)
        comp2 = _poly_compose_field(du2, f1, f2)
        carrier = AnalyticMap(comp1.plus_linear((1.0, 0.0)), comp2.plus_linear((0.0, 1.0)))
        return potential_from_gradient(carrier, base=x0, region=None)

    def shifted(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x + np.atleast_2d(u.gradient(np.atleast_2d(f(x))))

    def shifted_jac(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        Hu = u.hessian(np.atleast_2d(f(x))).reshape(len(x), 2, 2)
        J = np.asarray(f.jacobian(x), dtype=float).reshape(len(x), 2, 2)
        return np.einsum("nij,njk->nik", Hu, J) + np.eye(2)

    return potential_from_gradient(CallableMap(shifted, shifted_jac), base=x0, region=None)


def _poly_compose_field(P, f1, f2):
    """P(f1(x), f2(x)) as a PolynomialField about the common center of f."""
    c = P.center
    base = f1.center
    t1 = f1.recentre(base).coeffs.copy()
    t2 = f2.recentre(base).coeffs.copy()
    t1[0, 0] -= c[0]
    t2[0, 0] -= c[1]
    deg_p = P.coeffs.shape[0] + P.coeffs.shape[1] - 2
    deg_f = max(t1.shape[0] + t1.shape[1], t2.shape[0] + t2.shape[1]) - 2
    K = max(deg_p * max(deg_f, 1), 1)
    out = np.zeros((K + 1, K + 1))
    pow1 = [np.zeros((K + 1, K + 1)) for _ in range(P.coeffs.shape[0])]
    pow2 = [np.zeros((K + 1, K + 1)) for _ in range(P.coeffs.shape[1])]
    pow1[0][0, 0] = 1.0
    pow2[0][0, 0] = 1.0
    for i in range(1, len(pow1)):
        pow1[i] = _trunc(poly_mul(pow1[i - 1], _pad(t1, K)), K)
    for j in range(1, len(pow2)):
        pow2[j] = _trunc(poly_mul(pow2[j - 1], _pad(t2, K)), K)
    for i in range(P.coeffs.shape[0]):
        for j in range(P.coeffs.shape[1]):
            if P.coeffs[i, j] != 0.0:
                out += P.coeffs[i, j] * _trunc(poly_mul(pow1[i], pow2[j]), K)
    return PolynomialField(poly_trim(out), center=base)


def _pad(tab, K):
    out = np.zeros((K + 1, K + 1))
    out[: tab.shape[0], : tab.shape[1]] = tab
    return out


__all__ = [
    "DecompositionResult",
    "PDECoefficients",
    "CharacteristicCurves",
    "factor_linear",
    "hyperbolicity",
    "pde_coefficients",
    "characteristics",
    "characteristic_directions",
    "decompose_local",
]
