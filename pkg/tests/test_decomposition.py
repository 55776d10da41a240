"""Splitting plane maps into gradient factors: exact linear factorization,
hyperbolicity classification, characteristic geometry, and the local
polynomial construction."""

from __future__ import annotations

import numpy as np
import pytest

from periscope.decomposition import (
    characteristic_directions,
    characteristics,
    decompose_local,
    factor_linear,
    hyperbolicity,
    pde_coefficients,
)
from periscope.errors import (
    NotHyperbolicError,
    RadiusUnderflowError,
    SingularJacobianError,
)
from periscope.fields import PolynomialField
from periscope.maps import AnalyticMap, CallableMap, GradientMap, LinearMap


def exp_scale_map():
    """e^(x2) * (x1, x2): Jacobian is the identity at the origin, so the
    hyperbolicity discriminant vanishes there."""

    def fn(x):
        return np.exp(x[:, 1])[:, None] * x

    def jac(x):
        e = np.exp(x[:, 1])
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 0] = e
        J[:, 0, 1] = e * x[:, 0]
        J[:, 1, 1] = e * (1.0 + x[:, 1])
        return J

    return CallableMap(fn, jac)


def random_matrix(rng, det_low=-10.0, det_high=10.0, min_abs_det=1e-3):
    while True:
        F = rng.uniform(-3.0, 3.0, size=(2, 2))
        det = np.linalg.det(F)
        if det_low <= det <= det_high and abs(det) >= min_abs_det:
            return F


# -- factor_linear -----------------------------------------------------------


def test_factor_symmetric_inputs_pass_through():
    for F in (np.diag([1.0, -1.0]), np.array([[0.0, 1.0], [1.0, 0.0]])):
        S1, S2 = factor_linear(F)
        assert np.array_equal(S1, F)
        assert np.array_equal(S2, np.eye(2))


def test_factor_shear():
    F = np.array([[1.0, 1.0], [0.0, 1.0]])
    S1, S2 = factor_linear(F)
    assert np.abs(S1 - S1.T).max() == 0.0
    assert np.abs(S2 - S2.T).max() == 0.0
    assert abs(np.linalg.det(S1)) > 1e-6
    assert abs(np.linalg.det(S2)) > 1e-6
    assert np.abs(S2 @ S1 - F).max() <= 1e-12


def test_factor_random_batch(rng):
    # both orientations; reassembly and exact symmetry on every draw
    for _ in range(1000):
        F = random_matrix(rng)
        S1, S2 = factor_linear(F)
        assert np.abs(S1 - S1.T).max() == 0.0
        assert np.abs(S2 - S2.T).max() == 0.0
        scale = max(1.0, np.abs(F).max())
        assert np.abs(S2 @ S1 - F).max() <= 1e-12 * scale
        assert abs(np.linalg.det(S1)) > 1e-12
        assert abs(np.linalg.det(S2)) > 1e-12


def test_factor_rejects_singular():
    with pytest.raises(SingularJacobianError):
        factor_linear(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_factor_rejects_bad_shape():
    with pytest.raises(ValueError):
        factor_linear(np.eye(3))


# -- hyperbolicity -----------------------------------------------------------


def test_hyperbolicity_reflection_is_hyperbolic():
    sigma = LinearMap([[-1.0, 0.0], [0.0, 1.0]])
    assert hyperbolicity(sigma, (0.3, -0.7)) == "hyperbolic"


def test_hyperbolicity_exp_scale_degenerate_at_origin():
    f = exp_scale_map()
    assert hyperbolicity(f, (0.0, 0.0)) == "degenerate"
    J = f.jacobian(np.zeros((1, 2)))[0]
    disc = np.trace(J) ** 2 - 4.0 * np.linalg.det(J)
    assert abs(disc) <= 1e-10


def test_hyperbolicity_rotation_is_elliptic():
    th = np.pi / 2
    rot = LinearMap([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert hyperbolicity(rot, (0.0, 0.0)) == "elliptic"


def test_orientation_reversing_always_hyperbolic(rng):
    for _ in range(1000):
        F = random_matrix(rng, det_high=-1e-3)
        assert hyperbolicity(LinearMap(F), rng.uniform(-1, 1, 2)) == "hyperbolic"


# -- characteristic directions and curves -------------------------------------


def test_characteristic_directions_wave_operator():
    d_plus, d_minus = characteristic_directions(1.0, 0.0, -1.0)
    # slopes solve m^2 - 1 = 0
    for d in (d_plus, d_minus):
        assert abs(abs(d[1] / d[0]) - 1.0) <= 1e-12
    cross = d_plus[0] * d_minus[1] - d_plus[1] * d_minus[0]
    assert abs(cross) > 0.5


def test_characteristic_directions_axis_aligned():
    # the reflection map's operator: A=0, B=2, C=0
    d_plus, d_minus = characteristic_directions(0.0, 2.0, 0.0)
    dirs = sorted(np.abs([d_plus, d_minus]).tolist())
    assert np.allclose(dirs[0], [0.0, 1.0], atol=1e-14)
    assert np.allclose(dirs[1], [1.0, 0.0], atol=1e-14)


def test_characteristic_directions_reject_elliptic_and_degenerate():
    with pytest.raises(NotHyperbolicError) as ei:
        characteristic_directions(1.0, 0.0, 1.0)
    assert ei.value.classification == "elliptic"
    with pytest.raises(NotHyperbolicError) as ei:
        characteristic_directions(1.0, 2.0, 1.0)
    assert ei.value.classification == "degenerate"


def test_pde_coefficients_of_reflection():
    sigma = LinearMap([[-1.0, 0.0], [0.0, 1.0]])
    coeffs = pde_coefficients(sigma, (0.5, 0.5))
    A, B, C = coeffs.at((-1.2, 0.8))
    assert (A, C) == (0.0, 0.0)
    assert B == 2.0
    assert coeffs.discriminant((0.3, 0.1)) == 4.0


def test_characteristics_of_reflection_run_along_axes():
    sigma = LinearMap([[-1.0, 0.0], [0.0, 1.0]])
    coeffs = pde_coefficients(sigma, (0.5, 0.5))
    xi0 = np.array([-0.5, 0.5])
    res = characteristics(coeffs, xi0, length=0.7, steps=64)
    assert np.allclose(res.center, xi0, atol=0)
    spans = []
    for curve in res.curves:
        assert np.abs(curve - xi0).min() <= 1e-12  # passes through the center
        # constant-coefficient operator: each curve is a straight axis line
        dev = np.abs(curve - xi0)
        spans.append(np.argmax(dev.max(axis=0)))
        assert dev.max(axis=0).min() <= 1e-9
        assert abs(dev.max() - 0.7) <= 1e-9
    assert sorted(spans) == [0, 1]  # one horizontal, one vertical


def test_characteristics_curved_map_tangency(rng):
    # nonlinear orientation-reversing map: curve tangents at the center must
    # match the closed-form directions
    G = PolynomialField([[0.0, 0.0, 0.1], [0.0, 0.2, 0.0], [-0.15, 0.0, 0.0]])
    f = CallableMap(
        lambda x: np.column_stack([-x[:, 0] + G.value(x), x[:, 1] + 0.1 * x[:, 0] ** 2]),
        None,
    )

    def jac(x):
        g = np.atleast_2d(G.gradient(x))
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 0] = -1.0 + g[:, 0]
        J[:, 0, 1] = g[:, 1]
        J[:, 1, 0] = 0.2 * x[:, 0]
        J[:, 1, 1] = 1.0
        return J

    f.jac = jac
    x0 = np.array([0.2, -0.1])
    coeffs = pde_coefficients(f, x0)
    xi0 = np.asarray(f(x0))
    res = characteristics(coeffs, xi0, length=0.2, steps=128)
    for d, curve in zip(res.directions, res.curves):
        mid = len(curve) // 2
        t = curve[mid + 1] - curve[mid - 1]
        t /= np.linalg.norm(t)
        assert min(np.linalg.norm(t - d), np.linalg.norm(t + d)) <= 1e-3


# -- decompose_local -----------------------------------------------------------


def compose_factors(result, f, pts):
    """max |grad(u)(f(x)) - grad(phi)(x)| over sample points."""
    gphi, gu = result.factors()
    return np.abs(gu(np.atleast_2d(f(pts))) - gphi(pts)).max()


def neighborhood(result, n=500, seed=7):
    rng = np.random.default_rng(seed)
    r = result.radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    th = rng.uniform(0.0, 2 * np.pi, n)
    return result.center + np.column_stack([r * np.cos(th), r * np.sin(th)])


def test_decompose_symmetric_linear_map_gives_identity_u():
    f = LinearMap(np.diag([1.0, -1.0]))
    res = decompose_local(f, (0.0, 0.0), tol=1e-9)
    pts = neighborhood(res)
    # free Hessian data reduces to the identity: grad u = xi - xi0
    gu = res.u.gradient(pts)
    assert np.abs(gu - pts).max() <= 1e-12
    gphi = np.atleast_2d(GradientMap(res.phi, flavor="pure")(pts))
    assert np.abs(gphi - f(pts)).max() <= 1e-9
    assert res.residual <= 1e-9
    assert res.radius > 0.0


def test_decompose_linear_matches_factorization_contract():
    F = np.array([[0.0, 1.0], [2.0, 0.0]])
    f = LinearMap(F)
    x0 = np.array([0.4, -0.3])
    res = decompose_local(f, x0, tol=1e-9)
    pts = neighborhood(res)
    assert compose_factors(res, f, pts) <= 1e-8

    # oracle factors and the construction's factors both split F into
    # symmetric nonsingular pieces reassembling to F
    S1, S2 = factor_linear(F)
    assert np.abs(S2 @ S1 - F).max() <= 1e-12
    Hphi = res.phi.hessian(np.atleast_2d(x0)).reshape(2, 2)
    Hu = res.u.hessian(np.atleast_2d(f(x0))).reshape(2, 2)
    assert np.abs(Hphi - Hphi.T).max() <= 1e-10
    assert np.abs(Hu - Hu.T).max() <= 1e-10
    assert np.abs(np.linalg.inv(Hu) @ Hphi - F).max() <= 1e-8


def test_decompose_random_linear_batch(rng):
    for _ in range(10):
        F = random_matrix(rng, det_high=-1e-3)
        f = LinearMap(F)
        res = decompose_local(f, (0.0, 0.0), tol=1e-8)
        pts = neighborhood(res)
        assert compose_factors(res, f, pts) <= 1e-8
        Hphi = res.phi.hessian(np.zeros((1, 2))).reshape(2, 2)
        Hu = res.u.hessian(np.atleast_2d(f(np.zeros(2)))).reshape(2, 2)
        scale = max(1.0, np.abs(F).max())
        assert np.abs(np.linalg.inv(Hu) @ Hphi - F).max() <= 1e-8 * scale


def test_decompose_polynomial_perturbation(rng):
    # orientation-reversing linear part plus a cubic perturbation
    F = np.array([[0.2, 1.1], [1.3, -0.4]])
    assert np.linalg.det(F) < 0
    p1 = PolynomialField([[0.0, 0.0, 0.03], [0.0, 0.05, 0.0], [0.0, 0.0, 0.0]])
    p2 = PolynomialField([[0.0, 0.0, 0.0], [0.0, -0.04, 0.0], [0.02, 0.0, 0.0]])
    f1 = p1.plus_linear((F[0, 0], F[0, 1]))
    f2 = p2.plus_linear((F[1, 0], F[1, 1]))
    f = AnalyticMap(f1, f2)
    res = decompose_local(f, (0.1, 0.2), tol=1e-6)
    assert res.radius > 0.0
    assert res.residual <= 1e-6 * max(
        1.0, np.abs(res.u.hessian(np.atleast_2d(f((0.1, 0.2))))).max()
    )
    pts = neighborhood(res)
    assert compose_factors(res, f, pts) <= 1e-5  # 10x the residual tolerance
    assert res.hessian_condition < 1e8


def test_decompose_pde_residual_on_final_neighborhood():
    F = np.array([[0.0, 1.0], [2.0, 0.0]])
    p1 = PolynomialField([[0.0, 0.0, 0.0], [0.0, 0.08, 0.0], [0.0, 0.0, 0.0]])
    f = AnalyticMap(
        p1.plus_linear((F[0, 0], F[0, 1])),
        PolynomialField(np.zeros((1, 1))).plus_linear((F[1, 0], F[1, 1])),
    )
    x0 = np.zeros(2)
    res = decompose_local(f, x0, tol=1e-7)
    coeffs = pde_coefficients(f, x0)
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = x0 + res.radius * rng.uniform(-0.7, 0.7, 2)
        xi = np.asarray(f(x))
        A, B, C = coeffs.at(xi)
        H = res.u.hessian(np.atleast_2d(xi)).reshape(2, 2)
        pde = A * H[0, 0] + B * H[0, 1] + C * H[1, 1]
        assert abs(pde) <= 1e-7 * max(1.0, np.abs(H).max())


def test_decompose_rejects_exp_scale_at_origin():
    with pytest.raises(NotHyperbolicError) as ei:
        decompose_local(exp_scale_map(), (0.0, 0.0))
    assert ei.value.classification == "degenerate"


def test_decompose_rejects_elliptic():
    rot = LinearMap([[0.8, -0.6], [0.6, 0.8]])
    with pytest.raises(NotHyperbolicError) as ei:
        decompose_local(rot, (0.0, 0.0))
    assert ei.value.classification == "elliptic"


def test_decompose_radius_underflow_when_tolerance_unreachable():
    # hyperbolic at x0 but the curl residual cannot reach an absurd tolerance
    # once the map is non-polynomial (finite-difference Taylor floor)
    def fn(x):
        return np.column_stack(
            [x[:, 1] + 0.2 * np.sin(x[:, 0]), 2.0 * x[:, 0] + 0.1 * np.cos(x[:, 1])]
        )

    def jac(x):
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 0] = 0.2 * np.cos(x[:, 0])
        J[:, 0, 1] = 1.0
        J[:, 1, 0] = 2.0
        J[:, 1, 1] = -0.1 * np.sin(x[:, 1])
        return J

    f = CallableMap(fn, jac)
    with pytest.raises(RadiusUnderflowError):
        decompose_local(f, (0.0, 0.0), tol=1e-15, degree=4)


def test_decompose_respects_radius_hint():
    f = LinearMap([[0.0, 1.0], [2.0, 0.0]])
    res = decompose_local(f, (0.0, 0.0), tol=1e-9, radius_hint=0.05)
    assert res.radius == pytest.approx(0.05)


def test_decompose_result_serializes_polynomial_fields():
    from periscope.scene import _dec_field, _enc_field, _Extras

    f = LinearMap([[0.0, 1.0], [2.0, 0.0]])
    res = decompose_local(f, (0.0, 0.0), tol=1e-9)
    pts = np.random.default_rng(1).uniform(-0.05, 0.05, (20, 2))
    for field in (res.phi, res.u):
        assert isinstance(field, PolynomialField)
        back = _dec_field(_enc_field(field, ""), "", _Extras(strict=True))
        assert np.abs(back.value(pts) - field.value(pts)).max() <= 1e-12
