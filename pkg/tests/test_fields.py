"""Scalar-field arithmetic: exact polynomial identities and frozen samples."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periscope.fields import (
    AffineField,
    GridField,
    PolynomialField,
    SecondMirrorHeight,
    SumField,
    constant_field,
    half_norm_sq,
    linear_field,
    poly_mul,
    poly_trim,
)


def _fd_gradient(f, x, eps=1e-6):
    out = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = eps
        out[k] = (f.value(x + e) - f.value(x - e)) / (2 * eps)
    return out


def test_polynomial_value_frozen():
    # p = 2 + x - 3 y^2 + x^2 y at (1.5, -2): 2 + 1.5 - 12 - 4.5 = -13
    tab = np.zeros((3, 3))
    tab[0, 0] = 2.0
    tab[1, 0] = 1.0
    tab[0, 2] = -3.0
    tab[2, 1] = 1.0
    p = PolynomialField(tab)
    assert p.value(np.array([1.5, -2.0])) == pytest.approx(-13.0, abs=0)
    g = p.gradient(np.array([1.5, -2.0]))
    # grad = (1 + 2xy, -6y + x^2) = (-5, 14.25)
    assert np.allclose(g, [-5.0, 14.25], atol=0)
    H = p.hessian(np.array([1.5, -2.0]))
    # H = [[2y, 2x], [2x, -6]]
    assert np.allclose(H, [[-4.0, 3.0], [3.0, -6.0]], atol=0)


def test_gradient_matches_finite_differences(rng):
    tab = rng.uniform(-1, 1, size=(4, 4))
    p = PolynomialField(tab, center=(0.3, -0.7))
    for _ in range(5):
        x = rng.uniform(-1, 1, size=2)
        assert np.allclose(p.gradient(x), _fd_gradient(p, x), atol=1e-7)


def test_recentre_preserves_values(rng):
    # regression: recentring must shift the expansion point, not the graph
    tab = rng.uniform(-1, 1, size=(5, 5))
    p = PolynomialField(tab, center=(0.0, 0.0))
    q = p.recentre((1.7, -0.4))
    assert np.allclose(np.asarray(q.center), [1.7, -0.4])
    pts = rng.uniform(-2, 2, size=(40, 2))
    assert np.allclose(q.value(pts), p.value(pts), atol=1e-10)
    assert np.allclose(q.gradient(pts), p.gradient(pts), atol=1e-9)


def test_recentre_linear_exact():
    p = PolynomialField(np.array([[0.0, 0.0], [1.0, 0.0]]))  # p = x1
    q = p.recentre((1.0, 0.0))
    assert q.value(np.array([2.0, 0.0])) == pytest.approx(2.0, abs=0)
    assert q.coeffs[0, 0] == pytest.approx(1.0, abs=0)


def test_translate_moves_graph():
    p = half_norm_sq()  # |x|^2 / 2 about the origin
    q = p.translate((2.0, 0.0))  # bowl centered at (2, 0)
    assert q.value(np.array([2.0, 0.0])) == pytest.approx(0.0, abs=0)
    assert np.allclose(q.gradient(np.array([3.0, 1.0])), [1.0, 1.0], atol=0)


def test_half_norm_sq_center_is_reexpansion():
    # same global field |x|^2/2 regardless of expansion center
    a = half_norm_sq()
    b = half_norm_sq(center=(3.0, -1.0))
    pts = np.array([[0.0, 0.0], [3.0, -1.0], [1.0, 2.0]])
    assert np.allclose(a.value(pts), b.value(pts), atol=1e-12)
    assert np.allclose(a.gradient(pts), b.gradient(pts), atol=1e-12)


def test_add_different_centers(rng):
    p = PolynomialField(rng.uniform(-1, 1, (3, 3)), center=(1.0, 0.0))
    q = PolynomialField(rng.uniform(-1, 1, (3, 3)), center=(0.0, -1.0))
    s = p + q
    pts = rng.uniform(-2, 2, (20, 2))
    assert np.allclose(s.value(pts), p.value(pts) + q.value(pts), atol=1e-12)


def test_plus_linear_is_global():
    p = PolynomialField(np.zeros((2, 2)), center=(5.0, 5.0))
    q = p.plus_linear((2.0, -1.0))  # q(x) = 2 x1 - x2 everywhere
    assert q.value(np.array([0.0, 0.0])) == pytest.approx(0.0, abs=1e-12)
    assert q.value(np.array([1.0, 1.0])) == pytest.approx(1.0, abs=1e-12)


def test_scale_and_plus_const():
    p = linear_field([1.0, 1.0])
    q = p.scale(3.0).plus_const(-2.0)
    assert q.value(np.array([1.0, 2.0])) == pytest.approx(7.0, abs=0)


def test_affine_field_semantics():
    base = half_norm_sq()
    f = AffineField(base, scale=2.0, offset=1.0, shift=(1.0, 0.0), linear=(0.5, 0.0))
    x = np.array([3.0, 4.0])
    want = 2.0 * base.value(x - [1.0, 0.0]) + 1.0 + 0.5 * 3.0
    assert f.value(x) == pytest.approx(want, abs=1e-12)
    assert np.allclose(f.gradient(x), 2.0 * (x - [1.0, 0.0]) + [0.5, 0.0], atol=1e-12)
    assert np.allclose(f.hessian(x), 2.0 * np.eye(2), atol=1e-12)


def test_sum_field():
    s = SumField([linear_field([1.0, 0.0]), linear_field([0.0, 2.0]), constant_field(1.0)])
    assert s.value(np.array([1.0, 1.0])) == pytest.approx(4.0, abs=0)
    assert np.allclose(s.gradient(np.array([0.0, 0.0])), [1.0, 2.0], atol=0)


def test_second_mirror_height_dilation():
    # G = |x|^2/2 gives the map x -> 2x. At y = 2x the image mirror carries
    # phi1(x) + (|g|^2 - c^2)/(2c) with phi1 = G/c + h and g = x.
    c, h = 6.0, 0.25
    smh = SecondMirrorHeight(half_norm_sq(), c, h)
    y = np.array([[2.0, 4.0], [-1.0, 0.5]])
    x = y / 2.0
    r2 = np.sum(x * x, axis=1)
    want = (0.5 * r2) / c + h + (r2 - c * c) / (2.0 * c)
    assert np.allclose(smh.value(y), want, atol=1e-10)
    # gradient of phi2 at y equals grad G(x)/c = x/c
    assert np.allclose(smh.gradient(y), x / c, atol=1e-10)


def test_grid_field_interpolates_smooth_function():
    f = GridField.sample(lambda p: np.sin(p[:, 0]) * np.cos(p[:, 1]),
                         ((-1.0, -1.0), (1.0, 1.0)), nx=65, ny=65)
    pts = np.array([[0.1, 0.2], [-0.5, 0.7], [0.33, -0.41]])
    want = np.sin(pts[:, 0]) * np.cos(pts[:, 1])
    assert np.allclose(f.value(pts), want, atol=1e-8)
    want_gx = np.cos(pts[:, 0]) * np.cos(pts[:, 1])
    assert np.allclose(f.gradient(pts)[:, 0], want_gx, atol=1e-5)


def test_poly_mul_frozen():
    # (1 + x)(1 + y) = 1 + x + y + xy
    a = np.array([[1.0], [1.0]])
    b = np.array([[1.0, 1.0]])
    out = poly_mul(a, b)
    assert np.allclose(out, [[1.0, 1.0], [1.0, 1.0]], atol=0)


def test_poly_trim():
    tab = np.zeros((4, 4))
    tab[1, 1] = 2.0
    out = poly_trim(tab)
    assert out.shape == (2, 2)
    assert out[1, 1] == 2.0


coef = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(coef, min_size=9, max_size=9), st.tuples(coef, coef))
def test_recentre_round_trip(flat, center):
    p = PolynomialField(np.array(flat).reshape(3, 3))
    q = p.recentre(center).recentre((0.0, 0.0))
    assert np.allclose(q.coeffs, p.coeffs, atol=1e-8)
