"""Reflection-law primitives: closed forms against the generic formula."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periscope.errors import DegenerateNormalError
from periscope.geometry import (
    reflect,
    reflect_vertical,
    segment_slope,
    upward_normal,
    unit,
)

finite = st.floats(-10.0, 10.0, allow_nan=False)


def test_reflect_plane_mirror():
    # normal along z: z-component flips, tangential part unchanged
    v = np.array([0.3, -0.2, 1.0])
    out = reflect(v, np.array([0.0, 0.0, 1.0]))
    assert np.allclose(out, [0.3, -0.2, -1.0], atol=0, rtol=0)


def test_reflect_is_scale_invariant_in_normal():
    v = np.array([1.0, 2.0, -0.5])
    n = np.array([0.2, -0.7, 1.1])
    assert np.allclose(reflect(v, n), reflect(v, 17.0 * n), atol=1e-15)
    assert np.allclose(reflect(v, n), reflect(v, -n), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.tuples(finite, finite, finite), st.tuples(finite, finite, finite))
def test_reflect_involution_and_norm(v, n):
    v = np.asarray(v)
    n = np.asarray(n)
    if np.linalg.norm(n) < 1e-3:
        return
    once = reflect(v, n)
    assert np.linalg.norm(once) == pytest.approx(np.linalg.norm(v), abs=1e-9)
    assert np.allclose(reflect(once, n), v, atol=1e-9)


def test_reflect_vertical_matches_generic():
    for g in ([0.0, 0.0], [1.0, 0.0], [0.3, -0.8], [2.0, 2.0]):
        g = np.asarray(g)
        fast = reflect_vertical(g)
        slow = reflect(np.array([0.0, 0.0, 1.0]), upward_normal(g))
        assert np.allclose(fast, slow, atol=1e-15)
        assert np.linalg.norm(fast) == pytest.approx(1.0, abs=1e-15)


def test_reflect_vertical_flat_mirror_reverses():
    assert np.allclose(reflect_vertical([0.0, 0.0]), [0.0, 0.0, -1.0])


def test_reflect_vertical_unit_slope_goes_horizontal():
    # |g| = 1 sends the vertical ray exactly horizontal
    out = reflect_vertical([1.0, 0.0])
    assert out[2] == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(out, [1.0, 0.0, 0.0], atol=1e-15)


def test_upward_normal_shape():
    n = upward_normal([0.5, -0.25])
    assert np.allclose(n, [-0.5, 0.25, 1.0])


def test_unit_rejects_zero():
    with pytest.raises(DegenerateNormalError):
        unit([0.0, 0.0, 0.0])
    with pytest.raises(DegenerateNormalError):
        reflect(np.ones(3), np.zeros(3))


def test_segment_slope_values():
    assert segment_slope([0.0, 0.0, 0.0], [3.0, 4.0, 10.0]) == pytest.approx(2.0)
    assert segment_slope([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]) == pytest.approx(-1.0)
    assert segment_slope([0.0, 0.0, 0.0], [0.0, 0.0, 2.0]) == math.inf
