"""Stacked 4-reflection systems, cellwise realizations, the 6-reflection
orientation-preserving pipeline, and system inversion."""

from __future__ import annotations

import numpy as np
import pytest

from periscope.composer import (
    compose_four_mirror,
    flip_stage_potential,
    invert_system,
    realize_orientation_preserving,
    realize_orientation_reversing,
    reflected_about_vertical,
)
from periscope.decomposition import factor_linear
from periscope.domains import Disc
from periscope.errors import (
    CellDecompositionError,
    MixedOrientationError,
    PlacementError,
    UsageError,
)
from periscope.fields import PolynomialField, half_norm_sq, linear_field
from periscope.maps import AnalyticMap, CallableMap, LinearMap
from periscope.synthesis import synthesize_two_mirror
from periscope.verify import measure_time_shift, trace_many, verify_system

ORACLE_F = np.array([[0.0, 1.0], [2.0, 0.0]])


def quadratic_potential(S):
    """x . S x / 2, so the pure gradient map is x -> S x."""
    S = np.asarray(S, dtype=float)
    tab = np.zeros((3, 3))
    tab[2, 0] = 0.5 * S[0, 0]
    tab[1, 1] = S[0, 1]
    tab[0, 2] = 0.5 * S[1, 1]
    return PolynomialField(tab)


def ring(center, radius, n, phase=0.17):
    th = phase + np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    return np.asarray(center) + radius * np.column_stack([np.cos(th), np.sin(th)])


def segment_tilt(vertices, lo, hi):
    """Horizontal drift of the straight run between reflections lo and hi."""
    d = vertices[hi] - vertices[lo]
    return float(np.hypot(d[0], d[1]) / abs(d[2]))


@pytest.fixture(scope="module")
def oracle_four():
    S1, S2 = factor_linear(ORACLE_F)
    phi = quadratic_potential(S1)
    psi = quadratic_potential(S2)
    return compose_four_mirror(phi, psi, Disc((0.0, 0.0), 1.0))


# -- two stacked pairs ---------------------------------------------------------


def test_four_mirror_linear_oracle(oracle_four):
    system = oracle_four
    assert system.expected_reflections == 4
    assert len(system.patches) == 4
    report = verify_system(system, expected=LinearMap(ORACLE_F), samples=400, tol=1e-6)
    assert report.passed
    assert set(report.reflection_histogram) == {4}
    assert report.max_map_error <= 1e-6


def test_four_mirror_intermediate_beam_vertical(oracle_four):
    traces = trace_many(oracle_four, ring((0.0, 0.0), 0.6, 12))
    for t in traces:
        assert t.status == "ok"
        assert t.bounces == 4
        assert not t.superfluous_hits
        # beam between the stages (reflection 2 -> reflection 3) is vertical
        assert segment_tilt(t.vertices, 1, 2) <= 1e-10


def test_four_mirror_stage_slabs_are_separated(oracle_four):
    by_stage = []
    for st in oracle_four.stages:
        zs = [
            p.z_range()
            for p in oracle_four.patches
            if p.patch_id in st.patch_ids
        ]
        by_stage.append((min(lo for lo, _ in zs), max(hi for _, hi in zs)))
    (lo1, hi1), (lo2, hi2) = by_stage
    assert hi1 < 0.0 < lo2
    assert lo2 - hi1 > 0.0


def test_four_mirror_time_shift_is_sum_of_constants(oracle_four):
    c_total = sum(oracle_four.path_constants)
    mean, spread = measure_time_shift(oracle_four, samples=48)
    assert spread <= 1e-9 * c_total
    assert abs(mean - c_total) <= 1e-8 * c_total


def test_translations_compose():
    a = np.array([0.8, -0.2])
    b = np.array([-0.3, 0.5])
    phi = half_norm_sq().plus_linear(a)
    psi = half_norm_sq().plus_linear(b)
    system = compose_four_mirror(phi, psi, Disc((0.0, 0.0), 1.0))
    # the mid-domain overlaps the entry beam, so the shift must engage
    assert np.linalg.norm(system.plan.shift_vectors[0]) > 0.0
    report = verify_system(
        system, expected=LinearMap(np.eye(2), offset=a + b), samples=200, tol=1e-6
    )
    assert report.passed


def test_forced_shift_leaves_the_map_alone():
    phi = half_norm_sq().plus_linear((4.0, 0.0))
    psi = half_norm_sq().plus_linear((4.0, 0.0))
    D1 = Disc((0.0, 0.0), 1.0)
    plain = compose_four_mirror(phi, psi, D1)
    forced = compose_four_mirror(phi, psi, D1, force_shift=True)
    assert np.linalg.norm(plain.plan.shift_vectors[0]) == 0.0
    assert np.linalg.norm(forced.plan.shift_vectors[0]) > 0.0
    labels = ring((0.0, 0.0), 0.7, 16)
    for ta, tb in zip(trace_many(plain, labels), trace_many(forced, labels)):
        assert ta.status == "ok" and tb.status == "ok"
        assert np.abs(ta.exit_label - tb.exit_label).max() <= 1e-8


# -- inversion -----------------------------------------------------------------


def test_invert_translation():
    base = synthesize_two_mirror(linear_field((4.0, 0.0)), Disc((0.0, 0.0), 1.0))
    inv = invert_system(base)
    assert inv.metadata["kind"] == "inverted"
    assert inv.path_constants == base.path_constants
    # the inverse acts on the true image of the forward map, so probe
    # interior labels rather than the apron-dilated entry hull
    labels = ring((4.0, 0.0), 0.8, 24)
    for y, t in zip(labels, trace_many(inv, labels)):
        assert t.status == "ok"
        assert t.bounces == 2
        assert not t.superfluous_hits
        assert np.abs(t.exit_label - (y - np.array([4.0, 0.0]))).max() <= 1e-8


def test_invert_dilation_halves():
    base = synthesize_two_mirror(half_norm_sq(), Disc((3.0, 0.0), 1.0))
    inv = invert_system(base)
    labels = ring((6.0, 0.0), 1.6, 24)
    for y, t in zip(labels, trace_many(inv, labels)):
        assert t.status == "ok"
        assert t.bounces == 2
        assert np.abs(t.exit_label - 0.5 * y).max() <= 1e-8


def test_invert_is_involutive():
    base = synthesize_two_mirror(linear_field((4.0, 0.0)), Disc((0.0, 0.0), 1.0))
    twice = invert_system(invert_system(base))
    labels = ring((0.0, 0.0), 0.8, 24)
    for ta, tb in zip(trace_many(base, labels), trace_many(twice, labels)):
        assert np.abs(ta.exit_label - tb.exit_label).max() <= 1e-9
        assert abs(ta.path_length_shift - tb.path_length_shift) <= 1e-9


def test_invert_four_mirror(oracle_four):
    inv = invert_system(oracle_four)
    x = ring((0.0, 0.0), 0.5, 16)
    y = np.atleast_2d(LinearMap(ORACLE_F)(x))
    for xi, t in zip(x, trace_many(inv, y)):
        assert t.status == "ok"
        assert t.bounces == 4
        assert np.abs(t.exit_label - xi).max() <= 1e-6


# -- cellwise orientation-reversing realization ---------------------------------


def test_reflection_map_realized_in_four(rng):
    sigma = LinearMap([[-1.0, 0.0], [0.0, 1.0]])
    system = realize_orientation_reversing(sigma, Disc((0.0, 0.0), 1.0))
    assert system.expected_reflections == 4
    stored = system.metadata["verification"]
    assert stored["passed"]
    assert set(stored["reflection_histogram"]) == {"4"}
    assert stored["max_map_error"] <= 1e-6

    labels = ring((0.0, 0.0), 0.6, 16)
    for x, t in zip(labels, trace_many(system, labels)):
        assert t.status == "ok"
        assert t.bounces == 4
        assert not t.superfluous_hits
        assert np.abs(t.exit_label - np.array([-x[0], x[1]])).max() <= 1e-6
        assert segment_tilt(t.vertices, 1, 2) <= 1e-10


def test_partition_independence_linear():
    f = LinearMap(ORACLE_F)
    D1 = Disc((0.0, 0.0), 1.0)
    one = realize_orientation_reversing(f, D1, partition=1)
    four = realize_orientation_reversing(f, D1, partition=2)
    assert four.metadata["cells"] == 4
    # labels clear of the 2x2 grid seams at x = 0 and y = 0
    labels = ring((0.0, 0.0), 0.6, 16, phase=0.3)
    keep = np.abs(labels).min(axis=1) > 0.05
    labels = labels[keep]
    assert len(labels) >= 10
    for ta, tb in zip(trace_many(one, labels), trace_many(four, labels)):
        assert ta.status == "ok" and tb.status == "ok"
        assert np.abs(ta.exit_label - tb.exit_label).max() <= 1e-6


def test_nonlinear_reversing_map(rng):
    f1 = PolynomialField([[0.0, 0.0, 0.05]]).plus_linear((-1.0, 0.0))
    f2 = PolynomialField([[0.0], [0.0], [0.05]]).plus_linear((0.0, 1.0))
    f = AnalyticMap(f1, f2)
    system = realize_orientation_reversing(f, Disc((0.0, 0.0), 0.5))
    stored = system.metadata["verification"]
    assert stored["passed"]
    assert stored["max_map_error"] <= 1e-5
    assert set(stored["reflection_histogram"]) == {"4"}


def test_reversing_rejects_preserving_map():
    with pytest.raises(UsageError, match="realize_orientation_preserving"):
        realize_orientation_reversing(LinearMap(np.eye(2)), Disc((0.0, 0.0), 1.0))


def test_reversing_rejects_mixed_orientation():
    f = AnalyticMap(
        PolynomialField([[0.0], [0.0], [0.5]]),
        PolynomialField([[0.0, 1.0]]),
    )
    with pytest.raises(MixedOrientationError, match="changes sign") as ei:
        realize_orientation_reversing(f, Disc((0.0, 0.0), 1.0))
    assert "det" in str(ei.value)


def test_gate_off_reports_failing_cell():
    with pytest.raises(CellDecompositionError, match="cell 0"):
        realize_orientation_reversing(
            LinearMap(np.eye(2)), Disc((0.0, 0.0), 1.0), orientation_gate=False
        )


# -- orientation-preserving pipeline ---------------------------------------------


def test_identity_realized_in_six():
    system = realize_orientation_preserving(LinearMap(np.eye(2)), Disc((-3.0, 0.0), 1.0))
    assert system.expected_reflections == 6
    assert system.metadata["flip_plane"] == 0.0
    assert system.stages[0].kind == "flip"
    stored = system.metadata["verification"]
    assert stored["passed"]
    assert set(stored["reflection_histogram"]) == {"6"}

    labels = ring((-3.0, 0.0), 0.6, 12)
    for x, t in zip(labels, trace_many(system, labels)):
        assert t.status == "ok"
        assert t.bounces == 6
        assert not t.superfluous_hits
        assert np.abs(t.exit_label - x).max() <= 1e-5
        # after the flip stage the beam is vertical again
        assert segment_tilt(t.vertices, 1, 2) <= 1e-10


def test_rotation_realized_in_six():
    th = 0.1
    rot = LinearMap([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    system = realize_orientation_preserving(rot, Disc((-3.0, 0.0), 1.0))
    assert system.expected_reflections == 6
    stored = system.metadata["verification"]
    assert stored["passed"]
    assert stored["max_map_error"] <= 1e-5
    assert set(stored["reflection_histogram"]) == {"6"}


def test_preserving_rejects_reversing_map():
    sigma = LinearMap([[-1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(UsageError, match="realize_orientation_reversing"):
        realize_orientation_preserving(sigma, Disc((-3.0, 0.0), 1.0))


def test_preserving_placement_gate():
    with pytest.raises(PlacementError):
        realize_orientation_preserving(
            LinearMap(np.eye(2)), Disc((0.2, 0.0), 0.5), auto_translate=False
        )


# -- flip-stage helpers ------------------------------------------------------------


def test_flip_stage_potential_displacement():
    a = 1.5
    G = flip_stage_potential(a)
    x = np.array([[0.3, -0.7], [2.0, 0.4]])
    disp = x + np.atleast_2d(G.gradient(x))
    assert np.abs(disp - np.column_stack([2 * a - x[:, 0], x[:, 1]])).max() <= 1e-14


def test_reflected_map_polynomial_and_callable_agree():
    f = LinearMap(ORACLE_F, offset=[0.5, -1.0])
    a = 0.75
    poly = reflected_about_vertical(f, a)
    generic = reflected_about_vertical(
        CallableMap(lambda x: np.atleast_2d(f(x)), lambda x: f.jacobian(np.atleast_2d(x))), a
    )
    x = ring((0.0, 0.0), 1.3, 9)
    want = np.atleast_2d(f(np.column_stack([2 * a - x[:, 0], x[:, 1]])))
    assert np.abs(np.atleast_2d(poly(x)) - want).max() <= 1e-12
    assert np.abs(np.atleast_2d(generic(x)) - want).max() <= 1e-12
    Jp = np.asarray(poly.jacobian(x)).reshape(len(x), 2, 2)
    Jg = np.asarray(generic.jacobian(x)).reshape(len(x), 2, 2)
    assert np.abs(Jp - Jg).max() <= 1e-12
