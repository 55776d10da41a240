"""Two-mirror pair construction, gradient recovery, duality, piecewise."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import random_potential, realizable_potential
from periscope.domains import Disc
from periscope.errors import (
    ConstructionError,
    DomainsNotDisjointError,
    ExtensionViolationError,
    InconsistentSystemError,
    PieceOverlapError,
    ZeroDisplacementError,
)
from periscope.fields import PolynomialField, SumField, constant_field, half_norm_sq, linear_field
from periscope.geometry import segment_slope
from periscope.maps import GradientMap
from periscope.mirrors import MirrorPatch, MirrorSystem
from periscope.synthesis import (
    PiecewisePiece,
    PiecewiseSpec,
    TwoMirrorSpec,
    choose_path_constant,
    image_domain,
    legendre_check,
    recover_gradient,
    synthesize_piecewise,
    synthesize_two_mirror,
)
from periscope.verify import halton_labels, measure_time_shift, trace_ray, verify_system

UNIT = Disc((0.0, 0.0), 1.0)


def _translation_system(d=(4.0, 0.0), **kw):
    return synthesize_two_mirror(linear_field(d), UNIT, **kw)


def _dilation_system(**kw):
    # grad G = x, so the map is x -> 2x; footprint off-origin keeps the
    # image disc clear of the entry disc
    return synthesize_two_mirror(half_norm_sq(), Disc((3.0, 0.0), 1.0), **kw)


def test_choose_path_constant_formula():
    G = linear_field([0.5, 0.0])
    c = choose_path_constant(G, UNIT, safety=1.05)
    assert c == pytest.approx(2.0 * math.sqrt(3.0) * 1.05 * 0.5, rel=1e-12)
    # same constant from the map form of the displacement
    c2 = choose_path_constant(GradientMap(G), UNIT, safety=1.05)
    assert c2 == pytest.approx(c, rel=1e-9)
    with pytest.raises(ZeroDisplacementError):
        choose_path_constant(constant_field(3.0), UNIT)


def test_translation_gives_planar_mirrors():
    system = _translation_system()
    assert system.expected_reflections == 2
    assert system.metadata["verification"]["passed"] is True
    pts = halton_labels(UNIT, 16)
    H = system.patches[0].height.hessian(pts).reshape(-1, 2, 2)
    assert np.abs(H).max() <= 1e-12
    # entry slope |g|/c in the direction of the shift
    c = system.path_constants[0]
    g1 = system.patches[0].height.gradient(pts)
    assert np.allclose(g1, [4.0 / c, 0.0], atol=1e-12)


def test_translation_traces_to_shifted_label():
    system = _translation_system()
    r = trace_ray(system, np.array([0.25, -0.5]))
    assert r.status == "ok"
    assert r.bounces == 2
    assert np.allclose(r.exit_label, [4.25, -0.5], atol=1e-9)
    assert np.allclose(r.exit_direction, [0.0, 0.0, 1.0], atol=1e-12)
    assert not r.superfluous_hits


def test_dilation_drop_formula():
    system = _dilation_system()
    c = system.path_constants[0]
    x = np.array([3.1, 0.2])
    r = trace_ray(system, x)
    assert r.status == "ok" and r.bounces == 2
    g = x  # grad of |x|^2/2
    phi1_x = system.patches[0].height.value(x)
    # vertex heights satisfy the pair equation's drop
    drop = (float(g @ g) - c * c) / (2.0 * c)
    assert r.vertices[0][2] == pytest.approx(phi1_x, abs=1e-9)
    assert r.vertices[1][2] == pytest.approx(phi1_x + drop, abs=1e-8)
    assert np.allclose(r.exit_label, 2 * x, atol=1e-8)


def test_path_shift_is_the_constant():
    for system in (_translation_system(), _dilation_system()):
        c = system.path_constants[0]
        mean, spread = measure_time_shift(system, samples=64)
        assert spread <= 1e-9 * c
        assert mean == pytest.approx(c, rel=1e-9)


def test_intermediate_segment_identities():
    system = _dilation_system()
    c = system.path_constants[0]
    for label in halton_labels(system.entry_domain, 25):
        r = trace_ray(system, label)
        A1, A2 = r.vertices
        A0 = np.array([A2[0], A2[1], A1[2]])
        gnorm = float(np.linalg.norm(np.atleast_1d(
            system.patches[0].height.gradient(label)))) * c  # |grad G| = c |grad phi1|
        s = segment_slope(A1, A2)
        assert s == pytest.approx((gnorm**2 - c**2) / (2 * c * gnorm), rel=1e-10)
        d01 = np.linalg.norm(A1 - A0)
        d12 = np.linalg.norm(A2 - A1)
        d02 = np.linalg.norm(A2 - A0)
        assert d01 == pytest.approx(gnorm, rel=1e-9)
        assert d12 == pytest.approx((c**2 + gnorm**2) / (2 * c), rel=1e-9)
        assert d02 == pytest.approx(abs(c**2 - gnorm**2) / (2 * c), rel=1e-9)
        assert d12 + d02 == pytest.approx(c, abs=1e-9 * c)  # |g| < c here


def test_recover_gradient_round_trip(rng):
    G, D1 = realizable_potential(rng)
    system = synthesize_two_mirror(G, D1)
    c = system.path_constants[0]
    c_fit, G_rec, residual = recover_gradient(system, samples=128)
    assert abs(c_fit - c) <= 1e-9 * c
    assert residual <= 1e-8
    pts = halton_labels(D1, 50)
    assert np.allclose(G_rec.gradient(pts), G.gradient(pts), atol=1e-7)


def test_recover_gradient_flags_perturbed_second_mirror():
    system = _translation_system()
    bad = _perturb_second_mirror(system, 0.01)
    with pytest.raises(InconsistentSystemError) as exc_info:
        recover_gradient(bad, samples=64)
    assert exc_info.value.spread >= 5e-3


def _perturb_second_mirror(system, amount):
    """Tilt the second mirror by a linear ramp of the given total height."""
    p2 = system.patches[1]
    lo, hi = p2.base_domain.bbox()
    width = float(hi[0] - lo[0])
    ramp = linear_field([amount / width, 0.0]).plus_const(-amount * lo[0] / width)
    tilted = MirrorPatch(p2.base_domain, SumField([p2.height, ramp]), patch_id=p2.patch_id)
    return MirrorSystem(
        patches=[system.patches[0], tilted],
        expected_reflections=2,
        entry_domain=system.entry_domain,
        exit_domain=system.exit_domain,
        path_constants=list(system.path_constants),
        stages=list(system.stages),
        metadata={},
    ).validate()


def test_legendre_duality_examples(rng):
    specs = [
        TwoMirrorSpec(linear_field([4.0, 0.0]), UNIT, c=8.0),
        TwoMirrorSpec(half_norm_sq(), Disc((3.0, 0.0), 1.0), c=16.0),
    ]
    for _ in range(3):
        G, D1 = realizable_potential(rng, degree=3, amp=0.2)
        specs.append(TwoMirrorSpec(G, D1, c=choose_path_constant(G, D1)))
    for spec in specs:
        assert legendre_check(spec, samples=100) <= 1e-9


def test_slope_margin_positive_for_auto_constant():
    G = linear_field([4.0, 0.0])
    spec = TwoMirrorSpec(G, UNIT, c=choose_path_constant(G, UNIT))
    assert spec.slope_margin() > 0.2


def test_rejects_overlapping_image():
    with pytest.raises(DomainsNotDisjointError):
        synthesize_two_mirror(half_norm_sq(), UNIT)


def test_rejects_non_diffeomorphism():
    with pytest.raises(ConstructionError):
        synthesize_two_mirror(half_norm_sq().scale(-1.0), Disc((3.0, 0.0), 1.0))


def test_image_domain_covers_true_image():
    D1 = Disc((3.0, 0.0), 1.0)
    D2 = image_domain(half_norm_sq(), D1)
    probe = 2.0 * D1.boundary_points(333)  # exact image circle
    assert np.all(D2.contains(probe, tol=1e-9))


def test_explicit_constant_not_escalated():
    system = _translation_system(c=30.0)
    assert system.path_constants == [30.0]
    mean, _ = measure_time_shift(system, samples=16)
    assert mean == pytest.approx(30.0, rel=1e-9)


def test_piecewise_two_translations():
    spec = PiecewiseSpec(pieces=[
        PiecewisePiece(Disc((0.0, 0.0), 1.0), linear_field([0.0, 6.0])),
        PiecewisePiece(Disc((3.0, 0.0), 1.0), linear_field([0.0, -6.0])),
    ])
    system = synthesize_piecewise(spec, verify_samples=96)
    assert len(system.patches) == 4
    assert system.expected_reflections == 2
    assert system.metadata["verification"]["passed"] is True
    r = trace_ray(system, np.array([0.2, 0.1]))
    assert np.allclose(r.exit_label, [0.2, 6.1], atol=1e-8)
    r = trace_ray(system, np.array([3.2, 0.1]))
    assert np.allclose(r.exit_label, [3.2, -5.9], atol=1e-8)
    # the second pair is dropped below the first so trajectories cannot meet
    z1 = min(p.z_range()[0] for p in system.patches[:2])
    z2 = max(p.z_range()[1] for p in system.patches[2:])
    assert z2 < z1


def test_piecewise_overlap_rejected():
    spec = PiecewiseSpec(pieces=[
        PiecewisePiece(Disc((0.0, 0.0), 1.0), linear_field([0.0, 6.0])),
        PiecewisePiece(Disc((1.0, 0.0), 1.0), linear_field([0.0, -6.0])),
    ])
    with pytest.raises(PieceOverlapError):
        synthesize_piecewise(spec)


def test_piecewise_extension_must_agree():
    base = linear_field([0.0, 6.0])
    wrong = linear_field([0.0, 6.5])
    spec = PiecewiseSpec(pieces=[
        PiecewisePiece(Disc((0.0, 0.0), 1.0), base,
                       extended_domain=Disc((0.0, 0.0), 1.5),
                       extended_potential=wrong),
    ])
    with pytest.raises(ExtensionViolationError):
        synthesize_piecewise(spec)


def test_scale_potential_stays_polynomial(rng):
    G = random_potential(rng, degree=3).plus_linear([9.0, 0.0])
    spec = TwoMirrorSpec(G, UNIT, c=12.0, h=0.5, D2=Disc((9.0, 0.0), 4.0))
    assert isinstance(spec.phi1, PolynomialField)
    pts = rng.uniform(-1, 1, size=(10, 2))
    want = G.value(pts) / 12.0 + 0.5
    assert np.allclose(spec.phi1.value(pts), want, atol=1e-12)
