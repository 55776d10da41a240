"""Stacking mirror pairs into 4- and 6-reflection beam systems.

A 2-mirror pair realizes one gradient map. Stacking two pairs in disjoint
horizontal slabs (first in z < 0, second in z > 0) composes their maps,
because each stage hands the next a vertical parallel beam: that yields any
composition of two gradient diffeomorphisms in 4 reflections. A general
orientation-reversing map is handled cell by cell: the local splitting of
the map into gradient factors gives one pair per cell on each side, with
the mid-beams translated to a packing row so the collections never shadow
each other. Orientation-preserving maps get a preliminary flip stage made
of two parabolic cylinders (which realizes the mirror symmetry sigma) and
then reuse the reversing pipeline on f composed with sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decomposition import decompose_local
from .domains import ConvexPolygon, Disc, DomainUnion, convex_hull
from .errors import (
    CellDecompositionError,
    ConstructionError,
    CTooSmallError,
    MixedOrientationError,
    NoValidShiftError,
    NumericalFailure,
    PlacementError,
    UsageError,
)
from .fields import AffineField, PolynomialField, SumField, half_norm_sq, linear_field
from .maps import (
    CallableMap,
    CompositeMap,
    GradientMap,
    orientation,
    polynomial_displacement,
)
from .mirrors import MirrorPatch, MirrorSystem, Stage
from .synthesis import (
    _build_pair,
    choose_path_constant,
    fitted_image_domain,
)
from .verify import verify_system


@dataclass
class CompositePlan:
    """Layout record of a stacked system: which sub-systems sit at which
    vertical offset, where the intermediate beams land, and the planar
    shifts applied to get them there."""

    stages: list = field(default_factory=list)  # (MirrorSystem, vertical offset)
    intermediate_domains: list = field(default_factory=list)
    shift_vectors: list = field(default_factory=list)


# -- field and domain helpers ------------------------------------------------


def _negate_field(F):
    if isinstance(F, PolynomialField):
        return F.scale(-1.0)
    if isinstance(F, AffineField):
        return AffineField(
            F.base,
            scale=-F.scale,
            offset=-F.offset,
            shift=None if F.shift is None else F.shift.copy(),
            linear=None if F.linear is None else -F.linear,
        )
    if isinstance(F, SumField):
        return SumField([_negate_field(t) for t in F.terms])
    return AffineField(F, scale=-1.0)


def _translate_domain(dom, b):
    b = np.asarray(b, dtype=float)
    if isinstance(dom, Disc):
        return Disc((dom.center[0] + b[0], dom.center[1] + b[1]), dom.radius)
    if isinstance(dom, ConvexPolygon):
        return dom.translate(b)
    if isinstance(dom, DomainUnion):
        return DomainUnion([_translate_domain(p, b) for p in dom.parts])
    raise UsageError(f"cannot translate domain of type {type(dom).__name__}")


def _reflect_domain(dom, a):
    """Mirror image about the vertical plane x1 = a."""
    if isinstance(dom, Disc):
        return Disc((2.0 * a - dom.center[0], dom.center[1]), dom.radius)
    if isinstance(dom, ConvexPolygon):
        v = dom.vertices.copy()
        v[:, 0] = 2.0 * a - v[:, 0]
        return ConvexPolygon(v[::-1])
    if isinstance(dom, DomainUnion):
        return DomainUnion([_reflect_domain(p, a) for p in dom.parts])
    raise UsageError(f"cannot reflect domain of type {type(dom).__name__}")


def _minus_half_norm(potential):
    """potential - |x|^2/2: the displacement potential of the pure gradient
    map x -> grad(potential)(x)."""
    bowl = half_norm_sq(factor=-0.5)
    if isinstance(potential, PolynomialField):
        return potential + bowl
    return SumField([potential, bowl])


def _plus_linear(potential, b):
    if abs(b[0]) == 0.0 and abs(b[1]) == 0.0:
        return potential
    if isinstance(potential, PolynomialField):
        return potential.plus_linear(b)
    return SumField([potential, linear_field(b)])


def _translate_field(potential, b):
    """potential(x - b), exactly."""
    if abs(b[0]) == 0.0 and abs(b[1]) == 0.0:
        return potential
    if isinstance(potential, PolynomialField):
        return potential.translate(b)
    if isinstance(potential, AffineField):
        shift = np.asarray(b, dtype=float) if potential.shift is None else potential.shift + b
        if potential.linear is not None:
            off = potential.offset - float(np.dot(potential.linear, b))
            return AffineField(potential.base, potential.scale, off, shift, potential.linear)
        return AffineField(potential.base, potential.scale, potential.offset, shift)
    return AffineField(potential, shift=np.asarray(b, dtype=float))


def image_footprint(f, dom, boundary=512):
    """Convex hull of f(dom); exact for affine maps, sampled otherwise."""
    disp = polynomial_displacement(f)
    if disp is not None and max(p.degree for p in disp) <= 1:
        if isinstance(dom, ConvexPolygon):
            return convex_hull(np.atleast_2d(f(dom.vertices)))
        if isinstance(dom, Disc):
            pts = np.atleast_2d(f(dom.boundary_points(256)))
            return convex_hull(pts).dilate(1.0 + 2e-4)
    pts = np.vstack([dom.boundary_points(boundary), dom.sample_points(grid=17, boundary=8)])
    return convex_hull(np.atleast_2d(f(pts))).dilate(1.0 + 2e-4)


# -- z-layout ----------------------------------------------------------------


def _pair_extent(G, dom, c, image):
    """Vertical extent [lo, hi] of a pair built with h = 0."""
    spec, p1, p2, _ = _build_pair(G, dom, c, 0.0, prefix="probe.", D2=image)
    lo1, hi1 = p1.z_range()
    lo2, hi2 = p2.z_range()
    return min(lo1, lo2), max(hi1, hi2)


class _SlabCursor:
    """Allocates non-overlapping vertical slabs going downward."""

    def __init__(self, top, margin):
        self.next_top = top
        self.margin = margin

    def place(self, lo0, hi0):
        """Vertical shift for a body with extent [lo0, hi0] at h = 0."""
        h = self.next_top - hi0
        self.next_top = lo0 + h - self.margin
        return h


# -- system inversion --------------------------------------------------------


def invert_system(system):
    """The z-mirror image of a system: realizes the inverse map.

    Reflections are time-reversible, so running the reversed path through
    the z-negated mirrors turns every exit ray of the original into an
    upward entry ray of the copy; path length shifts are preserved.
    """
    patches = [
        MirrorPatch(p.base_domain, _negate_field(p.height), patch_id=p.patch_id)
        for p in reversed(system.patches)
    ]
    stages = [
        Stage(
            name=s.name,
            patch_ids=tuple(reversed(s.patch_ids)),
            c=s.c,
            h=s.h,
            kind="pair-mirrored" if s.kind == "pair" else s.kind,
        )
        for s in reversed(system.stages)
    ]
    meta = {"kind": "inverted", "parent": dict(system.metadata)}
    return MirrorSystem(
        patches=patches,
        expected_reflections=system.expected_reflections,
        entry_domain=system.exit_domain,
        exit_domain=system.entry_domain,
        path_constants=list(reversed(system.path_constants)),
        stages=stages,
        metadata=meta,
    ).validate()


# -- two stacked pairs -------------------------------------------------------


def compose_four_mirror(
    phi,
    psi,
    D1,
    c1=None,
    c2=None,
    force_shift=False,
    verify=True,
    verify_samples=256,
    tol=1e-6,
    backend=None,
):
    """Realize grad(psi) o grad(phi) with two stacked mirror pairs.

    The first pair (in z < 0) maps the beam over D1 to the mid-beam over
    D' = grad(phi)(D1); the second (in z > 0) carries it on to
    grad(psi)(D'). When D' collides with the entry or exit footprint, the
    mid-beam alone is translated: phi gains the linear term b.x and psi is
    pre-translated by b, which moves D' without changing the composite.
    """
    G1 = _minus_half_norm(phi)
    Dprime = fitted_image_domain(G1, D1)
    G2 = _minus_half_norm(psi)
    D2 = fitted_image_domain(G2, Dprime)

    scene = DomainUnion([D1, Dprime, D2])
    lo, hi = scene.bbox()
    diam = float(np.linalg.norm(hi - lo))

    b = _find_mid_shift(D1, Dprime, D2, diam, force_shift)
    phi_b = _plus_linear(phi, b)
    psi_b = _translate_field(psi, b)
    G1 = _minus_half_norm(phi_b)
    G2 = _minus_half_norm(psi_b)
    Dmid = _translate_domain(Dprime, b)

    auto = c1 is None and c2 is None
    c1_val = choose_path_constant(G1, D1) if c1 is None else float(c1)
    c2_val = choose_path_constant(G2, Dmid) if c2 is None else float(c2)

    margin = 0.05 * (1.0 + diam)
    attempts = 3 if (auto and verify) else 1
    last_report = None
    for _ in range(attempts):
        lo1, hi1 = _pair_extent(G1, D1, c1_val, Dmid)
        h1 = -margin - hi1
        lo2, hi2 = _pair_extent(G2, Dmid, c2_val, D2)
        h2 = margin - lo2

        spec1, p1a, p1b, st1 = _build_pair(G1, D1, c1_val, h1, prefix="s1.", D2=Dmid)
        spec1.validate()
        spec2, p2a, p2b, st2 = _build_pair(G2, Dmid, c2_val, h2, prefix="s2.", D2=D2)
        spec2.validate()
        plan = CompositePlan(
            stages=[(st1.name, h1), (st2.name, h2)],
            intermediate_domains=[Dmid],
            shift_vectors=[np.asarray(b, dtype=float)],
        )
        system = MirrorSystem(
            patches=[p1a, p1b, p2a, p2b],
            expected_reflections=4,
            entry_domain=D1,
            exit_domain=spec2.D2,
            path_constants=[c1_val, c2_val],
            stages=[st1, st2],
            metadata={
                "kind": "four-mirror",
                "c": [c1_val, c2_val],
                "shift": [float(b[0]), float(b[1])],
            },
        ).validate()
        system.plan = plan
        if not verify:
            return system
        expected = CompositeMap(GradientMap(psi_b, flavor="pure"), GradientMap(phi_b, flavor="pure"))
        report = verify_system(
            system, expected=expected, samples=verify_samples, tol=tol, backend=backend
        )
        if report.passed:
            system.metadata["verification"] = report.to_dict()
            return system
        last_report = report
        c1_val *= 2.0
        c2_val *= 2.0
    raise CTooSmallError(
        "stacked-pair verification kept failing:\n" + (last_report.summary() if last_report else "")
    )


def _find_mid_shift(D1, Dprime, D2, diam, force_shift):
    """Smallest spiral-grid translation making the mid-domain clear of both
    the entry and exit footprints."""

    def clear(dom):
        return dom.disjoint_interiors(D1) and dom.disjoint_interiors(D2)

    if not force_shift and clear(Dprime):
        return np.zeros(2)
    step = max(0.5 * diam, 1e-3)
    for ring in range(1, 21):
        r = ring * step
        if r > 10.0 * max(diam, 1e-3):
            break
        for k in range(8):
            ang = 0.25 * np.pi * k
            b = np.array([r * np.cos(ang), r * np.sin(ang)])
            if clear(_translate_domain(Dprime, b)):
                return b
    raise NoValidShiftError(
        "no translation of the mid-domain within 10 scene diameters clears the beams"
    )


# -- cellwise realization of orientation-reversing maps ----------------------


def _mixed_orientation_message(f, D1):
    pts = D1.sample_points(grid=64)
    J = f.jacobian(pts).reshape(len(pts), 2, 2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    pos = pts[int(np.argmax(det))]
    neg = pts[int(np.argmin(det))]
    return (
        "Jacobian determinant changes sign over the domain: "
        f"det {det.max():+.3e} at {np.round(pos, 6)}, "
        f"det {det.min():+.3e} at {np.round(neg, 6)}"
    )


def _cell_polygon(D1):
    if isinstance(D1, ConvexPolygon):
        return D1
    if isinstance(D1, Disc):
        return D1.inscribed_polygon(96)
    raise UsageError("cellwise realization needs a disc or convex polygon domain")


def _decompose_cells(f, cells, tol, degree):
    out = []
    for idx, cell in enumerate(cells):
        x0 = cell.centroid()
        radius = float(np.linalg.norm(cell.vertices - x0, axis=1).max()) * 1.0001
        try:
            res = decompose_local(f, x0, tol=tol, degree=degree, radius_hint=radius)
        except (ConstructionError, NumericalFailure) as exc:
            raise CellDecompositionError(f"cell {idx} at {np.round(x0, 6)}: {exc}") from exc
        if res.radius < radius:
            return None, idx  # cell larger than the validated neighborhood
        out.append(res)
    return out, None


def realize_orientation_reversing(
    f,
    D1,
    partition=1,
    decomposition_tol=1e-6,
    degree=8,
    verify=True,
    verify_samples=512,
    tol=None,
    backend=None,
    orientation_gate=True,
):
    """Realize an orientation-reversing plane diffeomorphism in exactly 4
    reflections by a finite collection of mirror pairs.

    D1 is covered by grid cells; each cell's map splits locally into
    gradient factors. The entry-side pairs live in z < 0, and the exit-side
    factors are realized by the z-mirror image of the pair collection for
    the inverse factors, which lands in z > 0. Mid-beams are translated to
    a packing row so collections never shadow one another.

    ``orientation_gate=False`` skips the upfront Jacobian-sign check and
    lets the per-cell factorization report why an unsuitable map fails.
    """
    if orientation_gate:
        sense = orientation(f, D1)
        if sense == "preserving":
            raise UsageError(
                "map preserves orientation; realize_orientation_preserving handles that case"
            )
        if sense == "mixed":
            raise MixedOrientationError(_mixed_orientation_message(f, D1))

    base_poly = _cell_polygon(D1)
    disp = polynomial_displacement(f)
    is_affine = disp is not None and max(p.degree for p in disp) <= 1
    if tol is None:
        tol = 1e-6 if is_affine else 1e-5

    k = int(partition)
    results = None
    for _ in range(4):
        cells = grid_cells_of(base_poly, k)
        results, bad = _decompose_cells(f, cells, decomposition_tol, degree)
        if results is not None:
            break
        k *= 2
    if results is None:
        raise CellDecompositionError(
            f"cells still exceed their decomposition radii after refining to {k} x {k}"
        )

    exits = [image_footprint(f, cell) for cell in cells]
    scene_parts = [base_poly] + exits
    scene = DomainUnion(scene_parts)
    lo, hi = scene.bbox()
    diam = max(float(np.linalg.norm(hi - lo)), 1e-3)

    # raw mid-domains at b = 0, then packed onto a high row
    raw_mids = []
    for cell, res in zip(cells, results):
        Gphi = _minus_half_norm(res.phi)
        raw_mids.append(fitted_image_domain(Gphi, cell))

    mids, shifts = _pack_mids(raw_mids, scene_parts, hi[1], diam)

    phis = [_plus_linear(res.phi, b) for res, b in zip(results, shifts)]
    us = [_plus_linear(res.u, b) for res, b in zip(results, shifts)]

    Gphis = [_minus_half_norm(p) for p in phis]
    Gus = [_minus_half_norm(u) for u in us]
    c_phi = max(choose_path_constant(G, cell) for G, cell in zip(Gphis, cells))
    c_u = max(choose_path_constant(G, E) for G, E in zip(Gus, exits))

    margin = 0.05 * (1.0 + diam)
    cursor = _SlabCursor(-margin, margin)
    patches = []
    stages = []
    plan = CompositePlan(intermediate_domains=list(mids), shift_vectors=list(shifts))

    for i, (cell, mid, G) in enumerate(zip(cells, mids, Gphis)):
        lo0, hi0 = _pair_extent(G, cell, c_phi, mid)
        h = cursor.place(lo0, hi0)
        spec, pa, pb, st = _build_pair(G, cell, c_phi, h, prefix=f"c{i}.f.", D2=mid)
        patches += [pa, pb]
        stages.append(st)
        plan.stages.append((st.name, h))

    for i, (E, mid, G) in enumerate(zip(exits, mids, Gus)):
        lo0, hi0 = _pair_extent(G, E, c_u, mid)
        h = cursor.place(lo0, hi0)
        spec, pa, pb, st = _build_pair(G, E, c_u, h, prefix=f"c{i}.u.", D2=None)
        # exit-side factor runs backward: mount the z-mirror image
        patches += [
            MirrorPatch(pb.base_domain, _negate_field(pb.height), patch_id=f"c{i}.g.m1"),
            MirrorPatch(pa.base_domain, _negate_field(pa.height), patch_id=f"c{i}.g.m2"),
        ]
        stages.append(
            Stage(
                name=f"c{i}.g.pair",
                patch_ids=(f"c{i}.g.m1", f"c{i}.g.m2"),
                c=c_u,
                h=h,
                kind="pair-mirrored",
            )
        )
        plan.stages.append((stages[-1].name, -h))

    entry = DomainUnion(cells) if len(cells) > 1 else cells[0]
    exit_dom = DomainUnion(exits) if len(exits) > 1 else exits[0]
    system = MirrorSystem(
        patches=patches,
        expected_reflections=4,
        entry_domain=entry,
        exit_domain=exit_dom,
        path_constants=[c_phi, c_u],
        stages=stages,
        metadata={
            "kind": "orientation-reversing",
            "partition": k,
            "cells": len(cells),
            "c": [c_phi, c_u],
        },
    ).validate()
    system.plan = plan
    if verify:
        report = verify_system(
            system, expected=f, samples=verify_samples, tol=tol, backend=backend
        )
        if not report.passed:
            raise CTooSmallError("cellwise realization failed verification:\n" + report.summary())
        system.metadata["verification"] = report.to_dict()
    return system


def grid_cells_of(poly, k):
    from .domains import grid_cells

    if k <= 1:
        return [poly]
    return grid_cells(poly, k)


def _pack_mids(raw_mids, obstacles, scene_top, diam):
    """Translate each mid-domain onto a horizontal row above the scene.

    Rows are spaced by the scene diameter (doubling on the rare collision),
    which keeps every mid-beam clear of the entry cells, all exit hulls, and
    the other mid-beams.
    """
    extents = []
    for m in raw_mids:
        lo, hi = m.bbox()
        extents.append(float(np.linalg.norm(hi - lo)))
    pitch = max(diam, 2.0 * max(extents)) if extents else diam
    for _ in range(5):
        mids = []
        shifts = []
        ok = True
        for i, m in enumerate(raw_mids):
            target = np.array([0.0, scene_top + (2.0 + i) * pitch])
            b = target - m.centroid()
            mids.append(_translate_domain(m, b))
            shifts.append(b)
        for i, m in enumerate(mids):
            for obs in obstacles:
                if not m.disjoint_interiors(obs):
                    ok = False
            for j in range(i):
                if not m.disjoint_interiors(mids[j]):
                    ok = False
        if ok:
            return mids, shifts
        pitch *= 2.0
    raise NoValidShiftError("mid-beam packing failed even with doubled row spacing")


# -- orientation-preserving pipeline ------------------------------------------


def flip_stage_potential(a=0.0):
    """Displacement potential of the mirror symmetry about x1 = a."""
    t = np.zeros((3, 1))
    t[1, 0] = 2.0 * a
    t[2, 0] = -1.0
    return PolynomialField(t)


def reflected_about_vertical(f, a=0.0):
    """The map xi -> f(2a - xi1, xi2), exact for polynomial maps."""
    disp = polynomial_displacement(f)
    if disp is not None:
        comps = []
        for p, axis in zip(disp, (0, 1)):
            comp = p.plus_linear((1.0, 0.0) if axis == 0 else (0.0, 1.0))
            c = comp.coeffs.copy()
            for i in range(c.shape[0]):
                if i % 2 == 1:
                    c[i, :] *= -1.0
            center = comp.center.copy()
            center[0] = 2.0 * a - center[0]
            comps.append(PolynomialField(c, center))
        from .maps import AnalyticMap

        return AnalyticMap(comps[0], comps[1])

    R = np.array([[-1.0, 0.0], [0.0, 1.0]])
    off = np.array([2.0 * a, 0.0])

    def fn(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.atleast_2d(f(x @ R.T + off))

    def jac(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        J = np.asarray(f.jacobian(x @ R.T + off), dtype=float).reshape(len(x), 2, 2)
        return J @ R

    return CallableMap(fn, jac)


def realize_orientation_preserving(
    f,
    D1,
    flip_c=None,
    partition=1,
    auto_translate=True,
    decomposition_tol=1e-6,
    degree=8,
    verify=True,
    verify_samples=512,
    tol=None,
    backend=None,
):
    """Realize an orientation-preserving map in exactly 6 reflections.

    Two parabolic cylinders, z = (flip_c^2 - x1^2)/(2 flip_c) over D1 and
    its z-negation over the mirror image of D1, first apply the symmetry
    sigma about a vertical plane; the remaining orientation-reversing map
    f o sigma then goes through the cellwise 4-reflection pipeline.
    """
    sense = orientation(f, D1)
    if sense == "reversing":
        raise UsageError(
            "map reverses orientation; realize_orientation_reversing handles that case"
        )
    if sense == "mixed":
        raise MixedOrientationError(_mixed_orientation_message(f, D1))

    lo, hi = D1.bbox()
    if hi[0] < 0.0:
        a = 0.0
    elif auto_translate:
        a = float(hi[0]) + 0.25 * (1.0 + D1.diameter())
    else:
        raise PlacementError(
            "domain is not in the half-plane x1 < 0 and auto placement is disabled"
        )

    D1_star = _reflect_domain(D1, a)
    f_star = reflected_about_vertical(f, a)

    inner = realize_orientation_reversing(
        f_star,
        D1_star,
        partition=partition,
        decomposition_tol=decomposition_tol,
        degree=degree,
        verify=verify,
        verify_samples=verify_samples,
        tol=tol,
        backend=backend,
    )

    G_flip = flip_stage_potential(a)
    if flip_c is None:
        flip_c = choose_path_constant(G_flip, D1)
    c_flip = 2.0 * float(flip_c)

    inner_lo = min(p.z_range()[0] for p in inner.patches)
    margin = 0.05 * (1.0 + D1.diameter())
    lo0, hi0 = _pair_extent(G_flip, D1, c_flip, D1_star)
    h_flip = (inner_lo - margin) - hi0
    spec_f, pf1, pf2, st_f = _build_pair(G_flip, D1, c_flip, h_flip, prefix="flip.", D2=D1_star)
    st_f = Stage(name=st_f.name, patch_ids=st_f.patch_ids, c=c_flip, h=h_flip, kind="flip")

    entry = (
        DomainUnion([_reflect_domain(c, a) for c in inner.entry_domain.parts])
        if isinstance(inner.entry_domain, DomainUnion)
        else _reflect_domain(inner.entry_domain, a)
    )
    system = MirrorSystem(
        patches=[pf1, pf2] + inner.patches,
        expected_reflections=6,
        entry_domain=entry,
        exit_domain=inner.exit_domain,
        path_constants=[c_flip] + inner.path_constants,
        stages=[st_f] + inner.stages,
        metadata={
            "kind": "orientation-preserving",
            "flip_c": float(flip_c),
            "flip_plane": a,
            "inner": dict(inner.metadata),
        },
    ).validate()
    system.plan = CompositePlan(
        stages=[(st_f.name, h_flip)] + getattr(inner, "plan", CompositePlan()).stages,
        intermediate_domains=[D1_star] + getattr(inner, "plan", CompositePlan()).intermediate_domains,
        shift_vectors=getattr(inner, "plan", CompositePlan()).shift_vectors,
    )
    if verify:
        disp = polynomial_displacement(f)
        is_affine = disp is not None and max(p.degree for p in disp) <= 1
        end_tol = tol if tol is not None else (1e-6 if is_affine else 1e-5)
        report = verify_system(
            system, expected=f, samples=verify_samples, tol=end_tol, backend=backend
        )
        if not report.passed:
            raise CTooSmallError(
                "6-reflection realization failed verification:\n" + report.summary()
            )
        system.metadata["verification"] = report.to_dict()
    return system


__all__ = [
    "CompositePlan",
    "compose_four_mirror",
    "realize_orientation_reversing",
    "realize_orientation_preserving",
    "invert_system",
    "image_footprint",
    "flip_stage_potential",
    "reflected_about_vertical",
]
