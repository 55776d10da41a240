"""Lowering of mirror systems to flat numeric descriptors for the kernel.

The compiled backend works on plain float64/int32 arrays with no Python
objects in the hot loop. Heights lower to two kinds:

* kind 0: bivariate polynomial about a center (value + gradient tables),
* kind 1: image-side height defined through a polynomial potential G and a
  path constant c (evaluated by Newton inversion of x + grad G(x)),
  optionally rescaled/shifted for mirrored or translated copies.

Anything else (grid-sampled heights, 1-d systems, exotic domains) returns
None and the caller falls back to the reference backend.
"""

from __future__ import annotations

import numpy as np

from ..domains import ConvexPolygon, Disc
from ..fields import (
    AffineField,
    PolynomialField,
    SecondMirrorHeight,
    SumField,
    poly_dx,
    poly_dy,
)

DOM_DISC = 0
DOM_POLY = 1

FIELD_POLY = 0
FIELD_IMAGE = 1

MAX_DEGREE = 39  # power-buffer size in the kernel


def _flatten_polynomial(field):
    """Collapse affine wrappers over polynomials into one PolynomialField."""
    if isinstance(field, PolynomialField):
        return field
    if isinstance(field, SumField):
        parts = [_flatten_polynomial(p) for p in field.terms]
        if any(p is None for p in parts):
            return None
        acc = parts[0]
        for p in parts[1:]:
            acc = acc + p
        return acc
    if isinstance(field, AffineField):
        base = _flatten_polynomial(field.base)
        if base is None:
            return None
        out = base.translate(field.shift) if field.shift is not None else base
        if field.scale != 1.0:
            out = out.scale(field.scale)
        if field.linear is not None:
            out = out.plus_linear(field.linear)
        if field.offset != 0.0:
            out = out.plus_const(field.offset)
        return out
    return None


def _pad_table(tab, deg):
    out = np.zeros((deg + 1, deg + 1))
    t = np.asarray(tab, dtype=float)
    out[: t.shape[0], : t.shape[1]] = t
    return out


def _lower_field(height):
    """Return (kind, payload floats) or None."""
    poly = _flatten_polynomial(height)
    if poly is not None:
        tab = poly.coeffs
        deg = max(tab.shape) - 1
        if deg > MAX_DEGREE:
            return None
        blocks = (_pad_table(tab, deg), _pad_table(poly_dx(tab), deg), _pad_table(poly_dy(tab), deg))
        payload = [float(deg), float(poly.center[0]), float(poly.center[1])]
        for block in blocks:
            payload.extend(block.ravel())
        return FIELD_POLY, payload

    scale, offset, shift = 1.0, 0.0, np.zeros(2)
    core = height
    if isinstance(core, AffineField):
        if core.linear is not None:
            return None
        scale = float(core.scale)
        offset = float(core.offset)
        if core.shift is not None:
            shift = np.asarray(core.shift, dtype=float)
        core = core.base
    if not isinstance(core, SecondMirrorHeight):
        return None
    if not isinstance(core.potential, PolynomialField):
        return None
    g = core.potential
    tab = g.coeffs
    deg = max(tab.shape) - 1
    if deg > MAX_DEGREE:
        return None
    d1 = poly_dx(tab)
    d2 = poly_dy(tab)
    blocks = [
        _pad_table(tab, deg),
        _pad_table(d1, deg),
        _pad_table(d2, deg),
        _pad_table(poly_dx(d1), deg),
        _pad_table(poly_dy(d1), deg),
        _pad_table(poly_dy(d2), deg),
    ]
    anchor = np.zeros(2) if core.anchor is None else np.asarray(core.anchor, dtype=float)
    payload = [
        float(deg),
        float(g.center[0]),
        float(g.center[1]),
        float(core.c),
        float(core.h),
        scale,
        offset,
        float(shift[0]),
        float(shift[1]),
        float(anchor[0]),
        float(anchor[1]),
    ]
    for block in blocks:
        payload.extend(block.ravel())
    return FIELD_IMAGE, payload


def _lower_domain(dom):
    if isinstance(dom, Disc):
        return DOM_DISC, [dom.center[0], dom.center[1], dom.radius]
    if isinstance(dom, ConvexPolygon):
        verts = np.asarray(dom.vertices, dtype=float)
        normals = np.asarray(dom.outward_normals(), dtype=float)
        payload = [float(len(verts))]
        payload.extend(verts.ravel())
        payload.extend(normals.ravel())
        return DOM_POLY, payload
    return None


def lower_system(system):
    """Flatten a 2-label mirror system for the compiled tracer, or None."""
    patches = system.patches
    if not patches or any(p.base_domain.dim != 2 for p in patches):
        return None
    n = len(patches)
    dom_kind = np.zeros(n, dtype=np.int32)
    dom_ofs = np.zeros(n, dtype=np.int32)
    f_kind = np.zeros(n, dtype=np.int32)
    f_ofs = np.zeros(n, dtype=np.int32)
    dom_data: list[float] = []
    f_data: list[float] = []
    zlo = np.zeros(n)
    zhi = np.zeros(n)
    lip = np.zeros(n)
    pdiam = np.zeros(n)
    for i, patch in enumerate(patches):
        d = _lower_domain(patch.base_domain)
        f = _lower_field(patch.height)
        if d is None or f is None:
            return None
        dom_kind[i], payload = d
        dom_ofs[i] = len(dom_data)
        dom_data.extend(payload)
        f_kind[i], payload = f
        f_ofs[i] = len(f_data)
        f_data.extend(payload)
        zlo[i], zhi[i] = patch.z_range()
        lip[i] = patch.lipschitz_bound()
        pdiam[i] = patch.base_domain.diameter()
    z_floor, z_ceil, diam, excl = system.frame()
    return {
        "dom_kind": dom_kind,
        "dom_ofs": dom_ofs,
        "dom_data": np.asarray(dom_data, dtype=float),
        "f_kind": f_kind,
        "f_ofs": f_ofs,
        "f_data": np.asarray(f_data, dtype=float),
        "zlo": zlo,
        "zhi": zhi,
        "lip": lip,
        "pdiam": pdiam,
        "expected": int(system.expected_reflections),
        "z_floor": float(z_floor),
        "z_ceil": float(z_ceil),
        "diam": float(diam),
        "excl": float(excl),
    }
