"""Planar source/image regions: intervals, discs, convex polygons.

Domains are the horizontal footprints of mirror patches and of the beams
themselves. All are convex; a light union wrapper covers piecewise systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _as_points(pts):
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    return pts


class Domain:
    """Common interface: membership, bbox, sampling, separation."""

    dim = 2

    def contains(self, pts, tol=0.0):
        raise NotImplementedError

    def bbox(self):
        raise NotImplementedError

    def diameter(self):
        lo, hi = self.bbox()
        return float(np.linalg.norm(np.asarray(hi) - np.asarray(lo)))

    def sample_points(self, grid=65, boundary=256):
        """Deterministic interior grid plus boundary ring, as an (m, dim) array."""
        lo, hi = self.bbox()
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.dim == 1:
            xs = np.linspace(lo[0], hi[0], grid)[:, None]
            return xs
        xs = np.linspace(lo[0], hi[0], grid)
        ys = np.linspace(lo[1], hi[1], grid)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        pts = pts[self.contains(pts, tol=1e-12 * (1.0 + self.diameter()))]
        return np.vstack([pts, self.boundary_points(boundary)])

    def boundary_points(self, m=256):
        raise NotImplementedError

    def centroid(self):
        raise NotImplementedError

    def disjoint_interiors(self, other):
        """True when the interiors do not overlap (touching is allowed)."""
        return _separation(self, other) >= -1e-12 * (1.0 + self.diameter() + other.diameter())


@dataclass(frozen=True)
class Interval(Domain):
    lo: float
    hi: float
    dim = 1

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("interval requires lo < hi")

    def contains(self, pts, tol=0.0):
        pts = _as_points(pts)
        return (pts[:, 0] >= self.lo - tol) & (pts[:, 0] <= self.hi + tol)

    def bbox(self):
        return (np.array([self.lo]), np.array([self.hi]))

    def boundary_points(self, m=2):
        return np.array([[self.lo], [self.hi]])

    def centroid(self):
        return np.array([0.5 * (self.lo + self.hi)])

    def diameter(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class Disc(Domain):
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")

    def contains(self, pts, tol=0.0):
        pts = _as_points(pts)
        d2 = np.sum((pts - np.asarray(self.center)) ** 2, axis=1)
        return d2 <= (self.radius + tol) ** 2

    def bbox(self):
        c = np.asarray(self.center)
        r = self.radius
        return (c - r, c + r)

    def boundary_points(self, m=256):
        th = np.linspace(0.0, 2.0 * math.pi, m, endpoint=False)
        c = np.asarray(self.center)
        return c + self.radius * np.column_stack([np.cos(th), np.sin(th)])

    def centroid(self):
        return np.asarray(self.center, dtype=float)

    def diameter(self):
        return 2.0 * self.radius

    def dilate(self, factor):
        return Disc(self.center, self.radius * factor)

    def inscribed_polygon(self, m=96):
        """Convex polygon inscribed in the disc (vertices on the circle)."""
        return ConvexPolygon(self.boundary_points(m))


@dataclass(frozen=True)
class ConvexPolygon(Domain):
    vertices: np.ndarray

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ValueError("polygon needs at least 3 planar vertices")
        # near-duplicate consecutive vertices would give zero-length edges
        # (and NaN normals), so collapse them up front
        eps = 1e-12 * (1.0 + float(np.abs(v).max()))
        keep = [0]
        for i in range(1, len(v)):
            if np.linalg.norm(v[i] - v[keep[-1]]) > eps:
                keep.append(i)
        if len(keep) >= 2 and np.linalg.norm(v[keep[-1]] - v[keep[0]]) <= eps:
            keep.pop()
        v = v[keep]
        if v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 distinct vertices")
        if _signed_area(v) < 0:
            v = v[::-1]
        if not _is_convex(v):
            raise ValueError("vertices do not describe a convex polygon")
        object.__setattr__(self, "vertices", v)

    def __eq__(self, other):
        return isinstance(other, ConvexPolygon) and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertices.tobytes())

    def _edges(self):
        v = self.vertices
        return v, np.roll(v, -1, axis=0)

    def outward_normals(self):
        a, b = self._edges()
        e = b - a
        # CCW orientation: outward normal is the edge rotated -90 degrees.
        n = np.column_stack([e[:, 1], -e[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    def contains(self, pts, tol=0.0):
        pts = _as_points(pts)
        a, _ = self._edges()
        n = self.outward_normals()
        s = np.einsum("pek,ek->pe", pts[:, None, :] - a[None, :, :], n)
        return np.all(s <= tol, axis=1)

    def bbox(self):
        return (self.vertices.min(axis=0), self.vertices.max(axis=0))

    def boundary_points(self, m=256):
        a, b = self._edges()
        lengths = np.linalg.norm(b - a, axis=1)
        total = lengths.sum()
        counts = np.maximum(1, np.round(m * lengths / total).astype(int))
        pts = []
        for ai, bi, k in zip(a, b, counts):
            t = np.arange(k) / k
            pts.append(ai + t[:, None] * (bi - ai))
        return np.vstack(pts)

    def centroid(self):
        a, b = self._edges()
        cross = a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]
        area = cross.sum() / 2.0
        if abs(area) < 1e-300:
            return self.vertices.mean(axis=0)
        cx = ((a[:, 0] + b[:, 0]) * cross).sum() / (6.0 * area)
        cy = ((a[:, 1] + b[:, 1]) * cross).sum() / (6.0 * area)
        return np.array([cx, cy])

    def area(self):
        return abs(_signed_area(self.vertices))

    def diameter(self):
        v = self.vertices
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        return math.sqrt(d2.max())

    def dilate(self, factor):
        c = self.centroid()
        return ConvexPolygon(c + factor * (self.vertices - c))

    def translate(self, shift):
        return ConvexPolygon(self.vertices + np.asarray(shift, dtype=float))

    def clip_halfplane(self, point, normal):
        """Intersection with {x : <x - point, normal> <= 0}; None if empty."""
        point = np.asarray(point, dtype=float)
        normal = np.asarray(normal, dtype=float)
        out = []
        v = self.vertices
        s = (v - point) @ normal
        for i in range(len(v)):
            j = (i + 1) % len(v)
            if s[i] <= 0:
                out.append(v[i])
            if (s[i] < 0) != (s[j] < 0) and s[i] != s[j]:
                t = s[i] / (s[i] - s[j])
                out.append(v[i] + t * (v[j] - v[i]))
        return _polygon_or_none(out)

    def clip_rect(self, lo, hi):
        """Intersection with an axis-aligned rectangle; None if (near-)empty."""
        poly = self
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        for point, normal in (
            (lo, np.array([-1.0, 0.0])),
            (lo, np.array([0.0, -1.0])),
            (hi, np.array([1.0, 0.0])),
            (hi, np.array([0.0, 1.0])),
        ):
            poly = poly.clip_halfplane(point, normal)
            if poly is None:
                return None
        return poly


class DomainUnion(Domain):
    """Union of convex parts; entry footprint of piecewise systems."""

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ValueError("union needs at least one part")
        self.parts = parts

    def contains(self, pts, tol=0.0):
        pts = _as_points(pts)
        hit = np.zeros(len(pts), dtype=bool)
        for p in self.parts:
            hit |= p.contains(pts, tol=tol)
        return hit

    def bbox(self):
        los, his = zip(*(p.bbox() for p in self.parts))
        return (np.min(np.vstack(los), axis=0), np.max(np.vstack(his), axis=0))

    def boundary_points(self, m=256):
        k = max(4, m // len(self.parts))
        return np.vstack([p.boundary_points(k) for p in self.parts])

    def centroid(self):
        return np.mean(np.vstack([p.centroid() for p in self.parts]), axis=0)

    def disjoint_interiors(self, other):
        others = other.parts if isinstance(other, DomainUnion) else [other]
        return all(p.disjoint_interiors(q) for p in self.parts for q in others)


def convex_hull(points):
    """Andrew monotone chain; returns a ConvexPolygon."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        raise ValueError("hull needs at least 3 distinct points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    return ConvexPolygon(hull)


def image_hull(points, apron=2e-3):
    """Convex hull of sampled image points, slightly dilated about its centroid.

    The hull of boundary samples is inscribed in the true (convex) image; the
    apron guarantees the genuine image stays covered.
    """
    return convex_hull(points).dilate(1.0 + apron)


def grid_cells(region, k):
    """Cover a convex polygon with a k x k grid of clipped convex cells."""
    lo, hi = region.bbox()
    xs = np.linspace(lo[0], hi[0], k + 1)
    ys = np.linspace(lo[1], hi[1], k + 1)
    total = region.area()
    cells = []
    for i in range(k):
        for j in range(k):
            cell = region.clip_rect((xs[i], ys[j]), (xs[i + 1], ys[j + 1]))
            if cell is not None and cell.area() > 1e-10 * total:
                cells.append(cell)
    return cells


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _is_convex(v):
    n = len(v)
    scale = max(1.0, float(np.abs(v).max())) ** 2
    for i in range(n):
        c = _cross(v[i], v[(i + 1) % n], v[(i + 2) % n])
        if c < -1e-12 * scale:
            return False
    return True


def _polygon_or_none(out):
    if len(out) < 3:
        return None
    v = np.array(out)
    # drop duplicate consecutive vertices produced by clipping
    keep = [0]
    for i in range(1, len(v)):
        if np.linalg.norm(v[i] - v[keep[-1]]) > 1e-12 * (1.0 + np.abs(v).max()):
            keep.append(i)
    if len(keep) >= 3 and np.linalg.norm(v[keep[-1]] - v[keep[0]]) <= 1e-12 * (1.0 + np.abs(v).max()):
        keep.pop()
    if len(keep) < 3:
        return None
    v = v[keep]
    if abs(_signed_area(v)) < 1e-300:
        return None
    return ConvexPolygon(v)


def _support(dom, direction):
    """max_{x in dom} <x, direction> for convex dom."""
    if isinstance(dom, Disc):
        c = np.asarray(dom.center)
        n = np.linalg.norm(direction)
        return float(c @ direction) + dom.radius * n
    if isinstance(dom, ConvexPolygon):
        return float((dom.vertices @ direction).max())
    if isinstance(dom, Interval):
        return dom.hi * direction[0] if direction[0] >= 0 else dom.lo * direction[0]
    raise TypeError(f"unsupported domain {type(dom)!r}")


def _separation(a, b):
    """Best separating margin found over candidate axes

    Positive: disjoint with a gap. Zero: touching. Negative values are a
    lower bound on overlap (exact for polygon/disc pairs by convexity).
    """
    if isinstance(a, Interval) and isinstance(b, Interval):
        return max(b.lo - a.hi, a.lo - b.hi)
    if isinstance(a, Disc) and isinstance(b, Disc):
        d = np.linalg.norm(np.asarray(a.center) - np.asarray(b.center))
        return d - a.radius - b.radius
    axes = []
    for dom in (a, b):
        if isinstance(dom, ConvexPolygon):
            axes.extend(dom.outward_normals())
    if isinstance(a, Disc) or isinstance(b, Disc):
        disc = a if isinstance(a, Disc) else b
        poly = b if isinstance(a, Disc) else a
        c = np.asarray(disc.center)
        for v in poly.vertices:
            d = c - v
            n = np.linalg.norm(d)
            if n > 1e-300:
                axes.append(d / n)
        # axis through the closest boundary point matters too; vertex axes
        # plus edge normals cover disc-polygon separation exactly.
    best = -math.inf
    for ax in axes:
        gap1 = -_support(a, ax) - _support(b, -ax)
        gap2 = -_support(b, ax) - _support(a, -ax)
        best = max(best, gap1, gap2)
    return best
