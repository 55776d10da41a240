"""Mirror patches (height field over a convex footprint) and systems of them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import Domain, DomainUnion
from .errors import DomainsNotDisjointError


@dataclass(eq=False)
class MirrorPatch:
    """One mirror: the graph of ``height`` over ``base_domain``.

    Cached quantities (height range, slope bound) are sampled once and
    reused by the tracer; patches are treated as immutable after construction.
    """

    base_domain: Domain
    height: object
    patch_id: str = "patch"

    def __post_init__(self):
        self._z_range = None
        self._lipschitz = None

    @property
    def dim(self):
        return self.base_domain.dim

    def z_range(self, grid=65, boundary=256):
        if self._z_range is None:
            pts = self.base_domain.sample_points(grid=grid, boundary=boundary)
            vals = np.atleast_1d(self.height.value(pts))
            lo, hi = float(vals.min()), float(vals.max())
            pad = 0.02 * (hi - lo) + 1e-9 * (1.0 + max(abs(lo), abs(hi)))
            self._z_range = (lo - pad, hi + pad)
        return self._z_range

    def lipschitz_bound(self, grid=64, boundary=256, safety=1.5):
        """Sampled bound on |grad(height)| over the footprint, with margin."""
        if self._lipschitz is None:
            pts = self.base_domain.sample_points(grid=grid, boundary=boundary)
            g = np.atleast_2d(self.height.gradient(pts))
            self._lipschitz = safety * float(np.linalg.norm(g, axis=1).max()) + 1e-9
        return self._lipschitz


@dataclass(frozen=True)
class Stage:
    """Bookkeeping for one synthesized mirror pair inside a system."""

    name: str
    patch_ids: tuple
    c: float
    h: float
    kind: str = "pair"  # pair | pair-mirrored | flip


@dataclass(eq=False)
class MirrorSystem:
    """An ordered collection of mirror patches realizing a beam-to-beam map.

    ``expected_reflections`` is the reflection count every interior ray must
    experience; the verifier treats any extra crossing as a defect.
    """

    patches: list
    expected_reflections: int
    entry_domain: Domain
    exit_domain: Domain
    path_constants: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._frame = None

    @property
    def dim(self):
        return self.entry_domain.dim

    def validate(self):
        ids = [p.patch_id for p in self.patches]
        if len(set(ids)) != len(ids):
            raise ValueError("patch ids must be unique")
        # Disjoint entry/exit is the two-reflection theorem's hypothesis;
        # taller compositions separate stages vertically instead.
        if self.expected_reflections == 2 and len(self.patches) == 2:
            if not self.entry_domain.disjoint_interiors(self.exit_domain):
                raise DomainsNotDisjointError("entry and exit footprints overlap")
        return self

    def frame(self):
        """(z_floor, z_ceil, diameter, excl) shared by every trace."""
        if self._frame is None:
            if self.patches:
                zlo = min(p.z_range()[0] for p in self.patches)
                zhi = max(p.z_range()[1] for p in self.patches)
                los, his = zip(*(p.base_domain.bbox() for p in self.patches))
                lo = np.min(np.vstack([np.atleast_1d(l) for l in los]), axis=0)
                hi = np.max(np.vstack([np.atleast_1d(h) for h in his]), axis=0)
                diam = float(np.linalg.norm(hi - lo)) + (zhi - zlo)
            else:
                zlo, zhi = -0.5, 0.5
                diam = self.entry_domain.diameter()
            diam = max(diam, 1e-6)
            z_floor = zlo - 1.0
            z_ceil = zhi + 1.0
            excl = 1e-9 * diam
            self._frame = (z_floor, z_ceil, diam, excl)
        return self._frame

    def total_path_constant(self):
        return float(np.sum(self.path_constants))


def union_entry(domains):
    return domains[0] if len(domains) == 1 else DomainUnion(domains)


def intersect_ray_patch(ray, patch, t_min=0.0):
    """First intersection of a ray with a mirror patch.

    Returns ``(t, point, normal)`` with the upward normal at the hit, or
    ``None`` when the ray misses the patch beyond ``t_min``.
    """
    from .tracing import _pure

    hit = _pure.first_hit(
        patch,
        np.asarray(ray.origin, dtype=float),
        np.asarray(ray.direction, dtype=float),
        t_lo=float(t_min),
    )
    if hit is None:
        return None
    t = hit
    point = ray.at(t)
    g = np.atleast_1d(patch.height.gradient(point[:-1]))
    normal = np.concatenate([-g, [1.0]])
    return t, point, normal / np.linalg.norm(normal)
