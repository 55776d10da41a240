"""Two-mirror periscope synthesis and its inverse analysis.

A gradient map x -> x + grad(G)(x) between disjoint convex domains is
realized by two mirror graphs:

    Phi1 = G/c + h            over D1,
    Phi2(x + g(x)) = Phi1(x) + (|g(x)|^2 - c^2) / (2c)   over D2,

where g = grad(G) and c is the optical path constant of the pair. The
converse direction recovers (c, G) from any traced 2-mirror system, and
``legendre_check`` verifies the duality between the two mirror potentials.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import DomainUnion, image_hull
from .errors import (
    ConstructionError,
    CTooSmallError,
    DomainsNotDisjointError,
    ExtensionViolationError,
    ImageNotConvexError,
    InconsistentSystemError,
    PieceOverlapError,
    VerificationError,
    ZeroDisplacementError,
)
from .fields import AffineField, PolynomialField, ScalarField, SecondMirrorHeight
from .maps import GradientMap
from .mirrors import MirrorPatch, MirrorSystem, Stage
from .verify import halton_labels, trace_many, verify_system

_SQRT3 = float(np.sqrt(3.0))


def _field_samples(domain, grid=65, boundary=256):
    pts = domain.sample_points(grid=grid, boundary=boundary)
    return np.atleast_2d(pts)


def sup_displacement(G, D1, grid=65, boundary=256):
    """Sampled sup of |grad G| over the domain."""
    pts = _field_samples(D1, grid, boundary)
    g = np.atleast_2d(G.gradient(pts))
    return float(np.linalg.norm(g, axis=1).max())


def choose_path_constant(g, D1, safety=1.05):
    """Path constant c = 2*sqrt(3)*sup|g| with a sampling safety factor.

    The intermediate segment of a traced pair has slope
    (|g|^2 - c^2)/(2c|g|); keeping it steeper than the mirror slopes
    sup|g|/c requires c^2 > 3 sup|g|^2, and the factor 2 leaves headroom
    for the sampled sup underestimating the true one.
    """
    if isinstance(g, ScalarField):
        M = sup_displacement(g, D1)
    else:
        pts = _field_samples(D1)
        disp = np.atleast_2d(g.displacement(pts))
        M = float(np.linalg.norm(disp, axis=1).max())
    M *= float(safety)
    if M <= 1e-14:
        raise ZeroDisplacementError("displacement is identically zero; no beam offset to realize")
    return 2.0 * _SQRT3 * M


def scale_potential(G, c, h=0.0):
    """Phi1 = G/c + h, kept polynomial when G is polynomial."""
    if isinstance(G, PolynomialField):
        out = G.scale(1.0 / c)
        return out.plus_const(h) if h != 0.0 else out
    return AffineField(G, scale=1.0 / c, offset=float(h))


def image_domain(G, D1, apron=2e-3, boundary=2048):
    """Convex hull of the sampled image of D1 under x -> x + grad G.

    The small apron keeps the exit glass covering the curved true image
    (the sampled hull is inscribed in it); callers drop the apron when the
    image touches another footprint.
    """
    bpts = np.atleast_2d(D1.boundary_points(boundary))
    imgs = bpts + np.atleast_2d(G.gradient(bpts))
    _check_convex_curve(imgs, D1.diameter())
    interior = _field_samples(D1, grid=33, boundary=0)
    img_int = interior + np.atleast_2d(G.gradient(interior))
    return image_hull(np.vstack([imgs, img_int]), apron=apron)


def fitted_image_domain(G, D1, clear_of=()):
    """Image hull with the largest apron that stays clear of ``clear_of``
    (touching beams force apron 0; a true overlap is returned as-is for the
    caller's disjointness check to reject)."""
    for apron in (2e-3, 1e-4, 0.0):
        D2 = image_domain(G, D1, apron=apron)
        if all(D2.disjoint_interiors(other) for other in clear_of):
            return D2
    return D2


def _check_convex_curve(pts, scale):
    """Curvature-sign check on an ordered closed boundary image."""
    a = np.roll(pts, -1, axis=0) - pts
    b = np.roll(a, -1, axis=0)
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    tol = 1e-9 * max(scale, 1.0) ** 2
    if cross.min() < -tol and cross.max() > tol:
        raise ImageNotConvexError(
            "image boundary curvature changes sign; the mapped domain is not convex"
        )


def _check_diffeo(G, D1):
    pts = _field_samples(D1)
    H = G.hessian(pts).reshape(len(pts), 2, 2)
    det = (1.0 + H[:, 0, 0]) * (1.0 + H[:, 1, 1]) - H[:, 0, 1] * H[:, 1, 0]
    if det.min() <= 1e-9:
        raise ConstructionError(
            "x -> x + grad G is not a diffeomorphism on the domain "
            f"(min Jacobian determinant {det.min():.3e})"
        )


@dataclass
class TwoMirrorSpec:
    """Design data of one mirror pair."""

    G: ScalarField
    D1: object
    c: float
    h: float = 0.0
    D2: object = None

    def __post_init__(self):
        self.c = float(self.c)
        self.h = float(self.h)
        if not self.c > 0:
            raise ConstructionError("path constant must be positive")
        if self.D2 is None:
            self.D2 = fitted_image_domain(self.G, self.D1, clear_of=(self.D1,))

    @property
    def phi1(self):
        return scale_potential(self.G, self.c, self.h)

    @property
    def phi2(self):
        anchor = np.atleast_1d(self.G.gradient(self.D1.centroid()))
        return SecondMirrorHeight(self.G, self.c, self.h, anchor=anchor)

    def slope_margin(self):
        """(c^2 - 3 sup|g|^2) / c^2: positive means the no-graze bound holds."""
        M = sup_displacement(self.G, self.D1)
        return (self.c**2 - 3.0 * M**2) / self.c**2

    def validate(self):
        if not self.D1.disjoint_interiors(self.D2):
            raise DomainsNotDisjointError(
                "entry and image domains overlap; shift the domain or the potential"
            )
        return self


def _build_pair(G, D1, c, h, prefix="", D2=None):
    """Patches of one pair, unverified. Shared by pair/piecewise/composite
    builders."""
    spec = TwoMirrorSpec(G, D1, c, h, D2=D2)
    p1 = MirrorPatch(D1, spec.phi1, patch_id=f"{prefix}m1")
    p2 = MirrorPatch(spec.D2, spec.phi2, patch_id=f"{prefix}m2")
    stage = Stage(name=f"{prefix}pair", patch_ids=(p1.patch_id, p2.patch_id), c=c, h=h, kind="pair")
    return spec, p1, p2, stage


def synthesize_two_mirror(
    G,
    D1,
    c=None,
    h=0.0,
    safety=1.05,
    verify=True,
    verify_samples=128,
    tol=1e-8,
    backend=None,
):
    """Build and verify the 2-mirror system realizing x -> x + grad G(x).

    When c is omitted it is chosen from the sampled displacement bound and
    doubled (up to 4 times) if verification still finds a stray
    intersection; an explicit c is used as-is and never escalated.
    """
    _check_diffeo(G, D1)
    D2 = fitted_image_domain(G, D1, clear_of=(D1,))
    if not D1.disjoint_interiors(D2):
        raise DomainsNotDisjointError(
            "entry domain and its image overlap; Theorem-style synthesis needs disjoint beams"
        )
    auto = c is None
    c_val = choose_path_constant(G, D1, safety=safety) if auto else float(c)

    attempts = 5 if (auto and verify) else 1
    last_report = None
    for attempt in range(attempts):
        spec, p1, p2, stage = _build_pair(G, D1, c_val, h, D2=D2)
        system = MirrorSystem(
            patches=[p1, p2],
            expected_reflections=2,
            entry_domain=D1,
            exit_domain=spec.D2,
            path_constants=[c_val],
            stages=[stage],
            metadata={"kind": "two-mirror", "c": c_val, "h": h},
        ).validate()
        if not verify:
            return system
        report = verify_system(
            system,
            expected=GradientMap(G, flavor="displacement"),
            samples=verify_samples,
            tol=tol,
            backend=backend,
        )
        if report.passed:
            system.metadata["verification"] = report.to_dict()
            return system
        last_report = report
        c_val *= 2.0
    raise CTooSmallError(
        "verification kept failing after path-constant escalation:\n"
        + (last_report.summary() if last_report else "")
    )


def recover_gradient(system, samples=256, residual_tol=1e-6, spread_tol=None, backend=None):
    """Recover (c, G, residual) from a traced 2-mirror system.

    c is fitted as the constant optical path shift, G = c*(Phi1 - h); the
    residual is max |g_traced - c grad Phi1|. Non-constant path shift or a
    large residual means the system does not satisfy the pair equation and
    raises ``InconsistentSystemError`` (with .spread and .residual set).
    """
    if len(system.patches) != 2:
        raise ConstructionError("gradient recovery expects a single 2-mirror pair")
    labels = halton_labels(system.entry_domain, samples)
    results = trace_many(system, labels, backend=backend)
    taus, disp, grads = [], [], []
    phi1 = system.patches[0].height
    for r in results:
        if r.exit_label is None or not np.isfinite(r.path_length_shift):
            raise VerificationError(f"trace at {r.entry_label} gave no exit ({r.status})")
        taus.append(r.path_length_shift)
        disp.append(r.exit_label - r.entry_label)
        grads.append(np.atleast_1d(phi1.gradient(r.entry_label)))
    taus = np.asarray(taus)
    disp = np.asarray(disp)
    grads = np.asarray(grads)

    c_fit = float(taus.mean())
    spread = float(taus.max() - taus.min())
    residual = float(np.linalg.norm(disp - c_fit * grads, axis=1).max())
    if spread_tol is None:
        spread_tol = 1e-6 * max(1.0, abs(c_fit))

    statuses = {r.status for r in results}
    if spread > spread_tol or residual > residual_tol or statuses != {"ok"}:
        exc = InconsistentSystemError(
            f"system violates the pair equation: path spread {spread:.3e}, "
            f"gradient residual {residual:.3e}, statuses {sorted(statuses)}"
        )
        exc.spread = spread
        exc.residual = residual
        raise exc

    h = system.stages[0].h if system.stages else 0.0
    if isinstance(phi1, PolynomialField):
        G = phi1.plus_const(-h).scale(c_fit)
    else:
        G = AffineField(phi1, scale=c_fit, offset=-c_fit * h)
    return c_fit, G, residual


def legendre_check(spec, samples=100, phi2=None):
    """Max residual of the Legendre duality between the two mirror potentials.

    With y = -x - g(x), Psi1 = -|x|^2/2 + c^2/4 - c Phi1, and
    Psi2(y) = -|y|^2/2 + c^2/4 + c Phi2(-y), a valid pair satisfies
    y = grad Psi1(x) and Psi2(y) = <x, y> - Psi1(x).
    """
    c, h = spec.c, spec.h
    phi1 = spec.phi1
    phi2 = spec.phi2 if phi2 is None else phi2
    x = halton_labels(spec.D1, samples)
    g = np.atleast_2d(spec.G.gradient(x))
    y = -x - g

    memb = 1e-12 * (1.0 + spec.D2.diameter())
    usable = spec.D2.contains(-y, tol=memb)
    skipped = int(np.sum(~usable))
    x, y = x[usable], y[usable]
    if x.shape[0] == 0:
        raise VerificationError("no Legendre sample had -y inside the image domain")

    grad_psi1 = -x - c * np.atleast_2d(phi1.gradient(x))
    res1 = np.linalg.norm(y - grad_psi1, axis=1)

    psi1 = -0.5 * np.sum(x * x, axis=1) + c**2 / 4.0 - c * np.atleast_1d(phi1.value(x))
    psi2 = -0.5 * np.sum(y * y, axis=1) + c**2 / 4.0 + c * np.atleast_1d(phi2.value(-y))
    res2 = np.abs(psi2 - (np.sum(x * y, axis=1) - psi1))

    out = float((res1 + res2).max())
    legendre_check.last_skipped = skipped
    return out


@dataclass
class PiecewisePiece:
    """One piece of a piecewise gradient map: beam footprint N, potential G,
    and the convex extension (N~, G~) the mirrors are actually built on."""

    domain: object
    potential: ScalarField
    extended_domain: object = None
    extended_potential: ScalarField = None
    c: float = None
    h: float = None

    def __post_init__(self):
        if self.extended_domain is None:
            self.extended_domain = self.domain
        if self.extended_potential is None:
            self.extended_potential = self.potential


@dataclass
class PiecewiseSpec:
    pieces: list = field(default_factory=list)

    def validate(self):
        doms = [p.domain for p in self.pieces]
        for i in range(len(doms)):
            for j in range(i + 1, len(doms)):
                if not doms[i].disjoint_interiors(doms[j]):
                    raise PieceOverlapError(f"piece footprints {i} and {j} overlap")
        for i, p in enumerate(self.pieces):
            ext = p.extended_domain
            pts = np.atleast_2d(p.domain.sample_points(grid=17, boundary=64))
            inside = ext.contains(pts, tol=1e-9 * (1.0 + ext.diameter()))
            if not bool(np.all(inside)):
                raise ExtensionViolationError(f"piece {i}: footprint is not inside its extension")
            gpts = np.atleast_2d(p.domain.sample_points(grid=9, boundary=32))
            dev = np.atleast_2d(p.extended_potential.gradient(gpts)) - np.atleast_2d(
                p.potential.gradient(gpts)
            )
            if float(np.abs(dev).max()) > 1e-9:
                raise ExtensionViolationError(
                    f"piece {i}: extension disagrees with the potential on the footprint"
                )
        return self


def synthesize_piecewise(
    spec,
    safety=1.05,
    verify=True,
    verify_samples=196,
    tol=1e-8,
    backend=None,
):
    """Side-by-side union of 2-mirror pairs realizing a piecewise gradient
    map (one pair per piece, every ray reflecting exactly twice).

    Pair i is dropped below pairs 1..i-1 by adjusting h_i so trajectories
    of different pieces cannot meet; images must be mutually disjoint and
    clear of the union of footprints.
    """
    spec.validate()
    pieces = spec.pieces
    if not pieces:
        raise ConstructionError("piecewise synthesis needs at least one piece")
    if len(pieces) == 1 and pieces[0].extended_domain is pieces[0].domain:
        p = pieces[0]
        return synthesize_two_mirror(
            p.potential, p.domain, c=p.c, h=p.h or 0.0,
            safety=safety, verify=verify, verify_samples=verify_samples,
            tol=tol, backend=backend,
        )

    # Mirrors sit over the beam footprints N_i and their image hulls; the
    # convex extensions only supply the heights (they may legally overlap
    # other pieces' footprints, so no glass is placed over them).
    entry_parts = [p.domain for p in pieces]
    images = []
    for i, p in enumerate(pieces):
        _check_diffeo(p.extended_potential, p.extended_domain)
        ext_image = fitted_image_domain(
            p.extended_potential, p.extended_domain, clear_of=(p.extended_domain,)
        )
        if not p.extended_domain.disjoint_interiors(ext_image):
            raise ExtensionViolationError(f"piece {i}: extension image overlaps the extension")
        images.append(fitted_image_domain(p.extended_potential, p.domain, clear_of=entry_parts))
    for i in range(len(pieces)):
        for j in range(len(pieces)):
            if i < j and not images[i].disjoint_interiors(images[j]):
                images[i] = image_domain(pieces[i].extended_potential, entry_parts[i], apron=0.0)
                images[j] = image_domain(pieces[j].extended_potential, entry_parts[j], apron=0.0)
                if not images[i].disjoint_interiors(images[j]):
                    raise PieceOverlapError(f"piece images {i} and {j} overlap")
            if not images[i].disjoint_interiors(entry_parts[j]):
                raise PieceOverlapError(f"piece image {i} overlaps footprint {j}")

    cs = [
        p.c if p.c is not None else choose_path_constant(p.extended_potential, p.domain, safety)
        for p in pieces
    ]

    patches, stages, path_constants = [], [], []
    z_bottom = None
    for i, (p, D2_i, c_i) in enumerate(zip(pieces, images, cs)):
        h_i = p.h
        if h_i is None:
            if z_bottom is None:
                h_i = 0.0
            else:
                _, q1, q2, _ = _build_pair(
                    p.extended_potential, p.domain, c_i, 0.0, prefix="probe.", D2=D2_i
                )
                top_at_zero = max(q1.z_range()[1], q2.z_range()[1])
                h_i = z_bottom - c_i - top_at_zero
        _, p1, p2, stage = _build_pair(
            p.extended_potential, p.domain, c_i, h_i, prefix=f"p{i}.", D2=D2_i
        )
        lo = min(p1.z_range()[0], p2.z_range()[0])
        z_bottom = lo if z_bottom is None else min(z_bottom, lo)
        patches.extend([p1, p2])
        stages.append(stage)
        path_constants.append(c_i)

    system = MirrorSystem(
        patches=patches,
        expected_reflections=2,
        entry_domain=DomainUnion(entry_parts),
        exit_domain=DomainUnion(images),
        path_constants=path_constants,
        stages=stages,
        metadata={"kind": "piecewise", "pieces": len(pieces)},
    ).validate()

    if verify:
        fmap = _PiecewiseMap(pieces)
        report = verify_system(
            system, expected=fmap, samples=verify_samples, tol=tol,
            spread_tol=np.inf, backend=backend,
        )
        # path constancy holds per piece, not globally; check it piecewise
        if report.passed:
            _check_piecewise_tau(system, pieces, cs, backend)
            system.metadata["verification"] = report.to_dict()
            return system
        raise VerificationError("piecewise system failed verification:\n" + report.summary())
    return system


class _PiecewiseMap:
    """Evaluate the piecewise gradient map piece-by-piece (batch)."""

    def __init__(self, pieces):
        self.pieces = pieces

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full_like(x, np.nan)
        for p in self.pieces:
            tol = 1e-9 * (1.0 + p.domain.diameter())
            mask = p.domain.contains(x, tol=tol) & ~np.isfinite(out[:, 0])
            if mask.any():
                out[mask] = x[mask] + np.atleast_2d(p.potential.gradient(x[mask]))
        return out


def _check_piecewise_tau(system, pieces, cs, backend):
    for p, c_i in zip(pieces, cs):
        sub_labels = halton_labels(p.domain, 32)
        results = trace_many(system, sub_labels, backend=backend)
        taus = np.asarray([r.path_length_shift for r in results])
        if not np.all(np.isfinite(taus)):
            raise VerificationError("piecewise path measurement hit a non-exiting ray")
        if taus.max() - taus.min() > 1e-9 * max(1.0, c_i):
            raise VerificationError(
                f"path shift not constant within a piece (spread {taus.max() - taus.min():.3e})"
            )


__all__ = [
    "TwoMirrorSpec",
    "PiecewisePiece",
    "PiecewiseSpec",
    "choose_path_constant",
    "synthesize_two_mirror",
    "synthesize_piecewise",
    "recover_gradient",
    "legendre_check",
    "scale_potential",
    "image_domain",
    "sup_displacement",
]
