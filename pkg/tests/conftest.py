"""Shared helpers: seeded generators and random potential factories."""

from __future__ import annotations

import numpy as np
import pytest

from periscope.domains import Disc
from periscope.fields import PolynomialField


def pcg(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def random_potential(rng, degree=4, amp=0.3):
    """Dense coefficient table for total degree <= ``degree``, coefficients
    uniform in [-amp, amp], zero constant term."""
    tab = np.zeros((degree + 1, degree + 1))
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            tab[i, j] = rng.uniform(-amp, amp)
    tab[0, 0] = 0.0
    return PolynomialField(tab)


def separated_potential(rng, degree=4, amp=0.3, domain_radius=1.0):
    """Random potential plus a linear carry chosen so the displaced image
    of the unit disc cannot touch the entry disc.

    Returns (G, D1). The linear term shifts the whole image by a constant,
    so disjointness is a matter of shifting far enough past the sampled
    displacement bound.
    """
    base = random_potential(rng, degree=degree, amp=amp)
    D1 = Disc((0.0, 0.0), domain_radius)
    pts = D1.sample_points(grid=33, boundary=128)
    sup = float(np.linalg.norm(np.atleast_2d(base.gradient(pts)), axis=1).max())
    shift = 2.0 * domain_radius + sup + 1.0
    G = base.plus_linear(np.array([shift, 0.0]))
    return G, D1


def min_map_jacobian_det(G, domain, grid=33):
    """min det(I + Hess G) over a sample of the domain."""
    pts = domain.sample_points(grid=grid, boundary=128)
    H = G.hessian(pts).reshape(len(pts), 2, 2)
    J = H + np.eye(2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    return float(det.min())


def realizable_potential(rng, degree=4, amp=0.3, domain_radius=0.4, min_det=0.2,
                         max_draws=400):
    """Draw separated potentials until one satisfies the synthesis hypotheses:
    uniformly nondegenerate Jacobian and a convex image. Returns (G, D1)."""
    from periscope.errors import ImageNotConvexError
    from periscope.synthesis import image_domain

    for _ in range(max_draws):
        G, D1 = separated_potential(rng, degree=degree, amp=amp,
                                    domain_radius=domain_radius)
        if min_map_jacobian_det(G, D1) < min_det:
            continue
        try:
            D2 = image_domain(G, D1)
        except ImageNotConvexError:
            continue
        if D1.disjoint_interiors(D2):
            return G, D1
    raise RuntimeError("no realizable potential found in the draw budget")


@pytest.fixture
def rng():
    return pcg(20260815)
