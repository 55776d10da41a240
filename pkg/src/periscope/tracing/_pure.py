"""Reference tracing backend: plain Python + numpy, one ray at a time.

The kernel backend (``_fast``) reimplements exactly this algorithm in C for
descriptor-compatible systems; this module is the semantic ground truth and
the fallback for field kinds the kernel cannot lower.

Marching rule: along a segment the gap g(t) = z(t) - height(xy(t)) cannot
change faster than (1 + L) per unit arclength, where L bounds |grad(height)|
over the footprint. Stepping by |g|/(1 + L) therefore never skips a sign
change, which is what makes the superfluous-intersection count trustworthy.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalFailure

_MAX_MARCH = 200000

STATUS_OK = 0
STATUS_ESCAPED = 1
STATUS_SUPERFLUOUS = 2
STATUS_MAX_BOUNCES = 3
STATUS_NUMERICAL = 4

STATUS_NAMES = {
    STATUS_OK: "ok",
    STATUS_ESCAPED: "escaped",
    STATUS_SUPERFLUOUS: "superfluous",
    STATUS_MAX_BOUNCES: "max-bounces",
    STATUS_NUMERICAL: "numerical-failure",
}


def _clip_to_footprint(domain, p, d, pad):
    """Parameter interval where the horizontal projection stays in the
    (padded) footprint; None when the line misses it entirely."""
    from ..domains import ConvexPolygon, Disc, Interval

    if isinstance(domain, Disc):
        c = np.asarray(domain.center)
        r = domain.radius + pad
        q = p - c
        a = float(d @ d)
        if a < 1e-300:
            return (-np.inf, np.inf) if float(q @ q) <= r * r else None
        b = 2.0 * float(q @ d)
        c0 = float(q @ q) - r * r
        disc = b * b - 4.0 * a * c0
        if disc <= 0.0:
            return None
        s = np.sqrt(disc)
        return ((-b - s) / (2 * a), (-b + s) / (2 * a))
    if isinstance(domain, ConvexPolygon):
        t0, t1 = -np.inf, np.inf
        verts = domain.vertices
        normals = domain.outward_normals()
        for v, n in zip(verts, normals):
            num = float((p - v) @ n) - pad
            den = float(d @ n)
            if abs(den) < 1e-300:
                if num > 0.0:
                    return None
                continue
            t = -num / den
            if den > 0.0:
                t1 = min(t1, t)
            else:
                t0 = max(t0, t)
            if t0 >= t1:
                return None
        return (t0, t1)
    if isinstance(domain, Interval):
        lo, hi = domain.lo - pad, domain.hi + pad
        if abs(d[0]) < 1e-300:
            return (-np.inf, np.inf) if lo <= p[0] <= hi else None
        ta = (lo - p[0]) / d[0]
        tb = (hi - p[0]) / d[0]
        return (min(ta, tb), max(ta, tb))
    raise TypeError(f"unsupported footprint {type(domain)!r}")


def first_hit(patch, origin, direction, t_lo=0.0, t_hi=None):
    """Smallest t > t_lo where the ray meets the patch surface, or None."""
    n = len(origin) - 1
    p_xy, p_z = origin[:n], origin[n]
    d_xy, d_z = direction[:n], direction[n]
    dom = patch.base_domain
    diam = dom.diameter()
    pad = 1e-6 * (1.0 + diam)
    memb_tol = 1e-12 * (1.0 + diam)
    zmin, zmax = patch.z_range()

    horiz = float(np.linalg.norm(d_xy))
    if horiz < 1e-14:
        # vertical segment: closed form
        if not bool(dom.contains(p_xy[None, :], tol=memb_tol)[0]):
            return None
        t = (float(patch.height.value(p_xy)) - p_z) / d_z
        if t <= t_lo or (t_hi is not None and t > t_hi):
            return None
        return t

    clip = _clip_to_footprint(dom, p_xy, d_xy, pad)
    if clip is None:
        return None
    a = max(clip[0], t_lo)
    b = clip[1] if t_hi is None else min(clip[1], t_hi)
    if not a < b:
        return None
    # quick reject on heights
    za, zb = p_z + a * d_z, p_z + b * d_z
    if max(za, zb) < zmin or min(za, zb) > zmax:
        return None

    L = patch.lipschitz_bound()
    height = patch.height

    def gap(t):
        q = p_xy + t * d_xy
        return (p_z + t * d_z) - float(height.value(q))

    min_step = 1e-13 * (1.0 + diam)
    t = a
    g = gap(t)
    if g == 0.0:
        t += min_step
        g = gap(t)
    for _ in range(_MAX_MARCH):
        if t >= b:
            return None
        step = max(abs(g) / (1.0 + L), min_step)
        t_next = min(t + step, b)
        g_next = gap(t_next)
        if g * g_next <= 0.0 and g != g_next:
            t_star = _refine(gap, t, t_next, g, g_next, p_xy, d_xy, d_z, height, diam)
            q = p_xy + t_star * d_xy
            if bool(dom.contains(q[None, :], tol=memb_tol)[0]):
                return t_star
        t, g = t_next, g_next
    raise NumericalFailure("surface march exceeded its step budget", patch_id=patch.patch_id)


def _refine(gap, ta, tb, ga, gb, p_xy, d_xy, d_z, height, diam):
    """Bisection to ~1e-13 relative, then one Newton polish."""
    tol = 1e-13 * (1.0 + diam + abs(tb))
    for _ in range(200):
        if tb - ta <= tol:
            break
        tm = 0.5 * (ta + tb)
        gm = gap(tm)
        if gm == 0.0:
            return tm
        if (ga < 0.0) == (gm < 0.0):
            ta, ga = tm, gm
        else:
            tb, gb = tm, gm
    t = 0.5 * (ta + tb)
    q = p_xy + t * d_xy
    grad = np.atleast_1d(height.gradient(q))
    dgdt = d_z - float(grad @ d_xy)
    if dgdt != 0.0:
        t_new = t - gap(t) / dgdt
        if ta - tol <= t_new <= tb + tol:
            t = t_new
    return t


def trace_batch(system, labels, max_bounces=16):
    """Trace vertical entry rays through the system; returns arrays.

    Every patch is tested on every segment; the nearest hit wins (ties go to
    the lower patch index). Reflections beyond the expected count are
    recorded as superfluous hits rather than errors: the trajectory keeps
    reflecting like a billiard and the report shows what happened.
    """
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    n = labels.shape[1]
    z_floor, z_ceil, diam, excl = system.frame()
    expected = system.expected_reflections
    patches = system.patches

    m = labels.shape[0]
    status = np.zeros(m, dtype=np.int8)
    bounces = np.zeros(m, dtype=np.int32)
    hit_patch = np.full((m, max_bounces), -1, dtype=np.int32)
    verts = np.full((m, max_bounces, n + 1), np.nan)
    exit_label = np.full((m, n), np.nan)
    exit_dir = np.full((m, n + 1), np.nan)
    tau = np.full(m, np.nan)
    sup_counts = np.zeros(m, dtype=np.int32)
    messages = [None] * m

    up = np.zeros(n + 1)
    up[n] = 1.0

    for k in range(m):
        p = np.concatenate([labels[k], [z_floor]])
        d = up.copy()
        total = 0.0
        nb = 0
        nsup = 0
        failed = None
        while True:
            best_t, best_i = np.inf, -1
            try:
                for i, patch in enumerate(patches):
                    t = first_hit(patch, p, d, t_lo=excl)
                    if t is not None and t < best_t:
                        best_t, best_i = t, i
            except NumericalFailure as exc:
                failed = str(exc)
                break
            if best_i < 0:
                break
            patch = patches[best_i]
            p = p + best_t * d
            total += best_t
            if nb < max_bounces:
                verts[k, nb] = p
                hit_patch[k, nb] = best_i
            g = np.atleast_1d(patch.height.gradient(p[:n]))
            normal = np.concatenate([-g, [1.0]])
            d = d - (2.0 * float(d @ normal) / float(normal @ normal)) * normal
            d = d / np.linalg.norm(d)
            nb += 1
            if nb > expected:
                nsup += 1
            if nb >= max_bounces:
                break

        bounces[k] = nb
        sup_counts[k] = nsup
        exit_dir[k] = d
        if failed is not None:
            status[k] = STATUS_NUMERICAL
            messages[k] = failed
            continue
        if nb >= max_bounces:
            status[k] = STATUS_MAX_BOUNCES
            continue
        if d[n] > 1e-15:
            t_up = (z_ceil - p[n]) / d[n]
            q = p + t_up * d
            exit_label[k] = q[:n]
            tau[k] = (total + t_up) - (z_ceil - z_floor)
        vertical = np.linalg.norm(d - up) <= 1e-10
        if nsup:
            status[k] = STATUS_SUPERFLUOUS
        elif vertical and nb == expected:
            status[k] = STATUS_OK
        else:
            status[k] = STATUS_ESCAPED

    return {
        "status": status,
        "bounces": bounces,
        "hit_patch": hit_patch,
        "vertices": verts,
        "exit_label": exit_label,
        "exit_direction": exit_dir,
        "tau": tau,
        "superfluous_count": sup_counts,
        "messages": messages,
        "z_floor": z_floor,
        "z_ceil": z_ceil,
    }
