"""Compiled tracer kernel.

Operates on the flat descriptors produced by ``tracing.descriptors`` and
mirrors ``tracing._pure.trace_batch`` step for step: same marching rule,
same bisection/Newton refinement, same status classification. Image-side
heights (field kind 1) are evaluated by damped Newton inversion of the
beam map x + grad G(x), warm-started along each segment.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt

cnp.import_array()

cdef enum:
    PMAX = 40          # power buffer: supports polynomial degree <= 39
    MAX_MARCH = 200000

cdef enum:
    ERR_NONE = 0
    ERR_MARCH = 1
    ERR_INVERT = 2


cdef double _poly_val(const double* tab, int deg, double u, double v) noexcept nogil:
    cdef double pv[PMAX]
    cdef int i, j, n = deg + 1
    cdef double acc = 0.0, row, pu = 1.0
    pv[0] = 1.0
    for j in range(1, n):
        pv[j] = pv[j - 1] * v
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += tab[i * n + j] * pv[j]
        acc += pu * row
        pu *= u
    return acc


cdef int _field_eval(const double* fd, int kind, int ofs,
                     double qx, double qy, bint need_grad,
                     double* val, double* gx, double* gy,
                     double* wx, double* wy, int* wok) noexcept nogil:
    """Height (and gradient) of one patch at horizontal point q."""
    cdef int deg = <int> fd[ofs]
    cdef int s = (deg + 1) * (deg + 1)
    cdef double cx = fd[ofs + 1], cy = fd[ofs + 2]
    cdef double u, v
    if kind == 0:
        u = qx - cx
        v = qy - cy
        val[0] = _poly_val(fd + ofs + 3, deg, u, v)
        if need_grad:
            gx[0] = _poly_val(fd + ofs + 3 + s, deg, u, v)
            gy[0] = _poly_val(fd + ofs + 3 + 2 * s, deg, u, v)
        return ERR_NONE

    # kind 1: image-side height through the beam map of potential G
    cdef double c = fd[ofs + 3], h = fd[ofs + 4]
    cdef double sc = fd[ofs + 5], off = fd[ofs + 6]
    cdef double y1 = qx - fd[ofs + 7], y2 = qy - fd[ofs + 8]
    cdef double a1 = fd[ofs + 9], a2 = fd[ofs + 10]
    cdef const double* G = fd + ofs + 11
    cdef const double* G1 = G + s
    cdef const double* G2 = G + 2 * s
    cdef const double* G11 = G + 3 * s
    cdef const double* G12 = G + 4 * s
    cdef const double* G22 = G + 5 * s

    cdef double scale = 1.0 + max(fabs(y1), fabs(y2))
    cdef double tol = 1e-13 * scale
    cdef double x1, x2, g1, g2, r1, r2, err
    cdef double h11, h12, h22, j11, j12, j22, det, s1, s2, lam
    cdef double t1, t2, rt1, rt2, et, gg1, gg2
    cdef int it, halv, attempt
    cdef bint done

    # starts: warm point from the previous segment step, then the anchored
    # guess y - a (the pair's typical displacement), then plain y
    done = False
    for attempt in range(3):
        if attempt == 0:
            if not wok[0]:
                continue
            x1 = wx[0]; x2 = wy[0]
        elif attempt == 1:
            x1 = y1 - a1; x2 = y2 - a2
        else:
            if a1 == 0.0 and a2 == 0.0:
                break
            x1 = y1; x2 = y2
        done = False
        u = x1 - cx; v = x2 - cy
        g1 = _poly_val(G1, deg, u, v)
        g2 = _poly_val(G2, deg, u, v)
        r1 = x1 + g1 - y1
        r2 = x2 + g2 - y2
        err = sqrt(r1 * r1 + r2 * r2)
        if err <= tol:
            done = True
        for it in range(60):
            if done:
                break
            h11 = _poly_val(G11, deg, u, v)
            h12 = _poly_val(G12, deg, u, v)
            h22 = _poly_val(G22, deg, u, v)
            j11 = 1.0 + h11; j12 = h12; j22 = 1.0 + h22
            det = j11 * j22 - j12 * j12
            if fabs(det) < 1e-300:
                break
            s1 = (j22 * r1 - j12 * r2) / det
            s2 = (-j12 * r1 + j11 * r2) / det
            lam = 1.0
            for halv in range(8):
                t1 = x1 - lam * s1; t2 = x2 - lam * s2
                u = t1 - cx; v = t2 - cy
                gg1 = _poly_val(G1, deg, u, v)
                gg2 = _poly_val(G2, deg, u, v)
                rt1 = t1 + gg1 - y1
                rt2 = t2 + gg2 - y2
                et = sqrt(rt1 * rt1 + rt2 * rt2)
                if et <= err * (1.0 - 0.25 * lam):
                    break
                lam *= 0.5
            x1 = x1 - lam * s1; x2 = x2 - lam * s2
            u = x1 - cx; v = x2 - cy
            g1 = _poly_val(G1, deg, u, v)
            g2 = _poly_val(G2, deg, u, v)
            r1 = x1 + g1 - y1
            r2 = x2 + g2 - y2
            err = sqrt(r1 * r1 + r2 * r2)
            if err <= tol:
                done = True
        if done:
            break
    if not done:
        return ERR_INVERT

    wx[0] = x1; wy[0] = x2; wok[0] = 1
    val[0] = sc * (_poly_val(G, deg, u, v) / c + h
                   + (g1 * g1 + g2 * g2 - c * c) / (2.0 * c)) + off
    if need_grad:
        gx[0] = sc * g1 / c
        gy[0] = sc * g2 / c
    return ERR_NONE


cdef bint _dom_contains(const double* dd, int kind, int ofs,
                        double qx, double qy, double tol) noexcept nogil:
    cdef int m, i
    cdef double dx, dy, r
    if kind == 0:
        dx = qx - dd[ofs]; dy = qy - dd[ofs + 1]
        r = dd[ofs + 2] + tol
        return dx * dx + dy * dy <= r * r
    m = <int> dd[ofs]
    for i in range(m):
        dx = qx - dd[ofs + 1 + 2 * i]
        dy = qy - dd[ofs + 2 + 2 * i]
        if dx * dd[ofs + 1 + 2 * m + 2 * i] + dy * dd[ofs + 2 + 2 * m + 2 * i] > tol:
            return False
    return True


cdef bint _dom_clip(const double* dd, int kind, int ofs,
                    double px, double py, double dx, double dy,
                    double pad, double* t0, double* t1) noexcept nogil:
    cdef double a, b, c0, disc, s, qx, qy, num, den, t
    cdef int m, i
    if kind == 0:
        qx = px - dd[ofs]; qy = py - dd[ofs + 1]
        s = dd[ofs + 2] + pad
        a = dx * dx + dy * dy
        if a < 1e-300:
            if qx * qx + qy * qy <= s * s:
                t0[0] = -INFINITY; t1[0] = INFINITY
                return True
            return False
        b = 2.0 * (qx * dx + qy * dy)
        c0 = qx * qx + qy * qy - s * s
        disc = b * b - 4.0 * a * c0
        if disc <= 0.0:
            return False
        disc = sqrt(disc)
        t0[0] = (-b - disc) / (2.0 * a)
        t1[0] = (-b + disc) / (2.0 * a)
        return True
    m = <int> dd[ofs]
    t0[0] = -INFINITY; t1[0] = INFINITY
    for i in range(m):
        num = ((px - dd[ofs + 1 + 2 * i]) * dd[ofs + 1 + 2 * m + 2 * i]
               + (py - dd[ofs + 2 + 2 * i]) * dd[ofs + 2 + 2 * m + 2 * i]) - pad
        den = dx * dd[ofs + 1 + 2 * m + 2 * i] + dy * dd[ofs + 2 + 2 * m + 2 * i]
        if fabs(den) < 1e-300:
            if num > 0.0:
                return False
            continue
        t = -num / den
        if den > 0.0:
            if t < t1[0]:
                t1[0] = t
        else:
            if t > t0[0]:
                t0[0] = t
        if t0[0] >= t1[0]:
            return False
    return True


cdef double _first_hit(const double* dd, const int* dkind, const int* dofs,
                       const double* fd, const int* fkind, const int* fofs,
                       const double* zlo, const double* zhi,
                       const double* lip, const double* pdiam, int i,
                       double px, double py, double pz,
                       double dx, double dy, double dz,
                       double t_lo, double* warm, int* wok,
                       int* err) noexcept nogil:
    cdef double diam = pdiam[i]
    cdef double pad = 1e-6 * (1.0 + diam)
    cdef double memb = 1e-12 * (1.0 + diam)
    cdef double horiz = sqrt(dx * dx + dy * dy)
    cdef double val, gx, gy, t, a, b, za, zb, L, g, g_next, t_next, step
    cdef double min_step, ta, tb, ga, gb, tm, gm, tol_t, dgdt, t_new, qx, qy
    cdef double* wx = warm + 2 * i
    cdef double* wy = warm + 2 * i + 1
    cdef int* wk = wok + i
    cdef int rc, it, bit

    if horiz < 1e-14:
        if not _dom_contains(dd, dkind[i], dofs[i], px, py, memb):
            return INFINITY
        rc = _field_eval(fd, fkind[i], fofs[i], px, py, False,
                         &val, &gx, &gy, wx, wy, wk)
        if rc != ERR_NONE:
            err[0] = rc
            return INFINITY
        t = (val - pz) / dz
        if t <= t_lo:
            return INFINITY
        return t

    if not _dom_clip(dd, dkind[i], dofs[i], px, py, dx, dy, pad, &a, &b):
        return INFINITY
    if t_lo > a:
        a = t_lo
    if not a < b:
        return INFINITY
    za = pz + a * dz; zb = pz + b * dz
    if max(za, zb) < zlo[i] or min(za, zb) > zhi[i]:
        return INFINITY

    L = lip[i]
    min_step = 1e-13 * (1.0 + diam)
    t = a
    rc = _field_eval(fd, fkind[i], fofs[i], px + t * dx, py + t * dy, False,
                     &val, &gx, &gy, wx, wy, wk)
    if rc != ERR_NONE:
        err[0] = rc
        return INFINITY
    g = (pz + t * dz) - val
    if g == 0.0:
        t += min_step
        rc = _field_eval(fd, fkind[i], fofs[i], px + t * dx, py + t * dy, False,
                         &val, &gx, &gy, wx, wy, wk)
        if rc != ERR_NONE:
            err[0] = rc
            return INFINITY
        g = (pz + t * dz) - val

    for it in range(MAX_MARCH):
        if t >= b:
            return INFINITY
        step = fabs(g) / (1.0 + L)
        if step < min_step:
            step = min_step
        t_next = t + step
        if t_next > b:
            t_next = b
        rc = _field_eval(fd, fkind[i], fofs[i], px + t_next * dx, py + t_next * dy,
                         False, &val, &gx, &gy, wx, wy, wk)
        if rc != ERR_NONE:
            err[0] = rc
            return INFINITY
        g_next = (pz + t_next * dz) - val
        if g * g_next <= 0.0 and g != g_next:
            # bisection, then one Newton polish
            ta = t; tb = t_next; ga = g; gb = g_next
            tol_t = 1e-13 * (1.0 + diam + fabs(tb))
            for bit in range(200):
                if tb - ta <= tol_t:
                    break
                tm = 0.5 * (ta + tb)
                rc = _field_eval(fd, fkind[i], fofs[i], px + tm * dx, py + tm * dy,
                                 False, &val, &gx, &gy, wx, wy, wk)
                if rc != ERR_NONE:
                    err[0] = rc
                    return INFINITY
                gm = (pz + tm * dz) - val
                if gm == 0.0:
                    ta = tm; tb = tm
                    break
                if (ga < 0.0) == (gm < 0.0):
                    ta = tm; ga = gm
                else:
                    tb = tm; gb = gm
            tm = 0.5 * (ta + tb)
            rc = _field_eval(fd, fkind[i], fofs[i], px + tm * dx, py + tm * dy,
                             True, &val, &gx, &gy, wx, wy, wk)
            if rc != ERR_NONE:
                err[0] = rc
                return INFINITY
            dgdt = dz - (gx * dx + gy * dy)
            if dgdt != 0.0:
                gm = (pz + tm * dz) - val
                t_new = tm - gm / dgdt
                if ta - tol_t <= t_new <= tb + tol_t:
                    tm = t_new
            qx = px + tm * dx; qy = py + tm * dy
            if _dom_contains(dd, dkind[i], dofs[i], qx, qy, memb):
                return tm
        t = t_next
        g = g_next
    err[0] = ERR_MARCH
    return INFINITY


def trace_batch(desc, labels, int max_bounces=16):
    """Batch tracer over a lowered system descriptor. Same contract as the
    reference backend, plus a ``message_code`` array (0 none, 1 march
    budget, 2 inversion failure)."""
    labels = np.ascontiguousarray(np.atleast_2d(np.asarray(labels, dtype=np.float64)))
    if labels.shape[1] != 2:
        raise ValueError("compiled tracer expects 2-d entry labels")

    cdef double[:, ::1] lab = labels
    cdef int m = lab.shape[0]
    cdef int n = <int> desc["dom_kind"].shape[0]

    cdef int[::1] dkind = np.ascontiguousarray(desc["dom_kind"], dtype=np.int32)
    cdef int[::1] dofs = np.ascontiguousarray(desc["dom_ofs"], dtype=np.int32)
    cdef double[::1] ddata = np.ascontiguousarray(desc["dom_data"], dtype=np.float64)
    cdef int[::1] fkind = np.ascontiguousarray(desc["f_kind"], dtype=np.int32)
    cdef int[::1] fofs = np.ascontiguousarray(desc["f_ofs"], dtype=np.int32)
    cdef double[::1] fdata = np.ascontiguousarray(desc["f_data"], dtype=np.float64)
    cdef double[::1] zlo = np.ascontiguousarray(desc["zlo"], dtype=np.float64)
    cdef double[::1] zhi = np.ascontiguousarray(desc["zhi"], dtype=np.float64)
    cdef double[::1] lip = np.ascontiguousarray(desc["lip"], dtype=np.float64)
    cdef double[::1] pdiam = np.ascontiguousarray(desc["pdiam"], dtype=np.float64)
    cdef int expected = <int> desc["expected"]
    cdef double z_floor = desc["z_floor"]
    cdef double z_ceil = desc["z_ceil"]
    cdef double excl = desc["excl"]

    status_arr = np.zeros(m, dtype=np.int8)
    bounce_arr = np.zeros(m, dtype=np.int32)
    hitp_arr = np.full((m, max_bounces), -1, dtype=np.int32)
    verts_arr = np.full((m, max_bounces, 3), np.nan)
    exitl_arr = np.full((m, 2), np.nan)
    exitd_arr = np.full((m, 3), np.nan)
    tau_arr = np.full(m, np.nan)
    sup_arr = np.zeros(m, dtype=np.int32)
    code_arr = np.zeros(m, dtype=np.int8)

    cdef signed char[::1] status = status_arr
    cdef int[::1] bounces = bounce_arr
    cdef int[:, ::1] hitp = hitp_arr
    cdef double[:, :, ::1] verts = verts_arr
    cdef double[:, ::1] exitl = exitl_arr
    cdef double[:, ::1] exitd = exitd_arr
    cdef double[::1] tau = tau_arr
    cdef int[::1] sup = sup_arr
    cdef signed char[::1] code = code_arr

    warm_arr = np.zeros((n, 2))
    wok_arr = np.zeros(n, dtype=np.int32)
    cdef double[:, ::1] warm = warm_arr
    cdef int[::1] wok = wok_arr

    cdef int k, i, nb, nsup, best_i, err
    cdef double px, py, pz, dx, dy, dz, total, t, best_t
    cdef double val, gx, gy, nn, dot, norm, t_up
    cdef bint vertical

    with nogil:
        for k in range(m):
            px = lab[k, 0]; py = lab[k, 1]; pz = z_floor
            dx = 0.0; dy = 0.0; dz = 1.0
            total = 0.0
            nb = 0
            nsup = 0
            err = ERR_NONE
            for i in range(n):
                wok[i] = 0

            while True:
                best_t = INFINITY
                best_i = -1
                for i in range(n):
                    t = _first_hit(&ddata[0], &dkind[0], &dofs[0],
                                   &fdata[0], &fkind[0], &fofs[0],
                                   &zlo[0], &zhi[0], &lip[0], &pdiam[0], i,
                                   px, py, pz, dx, dy, dz, excl,
                                   &warm[0, 0], &wok[0], &err)
                    if err != ERR_NONE:
                        break
                    if t < best_t:
                        best_t = t
                        best_i = i
                if err != ERR_NONE or best_i < 0:
                    break
                px += best_t * dx; py += best_t * dy; pz += best_t * dz
                total += best_t
                if nb < max_bounces:
                    verts[k, nb, 0] = px
                    verts[k, nb, 1] = py
                    verts[k, nb, 2] = pz
                    hitp[k, nb] = best_i
                i = best_i
                if _field_eval(&fdata[0], fkind[i], fofs[i], px, py, True,
                               &val, &gx, &gy, &warm[i, 0], &warm[i, 1],
                               &wok[i]) != ERR_NONE:
                    err = ERR_INVERT
                    break
                # reflect across the upward normal (-gx, -gy, 1)
                nn = gx * gx + gy * gy + 1.0
                dot = -dx * gx - dy * gy + dz
                dx = dx + (2.0 * dot / nn) * gx
                dy = dy + (2.0 * dot / nn) * gy
                dz = dz - (2.0 * dot / nn)
                norm = sqrt(dx * dx + dy * dy + dz * dz)
                dx /= norm; dy /= norm; dz /= norm
                nb += 1
                if nb > expected:
                    nsup += 1
                if nb >= max_bounces:
                    break

            bounces[k] = nb
            sup[k] = nsup
            exitd[k, 0] = dx; exitd[k, 1] = dy; exitd[k, 2] = dz
            if err != ERR_NONE:
                status[k] = 4
                code[k] = err
                continue
            if nb >= max_bounces:
                status[k] = 3
                continue
            if dz > 1e-15:
                t_up = (z_ceil - pz) / dz
                exitl[k, 0] = px + t_up * dx
                exitl[k, 1] = py + t_up * dy
                tau[k] = (total + t_up) - (z_ceil - z_floor)
            vertical = sqrt(dx * dx + dy * dy + (dz - 1.0) * (dz - 1.0)) <= 1e-10
            if nsup > 0:
                status[k] = 2
            elif vertical and nb == expected:
                status[k] = 0
            else:
                status[k] = 1

    return {
        "status": status_arr,
        "bounces": bounce_arr,
        "hit_patch": hitp_arr,
        "vertices": verts_arr,
        "exit_label": exitl_arr,
        "exit_direction": exitd_arr,
        "tau": tau_arr,
        "superfluous_count": sup_arr,
        "message_code": code_arr,
        "z_floor": z_floor,
        "z_ceil": z_ceil,
    }
