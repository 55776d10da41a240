"""Scalar height fields over planar domains.

Three storage kinds: polynomial coefficient tables (exact derivatives),
sampled grids with bicubic spline interpolation (continuous Hessians), and
composites (affine wrappers, sums). ``SecondMirrorHeight`` is the image-side
mirror height of a two-mirror pair, evaluated lazily through Newton inversion
of the beam map so no resampling error ever enters the optics.

All fields support batched ``value``, ``gradient``, ``hessian`` in dimension
1 or 2.
"""

from __future__ import annotations

import numpy as np

from .errors import InversionError


def _pts(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != dim:
        raise ValueError(f"expected points in R^{dim}, got shape {x.shape}")
    return x, single


def _powers(u, n):
    """Column-stacked powers u^0 .. u^{n-1}."""
    out = np.empty((u.shape[0], n))
    out[:, 0] = 1.0
    for k in range(1, n):
        out[:, k] = out[:, k - 1] * u
    return out


class ScalarField:
    dim = 2

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError


class PolynomialField(ScalarField):
    """Polynomial in (x - center); coefficient table C[i] or C[i, j].

    The expansion center makes translation exact: moving the field never
    touches the table, so no precision is lost to re-expansion.
    """

    def __init__(self, coeffs, center=None, dim=None):
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        self.coeffs = coeffs
        self.dim = coeffs.ndim if dim is None else dim
        if coeffs.ndim != self.dim:
            raise ValueError("coefficient table rank must equal dimension")
        if center is None:
            center = np.zeros(self.dim)
        self.center = np.asarray(center, dtype=float)
        self._dtabs = None

    @property
    def degree(self):
        nz = np.argwhere(np.abs(self.coeffs) > 0)
        if len(nz) == 0:
            return 0
        return int(nz.sum(axis=1).max())

    def _deriv_tables(self):
        if self._dtabs is None:
            if self.dim == 1:
                d1 = _dx1(self.coeffs)
                self._dtabs = ((d1,), ((_dx1(d1),),))
            else:
                gx = poly_dx(self.coeffs)
                gy = poly_dy(self.coeffs)
                self._dtabs = (
                    (gx, gy),
                    ((poly_dx(gx), poly_dy(gx)), (poly_dx(gy), poly_dy(gy))),
                )
        return self._dtabs

    def _eval_table(self, tab, x):
        if self.dim == 1:
            u = x[:, 0] - self.center[0]
            return _powers(u, tab.shape[0]) @ tab
        u = x[:, 0] - self.center[0]
        v = x[:, 1] - self.center[1]
        U = _powers(u, tab.shape[0])
        V = _powers(v, tab.shape[1])
        return np.einsum("mi,ij,mj->m", U, tab, V)

    def value(self, x):
        x, single = _pts(x, self.dim)
        out = self._eval_table(self.coeffs, x)
        return float(out[0]) if single else out

    def gradient(self, x):
        x, single = _pts(x, self.dim)
        grads, _ = self._deriv_tables()
        out = np.column_stack([self._eval_table(t, x) for t in grads])
        return out[0] if single else out

    def hessian(self, x):
        x, single = _pts(x, self.dim)
        _, hess = self._deriv_tables()
        n = self.dim
        out = np.empty((x.shape[0], n, n))
        for i in range(n):
            for j in range(n):
                out[:, i, j] = self._eval_table(hess[i][j], x)
        return out[0] if single else out

    # -- exact algebra (tables share the same center) --

    def scale(self, k):
        return PolynomialField(self.coeffs * float(k), self.center)

    def plus_const(self, a):
        c = self.coeffs.copy()
        c[(0,) * self.dim] += float(a)
        return PolynomialField(c, self.center)

    def plus_linear(self, a):
        """Add the global linear form a . x (exact at any center)."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        c = self.coeffs.copy()
        if self.dim == 1:
            if c.shape[0] < 2:
                c = np.pad(c, (0, 2 - c.shape[0]))
            c[0] += a[0] * self.center[0]
            c[1] += a[0]
        else:
            shape = (max(2, c.shape[0]), max(2, c.shape[1]))
            c = np.pad(c, ((0, shape[0] - c.shape[0]), (0, shape[1] - c.shape[1])))
            c[0, 0] += float(a @ self.center)
            c[1, 0] += a[0]
            c[0, 1] += a[1]
        return PolynomialField(c, self.center)

    def translate(self, shift):
        """The field x -> self(x - shift); exact (only the center moves)."""
        return PolynomialField(self.coeffs.copy(), self.center + np.asarray(shift, dtype=float))

    def __add__(self, other):
        if not isinstance(other, PolynomialField):
            return SumField([self, other])
        if not np.allclose(other.center, self.center, rtol=0, atol=0):
            other = other.recentre(self.center)
        a, b = self.coeffs, other.coeffs
        if self.dim == 1:
            n = max(a.shape[0], b.shape[0])
            c = np.zeros(n)
            c[: a.shape[0]] += a
            c[: b.shape[0]] += b
        else:
            n = (max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1]))
            c = np.zeros(n)
            c[: a.shape[0], : a.shape[1]] += a
            c[: b.shape[0], : b.shape[1]] += b
        return PolynomialField(c, self.center)

    def recentre(self, new_center):
        """Re-expand about a new center (binomial shift; exact in exact
        arithmetic, loses relative precision ~ (|shift|/scale)^degree)."""
        shift = np.asarray(new_center, dtype=float) - self.center
        if self.dim == 1:
            c = _shift_1d(self.coeffs, shift[0])
        else:
            c = _shift_2d(self.coeffs, shift[0], shift[1])
        return PolynomialField(c, np.asarray(new_center, dtype=float))


def constant_field(a, dim=2):
    shape = (1,) if dim == 1 else (1, 1)
    return PolynomialField(np.full(shape, float(a)), np.zeros(dim))


def linear_field(a, const=0.0, dim=2, center=None):
    f = constant_field(const, dim)
    if center is not None:
        f = PolynomialField(f.coeffs, np.asarray(center, dtype=float))
    return f.plus_linear(np.atleast_1d(a))


def half_norm_sq(dim=2, factor=0.5, center=None):
    """factor * |x|^2 expressed about ``center`` (exact expansion)."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    if dim == 1:
        tab = np.array([factor * c[0] ** 2, 2 * factor * c[0], factor])
    else:
        tab = np.zeros((3, 3))
        tab[0, 0] = factor * float(c @ c)
        tab[1, 0] = 2 * factor * c[0]
        tab[0, 1] = 2 * factor * c[1]
        tab[2, 0] = factor
        tab[0, 2] = factor
    return PolynomialField(tab, c)


class GridField(ScalarField):
    """Sampled values on a regular grid, bicubic-spline interpolated.

    The spline flavor keeps second derivatives continuous, which the mirror
    normals and Newton solves rely on.
    """

    def __init__(self, x0, x1, y0, y1, values):
        from scipy.interpolate import RectBivariateSpline

        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or min(values.shape) < 4:
            raise ValueError("grid needs at least 4x4 samples")
        self.x0, self.x1, self.y0, self.y1 = map(float, (x0, x1, y0, y1))
        self.values = values
        xs = np.linspace(self.x0, self.x1, values.shape[0])
        ys = np.linspace(self.y0, self.y1, values.shape[1])
        self._spl = RectBivariateSpline(xs, ys, values, kx=3, ky=3)

    @classmethod
    def sample(cls, fn, bbox, nx=129, ny=129):
        (x0, y0), (x1, y1) = bbox
        xs = np.linspace(x0, x1, nx)
        ys = np.linspace(y0, y1, ny)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        vals = np.asarray(fn(pts), dtype=float).reshape(nx, ny)
        return cls(x0, x1, y0, y1, vals)

    def _ev(self, x, dx, dy):
        return self._spl.ev(x[:, 0], x[:, 1], dx=dx, dy=dy)

    def value(self, x):
        x, single = _pts(x, 2)
        out = self._ev(x, 0, 0)
        return float(out[0]) if single else out

    def gradient(self, x):
        x, single = _pts(x, 2)
        out = np.column_stack([self._ev(x, 1, 0), self._ev(x, 0, 1)])
        return out[0] if single else out

    def hessian(self, x):
        x, single = _pts(x, 2)
        out = np.empty((x.shape[0], 2, 2))
        out[:, 0, 0] = self._ev(x, 2, 0)
        out[:, 0, 1] = out[:, 1, 0] = self._ev(x, 1, 1)
        out[:, 1, 1] = self._ev(x, 0, 2)
        return out[0] if single else out


class GridField1D(ScalarField):
    dim = 1

    def __init__(self, x0, x1, values):
        from scipy.interpolate import CubicSpline

        values = np.asarray(values, dtype=float)
        self.x0, self.x1 = float(x0), float(x1)
        self.values = values
        self._spl = CubicSpline(np.linspace(self.x0, self.x1, len(values)), values)

    def value(self, x):
        x, single = _pts(x, 1)
        out = self._spl(x[:, 0])
        return float(out[0]) if single else out

    def gradient(self, x):
        x, single = _pts(x, 1)
        out = self._spl(x[:, 0], 1)[:, None]
        return out[0] if single else out

    def hessian(self, x):
        x, single = _pts(x, 1)
        out = self._spl(x[:, 0], 2)[:, None, None]
        return out[0] if single else out


class AffineField(ScalarField):
    """scale * base(x - shift) + offset + linear . x"""

    def __init__(self, base, scale=1.0, offset=0.0, shift=None, linear=None):
        self.base = base
        self.dim = base.dim
        self.scale = float(scale)
        self.offset = float(offset)
        self.shift = None if shift is None else np.asarray(shift, dtype=float)
        self.linear = None if linear is None else np.atleast_1d(np.asarray(linear, dtype=float))

    def _arg(self, x):
        return x if self.shift is None else x - self.shift

    def value(self, x):
        x, single = _pts(x, self.dim)
        out = self.scale * np.atleast_1d(self.base.value(self._arg(x))) + self.offset
        if self.linear is not None:
            out = out + x @ self.linear
        return float(out[0]) if single else out

    def gradient(self, x):
        x, single = _pts(x, self.dim)
        out = self.scale * np.atleast_2d(self.base.gradient(self._arg(x)))
        if self.linear is not None:
            out = out + self.linear
        return out[0] if single else out

    def hessian(self, x):
        x, single = _pts(x, self.dim)
        out = self.scale * self.base.hessian(self._arg(x)).reshape(x.shape[0], self.dim, self.dim)
        return out[0] if single else out


class SumField(ScalarField):
    def __init__(self, terms):
        self.terms = list(terms)
        self.dim = self.terms[0].dim

    def value(self, x):
        x, single = _pts(x, self.dim)
        out = sum(np.atleast_1d(t.value(x)) for t in self.terms)
        return float(out[0]) if single else out

    def gradient(self, x):
        x, single = _pts(x, self.dim)
        out = sum(np.atleast_2d(t.gradient(x)) for t in self.terms)
        return out[0] if single else out

    def hessian(self, x):
        x, single = _pts(x, self.dim)
        out = sum(t.hessian(x).reshape(x.shape[0], self.dim, self.dim) for t in self.terms)
        return out[0] if single else out


class SecondMirrorHeight(ScalarField):
    """Image-side mirror height of a two-mirror pair.

    Given the potential G, path constant c and base height h of the pair,
    the height over the image point y = x + grad(G)(x) is

        G(x)/c + h + (|grad G(x)|^2 - c^2) / (2c),

    its gradient is grad(G)(x)/c and its Hessian H (I + H)^{-1} / c with
    H = Hess(G)(x). Evaluation inverts the beam map by damped Newton, so
    the surface is exact wherever the map is invertible.
    """

    _TOL = 1e-13
    _MAX_ITER = 60

    def __init__(self, potential, c, h=0.0, anchor=None):
        self.potential = potential
        self.dim = potential.dim
        self.c = float(c)
        self.h = float(h)
        # typical displacement of the pair; Newton starts at y - anchor so
        # the solve stays in the basin of the footprint-side preimage
        self.anchor = None if anchor is None else np.asarray(anchor, dtype=float)
        if not self.c > 0:
            raise ValueError("path constant must be positive")

    def forward(self, x):
        x, single = _pts(x, self.dim)
        out = x + np.atleast_2d(self.potential.gradient(x))
        return out[0] if single else out

    def _newton(self, y, x, scale):
        G = self.potential
        res = x + np.atleast_2d(G.gradient(x)) - y
        err = np.linalg.norm(res, axis=1)
        active = err > self._TOL * scale
        for _ in range(self._MAX_ITER):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            xi = x[idx]
            H = G.hessian(xi).reshape(len(idx), self.dim, self.dim)
            J = H + np.eye(self.dim)
            step = _solve_small(J, res[idx])
            lam = np.ones(len(idx))
            cur = err[idx]
            for _ in range(8):
                trial = xi - lam[:, None] * step
                rt = trial + np.atleast_2d(G.gradient(trial)) - y[idx]
                et = np.linalg.norm(rt, axis=1)
                bad = et > cur * (1.0 - 0.25 * lam)
                if not bad.any():
                    break
                lam[bad] *= 0.5
            x[idx] = xi - lam[:, None] * step
            res[idx] = x[idx] + np.atleast_2d(G.gradient(x[idx])) - y[idx]
            err[idx] = np.linalg.norm(res[idx], axis=1)
            active = err > self._TOL * scale
        return x, err

    def invert(self, y, guess=None):
        """Solve x + grad(G)(x) = y by damped Newton, batched."""
        y, single = _pts(y, self.dim)
        if guess is not None:
            starts = [np.broadcast_to(
                np.atleast_2d(np.asarray(guess, dtype=float)), y.shape
            ).copy()]
        elif self.anchor is not None:
            starts = [y - self.anchor, y.copy()]
        else:
            starts = [y.copy()]
        scale = 1.0 + np.abs(y).max()
        x, err = self._newton(y, starts[0], scale)
        for alt in starts[1:]:
            bad = err > self._TOL * scale
            if not bad.any():
                break
            xb, eb = self._newton(y[bad], alt[bad], scale)
            take = eb < err[bad]
            idx = np.nonzero(bad)[0][take]
            x[idx] = xb[take]
            err[idx] = eb[take]
        active = err > self._TOL * scale
        if active.any():
            raise InversionError(
                f"beam-map inversion failed for {int(active.sum())} of {len(y)} points"
            )
        return x[0] if single else x

    def value(self, y):
        y, single = _pts(y, self.dim)
        x = np.atleast_2d(self.invert(y))
        g = np.atleast_2d(self.potential.gradient(x))
        val = np.atleast_1d(self.potential.value(x)) / self.c + self.h
        val = val + (np.sum(g * g, axis=1) - self.c**2) / (2.0 * self.c)
        return float(val[0]) if single else val

    def gradient(self, y):
        y, single = _pts(y, self.dim)
        x = np.atleast_2d(self.invert(y))
        out = np.atleast_2d(self.potential.gradient(x)) / self.c
        return out[0] if single else out

    def hessian(self, y):
        y, single = _pts(y, self.dim)
        x = np.atleast_2d(self.invert(y))
        H = self.potential.hessian(x).reshape(y.shape[0], self.dim, self.dim)
        eye = np.eye(self.dim)
        out = np.empty_like(H)
        for k in range(len(out)):
            out[k] = H[k] @ np.linalg.inv(eye + H[k]) / self.c
        return out[0] if single else out


def _solve_small(J, r):
    """Solve J step = r for stacks of 1x1 or 2x2 systems."""
    if J.shape[1] == 1:
        return r / J[:, 0, 0][:, None]
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    tiny = np.abs(det) < 1e-300
    if tiny.any():
        raise InversionError("singular Jacobian in beam-map inversion")
    out = np.empty_like(r)
    out[:, 0] = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
    out[:, 1] = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / det
    return out


# -- polynomial table helpers (dense tables, moderate degrees) --


def poly_dx(tab):
    if tab.shape[0] <= 1:
        return np.zeros((1, tab.shape[1]))
    return tab[1:, :] * np.arange(1, tab.shape[0])[:, None]


def poly_dy(tab):
    if tab.shape[1] <= 1:
        return np.zeros((tab.shape[0], 1))
    return tab[:, 1:] * np.arange(1, tab.shape[1])[None, :]


def _dx1(vec):
    if vec.shape[0] <= 1:
        return np.zeros(1)
    return vec[1:] * np.arange(1, vec.shape[0])


def poly_mul(a, b):
    """Product of two 2-D coefficient tables."""
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            if a[i, j] != 0.0:
                out[i : i + b.shape[0], j : j + b.shape[1]] += a[i, j] * b
    return out


def poly_trim(tab, tol=0.0):
    """Drop all-(near-)zero trailing rows/columns."""
    keep_r = tab.shape[0]
    while keep_r > 1 and np.all(np.abs(tab[keep_r - 1]) <= tol):
        keep_r -= 1
    keep_c = tab.shape[1]
    while keep_c > 1 and np.all(np.abs(tab[:keep_r, keep_c - 1]) <= tol):
        keep_c -= 1
    return tab[:keep_r, :keep_c].copy()


def _shift_1d(c, s):
    n = c.shape[0]
    out = np.zeros(n)
    binom = np.zeros((n, n))
    for i in range(n):
        binom[i, 0] = 1.0
        for j in range(1, i + 1):
            binom[i, j] = binom[i - 1, j - 1] + binom[i - 1, j]
    for i in range(n):
        for k in range(i + 1):
            out[k] += c[i] * binom[i, k] * s ** (i - k)
    return out


def _shift_2d(c, sx, sy):
    rows = np.array([_shift_1d(c[i, :], sy) for i in range(c.shape[0])])
    return np.array([_shift_1d(rows[:, j], sx) for j in range(rows.shape[1])]).T
