"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``PHASEGAIN_NUMBA`` is not
set to ``0``. Both paths implement the same arithmetic; the test-suite
runs them against each other.
"""

import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("PHASEGAIN_NUMBA", "1") != "0"

__all__ = [
    "USE_NUMBA",
    "shell_points",
    "refine_extreme_angle",
    "refine_constrained_gain",
    "freq_response",
    "backend",
]


def backend():
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy path

def _shell_points_np(a, x):
    ax = a @ x
    z = np.sum(x.conj() * ax, axis=0)
    return np.stack([z.real, z.imag, np.sum(np.abs(ax) ** 2, axis=0)], axis=1)


def _freq_response_np(a, b, c, d, s):
    nx = a.shape[0]
    if nx == 0:
        return np.broadcast_to(d.astype(complex), (s.size,) + d.shape).copy()
    m = s[:, None, None] * np.eye(nx)[None] - a[None]
    sol = np.linalg.solve(m, np.broadcast_to(b.astype(complex), (s.size,) + b.shape))
    return d[None] + c[None] @ sol


def _angle_grad_np(a, x, rot):
    # ascent direction of angle(e^{-j rot} x^* A x) on the unit sphere, per column
    ax = a @ x
    ahx = a.conj().T @ x
    z = np.sum(x.conj() * ax, axis=0) * np.exp(-1j * rot)
    zz = z * np.exp(1j * rot)
    g = (1j / np.conj(zz)) * ahx - (1j / zz) * ax
    g = g - np.real(np.sum(x.conj() * g, axis=0)) * x
    return np.angle(z), g


def _gain_tangent_np(a, x):
    gx = a.conj().T @ (a @ x)
    h = np.real(np.sum(x.conj() * gx, axis=0))
    return h, gx - h * x


def _lift_np(a, x, r2, scale, iters=60):
    # push infeasible columns toward larger ||Ax|| (power-like retraction)
    for _ in range(iters):
        h, gt = _gain_tangent_np(a, x)
        bad = h < r2
        if not np.any(bad):
            break
        x[:, bad] = x[:, bad] + gt[:, bad] / max(scale, 1e-300)
        x /= np.linalg.norm(x, axis=0)
    return x


def _correct_np(a, x, r2, iters=6):
    for _ in range(iters):
        h, gt = _gain_tangent_np(a, x)
        bad = h < r2
        if not np.any(bad):
            break
        nrm = np.sum(np.abs(gt) ** 2, axis=0)
        step = np.where(bad, (r2 - h) / (2.0 * np.maximum(nrm, 1e-300)) * 1.01, 0.0)
        x = x + step * gt
        x /= np.linalg.norm(x, axis=0)
    return x


def _refine_angle_np(a, x0, r2, rot, sign, steps, r2_tol, scale):
    x = x0 / np.linalg.norm(x0, axis=0)
    if r2 > 0:
        x = _lift_np(a, x.copy(), r2 - r2_tol, scale)
    f, _ = _angle_grad_np(a, x, rot)
    f = sign * f
    h, _ = _gain_tangent_np(a, x)
    feas = h >= r2 - r2_tol
    eta = np.full(x.shape[1], 0.1)
    for _ in range(steps):
        _, g = _angle_grad_np(a, x, rot)
        g = sign * g
        h, gt = _gain_tangent_np(a, x)
        active = h <= r2 * (1.0 + 1e-6) + r2_tol
        inner = np.real(np.sum(g.conj() * gt, axis=0))
        nrm = np.maximum(np.sum(np.abs(gt) ** 2, axis=0), 1e-300)
        proj = active & (inner < 0) & (r2 > 0)
        g = np.where(proj, g - (inner / nrm) * gt, g)
        xt = x + eta * g
        xt /= np.linalg.norm(xt, axis=0)
        if r2 > 0:
            xt = _correct_np(a, xt, r2)
        ft, _ = _angle_grad_np(a, xt, rot)
        ft = sign * ft
        ht, _ = _gain_tangent_np(a, xt)
        ok = (ft > f) & (ht >= r2 - r2_tol)
        x = np.where(ok, xt, x)
        f = np.where(ok, ft, f)
        feas = feas | ok
        eta = np.where(ok, np.minimum(eta * 1.5, 1.0), eta * 0.5)
    return sign * f, feas, x


def _qf(m, x):
    return np.real(np.sum(x.conj() * (m @ x), axis=0))


def _refine_gain_np(g, m1, m2, x0, steps):
    # maximize x^*Gx on the unit sphere subject to x^*M1x >= 0 and x^*M2x >= 0
    x = x0 / np.linalg.norm(x0, axis=0)
    f, c1, c2 = _qf(g, x), _qf(m1, x), _qf(m2, x)
    eta = np.full(x.shape[1], 0.1)
    for _ in range(steps):
        grad = g @ x - f * x
        h1 = m1 @ x - c1 * x
        inner = np.real(np.sum(grad.conj() * h1, axis=0))
        nrm = np.maximum(np.sum(np.abs(h1) ** 2, axis=0), 1e-300)
        proj = (c1 <= 1e-6) & (inner < 0)
        grad = np.where(proj, grad - (inner / nrm) * h1, grad)
        xt = x + eta * grad
        xt /= np.linalg.norm(xt, axis=0)
        for _ in range(6):
            ct = _qf(m1, xt)
            bad = ct < 0
            if not np.any(bad):
                break
            ht = m1 @ xt - ct * xt
            nt = np.maximum(np.sum(np.abs(ht) ** 2, axis=0), 1e-300)
            xt = xt + np.where(bad, -ct / (2.0 * nt) * 1.01, 0.0) * ht
            xt /= np.linalg.norm(xt, axis=0)
        ft, c1t, c2t = _qf(g, xt), _qf(m1, xt), _qf(m2, xt)
        ok = (ft > f) & (c1t >= 0) & (c2t >= 0)
        x = np.where(ok, xt, x)
        f = np.where(ok, ft, f)
        c1 = np.where(ok, c1t, c1)
        c2 = np.where(ok, c2t, c2)
        eta = np.where(ok, np.minimum(eta * 1.5, 1.0), eta * 0.5)
    return f, (c1 >= 0) & (c2 >= 0), x


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _shell_points_nb(a, x):
        n, m = x.shape
        out = np.empty((m, 3))
        for k in range(m):
            z = 0j
            h = 0.0
            for i in range(n):
                axi = 0j
                for j in range(n):
                    axi += a[i, j] * x[j, k]
                z += np.conj(x[i, k]) * axi
                h += axi.real * axi.real + axi.imag * axi.imag
            out[k, 0] = z.real
            out[k, 1] = z.imag
            out[k, 2] = h
        return out

    @njit(cache=True)
    def _freq_response_nb(a, b, c, d, s):
        nx = a.shape[0]
        no, ni = d.shape
        out = np.empty((s.size, no, ni), dtype=np.complex128)
        ac = a.astype(np.complex128)
        bc = b.astype(np.complex128)
        cc = c.astype(np.complex128)
        for k in range(s.size):
            if nx == 0:
                out[k] = d
                continue
            m = -ac.copy()
            for i in range(nx):
                m[i, i] += s[k]
            sol = np.linalg.solve(m, bc)
            out[k] = d + cc @ sol
        return out

    @njit(cache=True)
    def _angle_and_grad(a, x, rot):
        ax = a @ x
        ahx = np.conj(a.T) @ x
        zz = np.vdot(x, ax)
        z = zz * np.exp(-1j * rot)
        g = (1j / np.conj(zz)) * ahx - (1j / zz) * ax
        g = g - np.vdot(x, g).real * x
        return np.angle(z), g

    @njit(cache=True)
    def _gain_tangent(a, x):
        gx = np.conj(a.T) @ (a @ x)
        h = np.vdot(x, gx).real
        return h, gx - h * x

    @njit(cache=True)
    def _refine_angle_nb(a, x0, r2, rot, sign, steps, r2_tol, scale):
        n, m = x0.shape
        fout = np.empty(m)
        feas = np.zeros(m, dtype=np.bool_)
        xout = np.empty_like(x0)
        for k in range(m):
            x = x0[:, k].copy()
            x = x / np.linalg.norm(x)
            if r2 > 0:
                for _ in range(60):
                    h, gt = _gain_tangent(a, x)
                    if h >= r2 - r2_tol:
                        break
                    x = x + gt / max(scale, 1e-300)
                    x = x / np.linalg.norm(x)
            f, _ = _angle_and_grad(a, x, rot)
            f = sign * f
            h, _ = _gain_tangent(a, x)
            ok_any = h >= r2 - r2_tol
            eta = 0.1
            for _ in range(steps):
                _, g = _angle_and_grad(a, x, rot)
                g = sign * g
                h, gt = _gain_tangent(a, x)
                if r2 > 0 and h <= r2 * (1.0 + 1e-6) + r2_tol:
                    inner = np.vdot(g, gt).real
                    if inner < 0:
                        g = g - inner / max(np.vdot(gt, gt).real, 1e-300) * gt
                xt = x + eta * g
                xt = xt / np.linalg.norm(xt)
                if r2 > 0:
                    for _ in range(6):
                        ht, gtt = _gain_tangent(a, xt)
                        if ht >= r2:
                            break
                        nrm = max(np.vdot(gtt, gtt).real, 1e-300)
                        xt = xt + (r2 - ht) / (2.0 * nrm) * 1.01 * gtt
                        xt = xt / np.linalg.norm(xt)
                ft, _ = _angle_and_grad(a, xt, rot)
                ft = sign * ft
                ht, _ = _gain_tangent(a, xt)
                if ft > f and ht >= r2 - r2_tol:
                    x = xt
                    f = ft
                    ok_any = True
                    eta = min(eta * 1.5, 1.0)
                else:
                    eta *= 0.5
            fout[k] = sign * f
            feas[k] = ok_any
            xout[:, k] = x
        return fout, feas, xout

    @njit(cache=True)
    def _qform(m, x):
        return np.vdot(x, m @ x).real

    @njit(cache=True)
    def _refine_gain_nb(g, m1, m2, x0, steps):
        n, m = x0.shape
        fout = np.empty(m)
        feas = np.zeros(m, dtype=np.bool_)
        xout = np.empty_like(x0)
        for k in range(m):
            x = x0[:, k].copy()
            x = x / np.linalg.norm(x)
            f = _qform(g, x)
            c1 = _qform(m1, x)
            c2 = _qform(m2, x)
            eta = 0.1
            for _ in range(steps):
                grad = g @ x - f * x
                h1 = m1 @ x - c1 * x
                inner = np.vdot(grad, h1).real
                if c1 <= 1e-6 and inner < 0:
                    grad = grad - inner / max(np.vdot(h1, h1).real, 1e-300) * h1
                xt = x + eta * grad
                xt = xt / np.linalg.norm(xt)
                for _ in range(6):
                    ct = _qform(m1, xt)
                    if ct >= 0:
                        break
                    ht = m1 @ xt - ct * xt
                    xt = xt + (-ct / (2.0 * max(np.vdot(ht, ht).real, 1e-300)) * 1.01) * ht
                    xt = xt / np.linalg.norm(xt)
                ft = _qform(g, xt)
                c1t = _qform(m1, xt)
                c2t = _qform(m2, xt)
                if ft > f and c1t >= 0 and c2t >= 0:
                    x = xt
                    f = ft
                    c1 = c1t
                    c2 = c2t
                    eta = min(eta * 1.5, 1.0)
                else:
                    eta *= 0.5
            fout[k] = f
            feas[k] = c1 >= 0 and c2 >= 0
            xout[:, k] = x
        return fout, feas, xout


# ---------------------------------------------------------------- dispatch

def shell_points(a, x, use_numba=None):
    """DW-shell coordinates ``(Re x*Ax, Im x*Ax, ||Ax||^2)`` for columns of `x`."""
    a = np.ascontiguousarray(a, dtype=complex)
    x = np.ascontiguousarray(x, dtype=complex)
    if USE_NUMBA if use_numba is None else use_numba:
        return _shell_points_nb(a, x)
    return _shell_points_np(a, x)


def freq_response(a, b, c, d, s, use_numba=None):
    """Stack of ``D + C (s_k I - A)^{-1} B`` for finite complex points `s`."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    d = np.ascontiguousarray(d, dtype=complex)
    s = np.ascontiguousarray(np.atleast_1d(s), dtype=complex)
    if USE_NUMBA if use_numba is None else use_numba:
        return _freq_response_nb(a, b, c, d, s)
    return _freq_response_np(a, b, c, d, s)


def refine_extreme_angle(a, x0, r, rotation=0.0, sign=1.0, steps=100, use_numba=None):
    """Local ascent of ``sign * angle(e^{-j rotation} x*Ax)`` over ``||Ax|| >= r``.

    Returns the final angles (one per seed column), a feasibility mask and
    the final vectors.
    """
    a = np.ascontiguousarray(a, dtype=complex)
    x0 = np.ascontiguousarray(x0, dtype=complex)
    r2 = float(r) ** 2
    r2_tol = 1e-9 * max(r2, 1e-300)
    scale = float(np.linalg.norm(a, 2)) ** 2
    args = (a, x0, r2, float(rotation), float(sign), int(steps), r2_tol, scale)
    if USE_NUMBA if use_numba is None else use_numba:
        return _refine_angle_nb(*args)
    return _refine_angle_np(*args)


def refine_constrained_gain(a, x0, theta, sign=1.0, steps=100, use_numba=None):
    """Local ascent of ``||Ax||^2`` over one angular piece of ``x*Ax``.

    With ``sign=+1`` the piece is ``angle(x*Ax) in [theta, theta + pi]``
    (intersected with the upper half plane when ``theta >= pi/2``); ``sign=-1``
    mirrors it. Returns squared gains, a feasibility mask and final vectors.
    """
    a = np.ascontiguousarray(a, dtype=complex)
    x0 = np.ascontiguousarray(x0, dtype=complex)
    h = 0.5 * (a + a.conj().T)
    sk = (a - a.conj().T) / 2j
    scale = max(np.linalg.norm(a, 2), 1e-300)
    gram = np.ascontiguousarray(a.conj().T @ a / scale ** 2)
    m1 = np.ascontiguousarray((np.cos(theta) * sign * sk - np.sin(theta) * h) / scale)
    if theta >= np.pi / 2:
        m2 = np.ascontiguousarray(sign * sk / scale)
    else:
        m2 = np.zeros_like(m1)
    if USE_NUMBA if use_numba is None else use_numba:
        f, ok, x = _refine_gain_nb(gram, m1, m2, x0, int(steps))
    else:
        f, ok, x = _refine_gain_np(gram, m1, m2, x0, int(steps))
    return f * scale ** 2, ok, x
