"""Continuous-time LTI systems: evaluation, contours, sweeps, interconnections.

Systems are real state-space realizations ``(A, B, C, D)``. Frequency
responses are evaluated along an indented contour which follows the
imaginary axis and detours around imaginary-axis poles by small
right-half-plane semicircles.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .errors import DimensionError, NotSectorialError, PoleProximityError, PreconditionError
from .matnum import (PhaseSector, Sectoriality, classify_sectoriality, default_tol,
                     matrix_phases)

__all__ = [
    "StateSpace",
    "PoleSet",
    "ContourKind",
    "ContourPoint",
    "FrequencyGrid",
    "FrequencyResponseSample",
    "evaluate",
    "evaluate_many",
    "imaginary_axis_poles",
    "default_eps",
    "build_indented_contour",
    "refine_contour",
    "frequency_sweep",
    "gang_of_four",
    "is_hurwitz",
    "hinf_norm",
    "sv_peak",
]

INF = complex(0.0, np.inf)


def _real2d(m, shape=None, name="matrix"):
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class StateSpace:
    """Real realization ``G(s) = D + C (sI - A)^{-1} B``.

    Static gains have zero states; pass ``a=np.zeros((0, 0))`` or use
    :meth:`static`.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        d = _real2d(self.d, name="d")
        a = np.asarray(self.a, dtype=float)
        nx = 0 if a.size == 0 else a.shape[0]
        a = _real2d(a.reshape(nx, nx) if a.size == 0 else a, (nx, nx), "a")
        ny, nu = d.shape
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        b = _real2d(b.reshape(nx, nu) if b.size == 0 else b, (nx, nu), "b")
        c = _real2d(c.reshape(ny, nx) if c.size == 0 else c, (ny, nx), "c")
        for name, val in (("a", a), ("b", b), ("c", c), ("d", d)):
            object.__setattr__(self, name, val)

    @classmethod
    def static(cls, d):
        d = _real2d(d, name="d")
        return cls(np.zeros((0, 0)), np.zeros((0, d.shape[1])),
                   np.zeros((d.shape[0], 0)), d)

    @property
    def n_states(self):
        return self.a.shape[0]

    @property
    def n_inputs(self):
        return self.d.shape[1]

    @property
    def n_outputs(self):
        return self.d.shape[0]

    @property
    def is_square(self):
        return self.n_inputs == self.n_outputs

    def require_square(self):
        if not self.is_square:
            raise DimensionError(
                f"square system required, got {self.n_outputs}x{self.n_inputs}")
        return self.n_inputs

    def __call__(self, s):
        return evaluate(self, s)

    def __add__(self, other):
        """Parallel connection ``G1 + G2``."""
        if self.d.shape != other.d.shape:
            raise DimensionError("parallel connection needs equal I/O sizes")
        n1, n2 = self.n_states, other.n_states
        a = np.zeros((n1 + n2, n1 + n2))
        a[:n1, :n1], a[n1:, n1:] = self.a, other.a
        return StateSpace(a, np.vstack([self.b, other.b]),
                          np.hstack([self.c, other.c]), self.d + other.d)

    def scaled(self, k):
        """Left multiplication by a scalar or constant matrix ``k``."""
        k = np.atleast_2d(np.asarray(k, dtype=float))
        if k.shape == (1, 1):
            k = k[0, 0] * np.eye(self.n_outputs)
        return StateSpace(self.a, self.b, k @ self.c, k @ self.d)

    def eigenvalues(self):
        return np.linalg.eigvals(self.a) if self.n_states else np.zeros(0, complex)


def _is_infinite(s):
    return np.isinf(s.real) or np.isinf(s.imag)


def evaluate(sys, s):
    """Frequency response ``D + C (sI - A)^{-1} B`` at one point; ``s=inf`` gives D.

    Raises
    ------
    PoleProximityError
        If `s` is within ``1e-12 (1 + ||A||)`` of an eigenvalue of A.
    """
    s = complex(s)
    if _is_infinite(s):
        return sys.d.astype(complex)
    if sys.n_states == 0:
        return sys.d.astype(complex)
    lam = sys.eigenvalues()
    dist = float(np.min(np.abs(lam - s)))
    if dist <= 1e-12 * (1.0 + np.linalg.norm(sys.a, 2)):
        raise PoleProximityError(f"s={s} lies on a pole (distance {dist:.3g})", dist)
    m = s * np.eye(sys.n_states) - sys.a
    return sys.d + sys.c @ np.linalg.solve(m, sys.b.astype(complex))


def evaluate_many(sys, s):
    """Vectorized :func:`evaluate` over an array of points (no pole check)."""
    s = np.asarray(s, dtype=complex)
    out = np.empty((s.size, sys.n_outputs, sys.n_inputs), dtype=complex)
    fin = ~(np.isinf(s.real) | np.isinf(s.imag))
    out[~fin] = sys.d
    if np.any(fin):
        out[fin] = _kernels.freq_response(sys.a, sys.b, sys.c, sys.d, s[fin])
    return out


@dataclass(frozen=True)
class PoleSet:
    """Imaginary-axis poles ``j*omega`` (omega >= 0) of a realization.

    ``multiplicities[k]`` is the pole order at ``imag_axis_freqs[k]``: the
    size of the largest Jordan block (1 means a simple pole).
    """

    imag_axis_freqs: tuple = ()
    has_orhp_pole: bool = False
    multiplicities: tuple = ()

    @property
    def all_simple(self):
        return all(m == 1 for m in self.multiplicities)

    def merged(self, other):
        """Union of two pole sets (orders combined by max)."""
        freqs = {}
        for src in (self, other):
            for w, m in zip(src.imag_axis_freqs, src.multiplicities):
                key = None
                for k in freqs:
                    if abs(k - w) <= 1e-9 * (1.0 + abs(w)):
                        key = k
                if key is None:
                    freqs[w] = m
                else:
                    freqs[key] = max(freqs[key], m)
        order = sorted(freqs)
        return PoleSet(tuple(order), self.has_orhp_pole or other.has_orhp_pole,
                       tuple(freqs[w] for w in order))


def _pole_order(a, lam, scale, alg):
    # 1 when jw is semisimple (geometric == algebraic multiplicity)
    n = a.shape[0]
    m = a - lam * np.eye(n)
    tol = 1e-8 * max(scale, 1.0)
    geo = n - np.linalg.matrix_rank(m, tol=tol)
    if geo >= alg:
        return 1
    p = m.copy()
    prev = n - geo
    for k in range(2, alg + 1):
        p = p @ m
        rank = np.linalg.matrix_rank(p, tol=tol * max(scale, 1.0) ** (k - 1))
        if n - rank >= alg or rank == prev:
            return k
        prev = rank
    return alg


def imaginary_axis_poles(sys, tol=1e-8):
    """Eigenvalues of A on the imaginary axis (``|Re| <= tol ||A||``), as frequencies."""
    if sys.n_states == 0:
        return PoleSet()
    lam = sys.eigenvalues()
    scale = float(np.linalg.norm(sys.a, 2))
    thr = tol * scale
    axis = lam[np.abs(lam.real) <= thr]
    orhp = bool(np.any(lam.real > thr))
    freqs, counts = [], []
    for w in np.sort(axis.imag[axis.imag >= -max(thr, 1e-12)]):
        w = abs(float(w))
        if not freqs or abs(w - freqs[-1]) > max(thr, 1e-9 * (1.0 + w)) * 10:
            freqs.append(w)
            counts.append(1)
        else:
            counts[-1] += 1
    orders = tuple(_pole_order(sys.a, 1j * w, scale, k) for w, k in zip(freqs, counts))
    return PoleSet(tuple(freqs), orhp, orders)


class ContourKind(Enum):
    IMAG_AXIS = "ImagAxis"
    SEMICIRCLE = "SemiCircle"
    INFINITY = "Infinity"


@dataclass(frozen=True)
class ContourPoint:
    """A point of the indented contour.

    ``param`` is the frequency for axis points and the angle (from the
    positive real direction) for semicircle points.
    """

    s: complex
    kind: ContourKind
    center: float = float("nan")
    eps: float = 0.0
    param: float = 0.0
    weight: float = 0.0

    @property
    def omega(self):
        """Frequency used for tables (``center + eps sin(param)`` on arcs)."""
        if self.kind is ContourKind.INFINITY:
            return float("inf")
        if self.kind is ContourKind.SEMICIRCLE:
            return self.center + self.eps * np.sin(self.param)
        return self.param


@dataclass(frozen=True)
class FrequencyGrid:
    """Logarithmic frequency grid with optional exact 0 and infinity."""

    n_points: int = 400
    omega_min: float = 1e-3
    omega_max: float = 1e4
    include_zero: bool = True
    include_infinity: bool = True

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("grid needs at least 2 points")
        if not (0 < self.omega_min < self.omega_max < np.inf):
            raise ValueError("grid needs 0 < omega_min < omega_max < inf")

    def frequencies(self):
        w = np.logspace(np.log10(self.omega_min), np.log10(self.omega_max), self.n_points)
        return np.concatenate([[0.0], w]) if self.include_zero else w


def default_eps(poles, omega_min=1e-3, omega_max=1e4):
    """``min(1e-3, 0.25 * smallest gap)`` among pole frequencies and range ends."""
    pts = sorted(set(poles.imag_axis_freqs) | {float(omega_min), float(omega_max)})
    gaps = [b - a for a, b in zip(pts, pts[1:]) if b - a > 0]
    if not poles.imag_axis_freqs or not gaps:
        return 1e-3
    return min(1e-3, 0.25 * min(gaps))


def _check_eps(poles, eps, omega_min, omega_max):
    w = list(poles.imag_axis_freqs)
    for a, b in zip(w, w[1:]):
        if not eps < 0.5 * (b - a):
            raise PreconditionError(
                f"eps={eps} must be below half the gap {b - a:.6g} between poles {a:.6g} and {b:.6g}")
    for wk in w:
        for end, name in ((omega_min, "omega_min"), (omega_max, "omega_max")):
            d = abs(wk - end)
            if 0 < d and not eps < d:
                raise PreconditionError(
                    f"eps={eps} must be below the distance {d:.6g} from pole {wk:.6g} to {name}")


def build_indented_contour(poles, eps=None, grid=None, omega_min=None, omega_max=None,
                           semicircle_points=32, extra_frequencies=()):
    """Ordered points of the indented contour on the nonnegative frequency half.

    The contour follows ``j*omega`` for the grid frequencies, removes an
    ``eps``-ball around each axis pole ``j*omega_k`` and replaces it by the
    right-half-plane semicircle ``j*omega_k + eps*e^{j*phi}``,
    ``phi in (-pi/2, pi/2)``. A pole at 0 gets only the quarter circle
    ``phi in [0, pi/2)``. The point at infinity closes the list when the grid
    asks for it. `extra_frequencies` (e.g. a cut-off) are added to the axis
    grid.
    """
    grid = grid or FrequencyGrid()
    if omega_min is not None or omega_max is not None:
        grid = FrequencyGrid(grid.n_points,
                             grid.omega_min if not omega_min else omega_min,
                             grid.omega_max if omega_max is None else omega_max,
                             grid.include_zero or omega_min == 0,
                             grid.include_infinity)
    lo_end = 0.0 if grid.include_zero else grid.omega_min
    if eps is None:
        eps = default_eps(poles, lo_end, grid.omega_max)
    eps = float(eps)
    if not eps > 0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    if semicircle_points < 32:
        raise PreconditionError("semicircles need at least 32 points")
    _check_eps(poles, eps, lo_end, grid.omega_max)

    w = grid.frequencies()
    extra = np.asarray([x for x in extra_frequencies if np.isfinite(x) and x >= 0], dtype=float)
    if extra.size:
        w = np.union1d(w, extra)
    keep = np.ones(w.size, dtype=bool)
    for wk in poles.imag_axis_freqs:
        keep &= np.abs(w - wk) >= eps
    pts = [ContourPoint(complex(0.0, x), ContourKind.IMAG_AXIS, param=float(x)) for x in w[keep]]
    m = int(semicircle_points)
    for wk in poles.imag_axis_freqs:
        if wk == 0.0:
            phis = 0.5 * np.pi * np.arange(m) / m
        else:
            phis = -0.5 * np.pi + np.pi * (np.arange(m) + 1) / (m + 1)
            # axis end points of the detour
            pts.append(ContourPoint(complex(0.0, wk - eps), ContourKind.IMAG_AXIS, param=wk - eps))
        pts.append(ContourPoint(complex(0.0, wk + eps), ContourKind.IMAG_AXIS, param=wk + eps))
        for phi in phis:
            s = complex(eps * np.cos(phi), wk + eps * np.sin(phi))
            pts.append(ContourPoint(s, ContourKind.SEMICIRCLE, center=float(wk), eps=eps,
                                    param=float(phi)))
    pts.sort(key=_order_key)
    pts = _dedupe(pts)
    if grid.include_infinity:
        pts.append(ContourPoint(INF, ContourKind.INFINITY, param=float("inf")))
    return _with_weights(pts)


def _order_key(p):
    # arcs are ordered by angle; sin is monotone on [-pi/2, pi/2]
    if p.kind is ContourKind.SEMICIRCLE:
        return (p.center + p.eps * np.sin(p.param), 1, p.param)
    return (p.param, 0 if p.param <= 0 else 2, 0.0)


def _dedupe(pts):
    out = []
    for p in pts:
        if out and p.kind is out[-1].kind and abs(p.s - out[-1].s) <= 1e-15 * (1 + abs(p.s)):
            continue
        out.append(p)
    return out


def _with_weights(pts):
    finite = [p for p in pts if p.kind is not ContourKind.INFINITY]
    out = []
    for i, p in enumerate(pts):
        if p.kind is ContourKind.INFINITY:
            out.append(p)
            continue
        left = abs(p.s - finite[i - 1].s) if i > 0 else 0.0
        right = abs(finite[i + 1].s - p.s) if i + 1 < len(finite) else 0.0
        out.append(ContourPoint(p.s, p.kind, p.center, p.eps, p.param, 0.5 * (left + right)))
    return out


def _midpoint(p, q):
    if p.kind is ContourKind.SEMICIRCLE and q.kind is ContourKind.SEMICIRCLE \
            and p.center == q.center:
        phi = 0.5 * (p.param + q.param)
        s = complex(p.eps * np.cos(phi), p.center + p.eps * np.sin(phi))
        return ContourPoint(s, ContourKind.SEMICIRCLE, p.center, p.eps, phi)
    if p.kind is ContourKind.IMAG_AXIS and q.kind is ContourKind.IMAG_AXIS:
        a, b = p.param, q.param
        w = np.sqrt(a * b) if a > 0 and b / a > 1.5 else 0.5 * (a + b)
        return ContourPoint(complex(0.0, w), ContourKind.IMAG_AXIS, param=float(w))
    return None


@dataclass
class FrequencyResponseSample:
    """Response at one contour point.

    ``phases`` is None where the value is not sectorial. ``rank`` uses the
    threshold ``1e-8 * sigma_max``.
    """

    point: ContourPoint
    value: np.ndarray
    gains: np.ndarray
    phases: PhaseSector = None
    sectoriality: Sectoriality = None
    rank: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def s(self):
        return self.point.s

    @property
    def omega(self):
        return self.point.omega


def frequency_sweep(sys, contour, phases=True):
    """Gains (and phases where sectorial) of `sys` along `contour`.

    The phase branch is anchored at the first point (centre 0 or pi for a
    real system at DC) and then moved by multiples of 2*pi so the phase
    centre varies continuously along the contour.
    """
    sys.require_square()
    s = np.array([p.s for p in contour], dtype=complex)
    lam = sys.eigenvalues()
    if lam.size and s.size:
        fin = ~(np.isinf(s.real) | np.isinf(s.imag))
        d = np.min(np.abs(s[fin, None] - lam[None, :]), axis=1) if np.any(fin) else np.zeros(0)
        if d.size and np.min(d) <= 1e-12 * (1.0 + np.linalg.norm(sys.a, 2)):
            k = int(np.argmin(d))
            raise PoleProximityError(f"contour point {s[fin][k]} lies on a pole", float(d[k]))
    vals = evaluate_many(sys, s)
    gains = np.linalg.svd(vals, compute_uv=False)
    out = []
    prev_center = None
    for p, v, g in zip(contour, vals, gains):
        rank = int(np.sum(g > 1e-8 * g[0])) if g[0] > 0 else 0
        smp = FrequencyResponseSample(p, v, g, rank=rank)
        if phases:
            tol = default_tol(v)
            try:
                hint = None if prev_center is None else -prev_center
                ps = matrix_phases(v, tol=tol, rotation_hint=hint)
                smp.sectoriality = Sectoriality.SECTORIAL
                if prev_center is not None:
                    ps = ps.nearest_branch(prev_center)
                smp.phases = ps
                prev_center = ps.center
            except NotSectorialError:  # non-sectorial points are flagged
                smp.sectoriality = classify_sectoriality(v, tol).tag
        out.append(smp)
    return out


def refine_contour(systems, contour, threshold=0.1, max_depth=8):
    """Insert midpoints where a phase centre jumps by ``>= threshold`` rad.

    All `systems` are swept on the same contour so they stay aligned.
    """
    if isinstance(systems, StateSpace):
        systems = [systems]
    pts = list(contour)
    for _ in range(max_depth):
        sweeps = [frequency_sweep(g, pts) for g in systems]
        insert = {}
        for sw in sweeps:
            for i in range(len(pts) - 1):
                a, b = sw[i].phases, sw[i + 1].phases
                if a is None or b is None:
                    continue
                if abs(b.center - a.center) >= threshold:
                    mid = _midpoint(pts[i], pts[i + 1])
                    if mid is not None and abs(mid.s - pts[i].s) > 1e-14 * (1 + abs(mid.s)):
                        insert[i] = mid
        if not insert:
            break
        new = []
        for i, p in enumerate(pts):
            new.append(p)
            if i in insert:
                new.append(insert[i])
        pts = new
    return _with_weights(pts)


def gang_of_four(p, c):
    """Realization of ``[I; P] (I + CP)^{-1} [I, C]``.

    Inputs are ``(w1, w2)``, outputs ``(u1, y1)`` with ``u1 = w1 - C u2``,
    ``u2 = P u1 - w2`` and ``y1 = P u1``; states are ``(x_p, x_c)``.

    Raises
    ------
    PreconditionError
        If ``I + D_c D_p`` is singular (ill-posed loop).
    """
    n = p.require_square()
    if c.require_square() != n:
        raise DimensionError("plant and controller sizes differ")
    ident = np.eye(n)
    w = ident + c.d @ p.d
    if np.linalg.cond(w) > 1e12:
        raise PreconditionError("interconnection is ill-posed: I + Dc Dp is singular")
    e = np.linalg.inv(w)
    npx, ncx = p.n_states, c.n_states
    # u1 = K x + L w
    k = np.hstack([-e @ c.d @ p.c, -e @ c.c])
    l = np.hstack([e, e @ c.d])
    # u2 = Cp xp + Dp u1 - w2
    k2 = np.hstack([p.c, np.zeros((n, ncx))]) + p.d @ k
    l2 = p.d @ l - np.hstack([np.zeros((n, n)), ident])
    a = np.zeros((npx + ncx, npx + ncx))
    a[:npx, :npx] = p.a
    a[npx:, npx:] = c.a
    a[:npx] += p.b @ k
    a[npx:] += c.b @ k2
    b = np.vstack([p.b @ l, c.b @ l2])
    cy = np.hstack([p.c, np.zeros((n, ncx))]) + p.d @ k
    dy = p.d @ l
    return StateSpace(a, b, np.vstack([k, cy]), np.vstack([l, dy]))


def is_hurwitz(sys, tol=1e-9):
    """True iff every eigenvalue of the A matrix has real part below ``-tol``."""
    if sys.n_states == 0:
        return True
    return bool(np.all(sys.eigenvalues().real < -tol))


def sv_peak(sys, omegas):
    """Largest singular value of ``G(j*omega)`` over the given frequencies."""
    s = 1j * np.asarray(omegas, dtype=float)
    vals = evaluate_many(sys, s)
    return float(np.max(np.linalg.svd(vals, compute_uv=False)[:, 0]))


def _crossings(sys, gamma):
    # imaginary eigenvalues j*w of the Hamiltonian <=> gamma is a singular value of G(jw)
    a, b, c, d = sys.a, sys.b, sys.c, sys.d
    r = gamma ** 2 * np.eye(d.shape[1]) - d.T @ d
    s = gamma ** 2 * np.eye(d.shape[0]) - d @ d.T
    ri = np.linalg.inv(r)
    si = np.linalg.inv(s)
    h11 = a + b @ ri @ d.T @ c
    h = np.block([[h11, gamma * b @ ri @ b.T],
                  [-gamma * c.T @ si @ c, -h11.T]])
    ev = np.linalg.eigvals(h)
    scale = 1.0 + np.linalg.norm(h, 2)
    return np.abs(ev.imag[np.abs(ev.real) <= 1e-8 * scale])


def hinf_norm(sys, omega_lo=0.0, rtol=1e-9):
    """``sup sigma_max(G(jw))`` over ``w >= omega_lo`` by Hamiltonian bisection.

    Returns inf when A has an eigenvalue on ``j[omega_lo, inf)``.
    """
    omega_lo = float(omega_lo)
    if sys.n_states == 0:
        return float(np.linalg.norm(sys.d, 2))
    lam = sys.eigenvalues()
    scale = 1.0 + np.linalg.norm(sys.a, 2)
    if np.any((np.abs(lam.real) <= 1e-10 * scale) & (np.abs(lam.imag) >= omega_lo - 1e-12)):
        return float("inf")
    probe = np.concatenate([[omega_lo], omega_lo + np.abs(lam.imag),
                            omega_lo + np.logspace(-3, 4, 60) * scale])
    lo = max(float(np.linalg.norm(sys.d, 2)), sv_peak(sys, probe))
    hi = max(2.0 * lo, 1e-300)
    while np.any(_crossings(sys, hi) >= omega_lo):
        hi *= 2.0
    while hi - lo > rtol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        cross = _crossings(sys, mid)
        cross = cross[cross >= omega_lo]
        if cross.size:
            lo = max(mid, sv_peak(sys, cross))
        else:
            hi = mid
    return 0.5 * (lo + hi)
