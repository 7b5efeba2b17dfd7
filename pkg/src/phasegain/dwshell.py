"""Davis-Wielandt shell computations.

The shell of ``A`` is the set of triples ``(Re x*Ax, Im x*Ax, ||Ax||^2)``
over unit vectors ``x``. Cutting it at height ``r**2`` gives the sets used
for constrained phases; cutting it by an angular sector gives constrained
gains. Both are computed by small SDPs built with :mod:`phasegain.sdpkit`.
A sampling oracle is provided for cross-checks.

All SDPs are posed on ``A / sigma_max(A)`` so the data is O(1).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from ._rng import generator, resolve_seed, unit_vectors
from .errors import DomainError, NotSectorialError, SolverTroubleError
from .matnum import (as_matrix, classify_sectoriality, hermitian_split,
                     matrix_phases, wrap_angle)
from .sdpkit import SdpBuilder, shift_to_feasible, solve

__all__ = [
    "ConstrainedPhaseSector",
    "ConstrainedGain",
    "GainMethod",
    "RSectorialResult",
    "ShellCloud",
    "is_r_sectorial",
    "constrained_phase_sector",
    "constrained_gain",
    "shell_sample_oracle",
    "oracle_phase_sector",
    "oracle_constrained_gain",
]

# relative width of the "r equals sigma_max" band
_TOP_BAND = 1e-9
# minimum eigenvalue margin (normalized data) for a strict LMI to count
_STRICT = 1e-7
_RECENTER = 0.35
_SLOPE_BOUND = 1e4


@dataclass(frozen=True)
class ConstrainedPhaseSector:
    """Phase extremes of the unit vectors with ``||Ax|| >= r``.

    An empty set (``r > sigma_max``) is stored as ``lo=+inf, hi=-inf``.
    """

    r: float
    lo: float
    hi: float
    empty: bool = False
    rotation: float = 0.0

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi) if not self.empty else float("nan")

    @property
    def spread(self):
        return self.hi - self.lo if not self.empty else float("nan")


class GainMethod(Enum):
    SDP = "SDP"
    SAMPLING = "Sampling"


@dataclass(frozen=True)
class ConstrainedGain:
    """Largest gain over unit vectors whose ``x*Ax`` has angle outside ``(-theta, theta)``.

    ``empty`` marks that no vector qualifies; ``value`` is then 0.
    ``approximate`` is set for sampled values.
    """

    theta: float
    value: float
    method: GainMethod = GainMethod.SDP
    approximate: bool = False
    empty: bool = False


@dataclass(frozen=True)
class RSectorialResult:
    value: bool
    margin: float
    witness_rotation: float

    def __bool__(self):
        return bool(self.value)


@dataclass(frozen=True)
class ShellCloud:
    points: np.ndarray
    seed: int

    @property
    def re(self):
        return self.points[:, 0]

    @property
    def im(self):
        return self.points[:, 1]

    @property
    def height(self):
        return self.points[:, 2]


def _normalized(a):
    a = as_matrix(a)
    smax = float(np.linalg.norm(a, 2))
    if smax == 0.0:
        return a, 0.0
    return a / smax, smax


def _check_r(r):
    r = float(r)
    if not np.isfinite(r) or r < 0:
        raise DomainError(f"gain threshold r must be finite and >= 0, got {r}")
    return r


def _top_subspace(an):
    # right singular vectors for singular values within the top band
    _, s, vh = np.linalg.svd(an)
    k = int(np.sum(s >= s[0] * (1.0 - _TOP_BAND)))
    return vh[:k].conj().T


def _top_compression(an):
    v = _top_subspace(an)
    return v.conj().T @ an @ v


def is_r_sectorial(a, r, tol=_STRICT):
    """Decide whether 0 is outside the shell slice ``{x*Ax : ||x||=1, ||Ax|| >= r}``.

    By the lossless S-procedure this holds iff some rotation ``(cos t, sin t)``
    and ``tau >= 0`` give
    ``cos t A_h - sin t A_s - tau (A*A - r^2 I) > 0``. The rotation is relaxed
    to the unit disc, which keeps the problem a single convex SDP.

    Returns
    -------
    RSectorialResult
        Truthy when r-sectorial; ``margin`` is the optimal smallest eigenvalue
        (for ``A / sigma_max``) and ``witness_rotation`` the rotation angle.
    """
    r = _check_r(r)
    an, smax = _normalized(a)
    if smax == 0.0:
        return RSectorialResult(r > 0, np.inf if r > 0 else 0.0, 0.0)
    rn = r / smax
    if rn > 1.0 + _TOP_BAND:
        return RSectorialResult(True, np.inf, 0.0)
    # a scalar shell is a single point, so any r <= |a| sees all of it
    if rn >= 1.0 - _TOP_BAND or an.shape[0] == 1:
        b = _top_compression(an)
        if b.shape[0] == 1:
            z = complex(b[0, 0])
            return RSectorialResult(abs(z) > tol, abs(z), wrap_angle(-np.angle(z)))
        cls = classify_sectoriality(b, tol=tol)
        return RSectorialResult(cls.is_sectorial, cls.margin, cls.witness_rotation)

    parts = hermitian_split(an)
    n = an.shape[0]
    shifted_gram = an.conj().T @ an - rn * rn * np.eye(n)
    bld = SdpBuilder()
    ia = bld.scalar("a", -1.0, 1.0)
    ib = bld.scalar("b", -1.0, 1.0)
    itau = bld.scalar("tau", 0.0)
    it = bld.scalar("t", -10.0, 10.0)
    bld.lmi(np.zeros((n, n)),
            [(ia, parts.h), (ib, -parts.s), (itau, -shifted_gram), (it, -np.eye(n))],
            sense=">=0")
    # (a, b) in the unit disc
    bld.lmi(np.eye(2), [(ia, np.diag([1.0, -1.0])), (ib, np.array([[0.0, 1.0], [1.0, 0.0]]))],
            sense=">=0")
    bld.maximize(it)
    sol = solve(bld.build())
    if not np.all(np.isfinite(sol.x)):
        raise SolverTroubleError(f"r-sectoriality SDP ended with {sol.status.value}")
    # re-evaluate the certificate exactly at the returned rotation and multiplier
    theta = float(np.arctan2(sol[ib], sol[ia]))
    tau = max(sol[itau], 0.0)
    lhs = np.cos(theta) * parts.h - np.sin(theta) * parts.s - tau * shifted_gram
    margin = float(np.linalg.eigvalsh(lhs)[0])
    if margin > tol:
        return RSectorialResult(True, margin, theta)
    if not sol.ok:
        raise SolverTroubleError(f"r-sectoriality SDP ended with {sol.status.value}")
    return RSectorialResult(False, min(margin, sol[it]), theta)


def _phase_sdps(ar, rn):
    """Constrained phases of `ar` assuming they lie in (-pi/2, pi/2)."""
    parts = hermitian_split(ar)
    n = ar.shape[0]
    shifted_gram = ar.conj().T @ ar - rn * rn * np.eye(n)

    # lower phase: largest g with g x*A_h x <= x*A_s x on the slice
    bld = SdpBuilder()
    ig = bld.scalar("g", -_SLOPE_BOUND, _SLOPE_BOUND)
    itau = bld.scalar("tau", 0.0)
    bld.lmi(-parts.s, [(ig, parts.h), (itau, shifted_gram)])
    bld.maximize(ig)
    lo = shift_to_feasible(solve(bld.build()), ig, -1.0)

    # upper phase: smallest h with x*A_s x <= h x*A_h x on the slice
    bld = SdpBuilder()
    ih = bld.scalar("h", -_SLOPE_BOUND, _SLOPE_BOUND)
    itau = bld.scalar("tau", 0.0)
    bld.lmi(parts.s, [(ih, -parts.h), (itau, shifted_gram)])
    bld.minimize(ih)
    hi = shift_to_feasible(solve(bld.build()), ih, 1.0)

    for name, sol in (("lower", lo), ("upper", hi)):
        if not sol.ok:
            raise SolverTroubleError(f"{name} constrained phase SDP ended with {sol.status.value}")
    return float(np.arctan(lo[ig])), float(np.arctan(hi[ih]))


def _finish(r, lo, hi, rotation):
    c = 0.5 * (lo + hi)
    target = wrap_angle(c)
    if target < -np.pi + 1e-12:
        target = np.pi
    d = target - c
    return ConstrainedPhaseSector(float(r), lo + d, hi + d, False, float(rotation))


def constrained_phase_sector(a, r, rotation=None):
    """Constrained phase sector ``[psi_lo_r(A), psi_hi_r(A)]``.

    Parameters
    ----------
    a : array_like
        Square complex matrix.
    r : float
        Gain threshold; only unit vectors with ``||Ax|| >= r`` count.
    rotation : float, optional
        Rotation ``t`` such that ``e^{jt} A`` has its slice in the open right
        half plane. Taken from :func:`is_r_sectorial` when omitted.

    Raises
    ------
    NotSectorialError
        If `a` is not r-sectorial.
    SolverTroubleError
        If an SDP does not solve cleanly.
    """
    r = _check_r(r)
    an, smax = _normalized(a)
    rn = r / smax if smax > 0 else np.inf
    if rn > 1.0 + _TOP_BAND:
        return ConstrainedPhaseSector(r, np.inf, -np.inf, True)

    if rn >= 1.0 - _TOP_BAND or an.shape[0] == 1:
        # the slice is the numerical range of A compressed to its top singular space
        b = _top_compression(an)
        if b.shape[0] == 1:
            if abs(b[0, 0]) <= _STRICT:
                raise NotSectorialError("matrix is not r-sectorial", abs(b[0, 0]))
            phi = float(np.angle(b[0, 0]))
            return _finish(r, phi, phi, -phi)
        ps = matrix_phases(b)
        return _finish(r, ps.lo, ps.hi, -ps.center)

    def witness():
        res = is_r_sectorial(an, rn)
        if not res:
            raise NotSectorialError("matrix is not r-sectorial", res.margin)
        return res.witness_rotation

    if rotation is not None:
        starts = [lambda: float(rotation)]
    else:
        try:
            # a sectorial A is r-sectorial for every r: centre the sector of W(A)
            c0 = -matrix_phases(an).center
            starts = [lambda: c0, witness]
        except NotSectorialError:
            starts = [witness]

    trouble = None
    for start in starts:
        rot = start()
        try:
            for _ in range(3):
                lo, hi = _phase_sdps(np.exp(1j * rot) * an, rn)
                c = 0.5 * (lo + hi)
                if abs(c) <= _RECENTER:
                    break
                rot -= c
            return _finish(r, lo - rot, hi - rot, rot)
        except SolverTroubleError as exc:
            trouble = exc
    raise trouble


def constrained_gain(a, theta, samples=10_000, seed=None):
    """Constrained gain ``gamma_theta(A)``.

    Maximum of ``||Ax||`` over unit ``x`` with ``angle(x*Ax)`` outside
    ``(-theta, theta)``. For ``theta < pi/2`` the admissible set splits into
    two half-plane pieces of the quadratic form, each handled by an exact
    S-procedure SDP. Larger angles fall back to the sampling oracle.
    """
    theta = float(theta)
    if not (0.0 <= theta < np.pi):
        raise DomainError(f"theta must lie in [0, pi), got {theta}")
    a = as_matrix(a)
    cls = classify_sectoriality(a)
    if not cls.is_sectorial:
        raise NotSectorialError(f"matrix is {cls.tag.value}", cls.margin)
    if theta >= np.pi / 2:
        val = oracle_constrained_gain(a, theta, samples=samples, seed=seed)
        empty = not np.isfinite(val)
        return ConstrainedGain(theta, 0.0 if empty else val, GainMethod.SAMPLING, True, empty)

    if a.shape == (1, 1):
        z = complex(a[0, 0])
        if abs(np.angle(z)) >= theta:
            return ConstrainedGain(theta, abs(z))
        return ConstrainedGain(theta, 0.0, GainMethod.SDP, False, True)
    an, smax = _normalized(a)
    parts = hermitian_split(an)
    n = an.shape[0]
    gram = an.conj().T @ an
    t = np.tan(theta)
    best = None
    for sign in (1.0, -1.0):
        m = sign * parts.s - t * parts.h
        if np.linalg.eigvalsh(m)[-1] < -1e-12:
            continue  # no vector in this piece
        bld = SdpBuilder()
        ig = bld.scalar("g", 0.0, 2.0)
        itau = bld.scalar("tau", 0.0)
        bld.lmi(gram, [(ig, -np.eye(n)), (itau, m)])
        bld.minimize(ig)
        sol = shift_to_feasible(solve(bld.build()), ig, 1.0)
        if not sol.ok:
            raise SolverTroubleError(f"constrained gain SDP ended with {sol.status.value}")
        best = sol[ig] if best is None else max(best, sol[ig])
    if best is None:
        return ConstrainedGain(theta, 0.0, GainMethod.SDP, False, True)
    return ConstrainedGain(theta, smax * float(np.sqrt(max(best, 0.0))))


# ---------------------------------------------------------------- oracle

def shell_sample_oracle(a, samples=10_000, seed=None, refine=True, steps=100):
    """Point cloud of the DW shell from random unit vectors.

    With `refine`, points at the extreme angles and the top gain are polished
    by local ascent and appended to the cloud.
    """
    a = as_matrix(a)
    if int(samples) < 1:
        raise DomainError("samples must be >= 1")
    seed = resolve_seed(seed)
    rng = generator(seed)
    x = unit_vectors(rng, a.shape[0], int(samples))
    pts = _kernels.shell_points(a, x)
    if refine and a.shape[0] > 1:
        extra = [_top_subspace(a)[:, :1]]
        z = pts[:, 0] + 1j * pts[:, 1]
        ok = np.abs(z) > 0
        if np.any(ok):
            ref = np.angle(np.sum(z[ok] / np.abs(z[ok])))
            rel = wrap_angle(np.angle(z) - ref)
            for sign in (1.0, -1.0):
                idx = np.argsort(-sign * rel)[:32]
                _, feas, xr = _kernels.refine_extreme_angle(a, x[:, idx], 0.0, ref, sign, steps)
                extra.append(xr[:, feas])
        pts = np.vstack([pts, _kernels.shell_points(a, np.hstack(extra))])
    return ShellCloud(pts, seed)


def oracle_phase_sector(a, r, samples=10_000, seed=None, steps=400, n_seeds=32):
    """Sampled estimate of the constrained phase sector (inner approximation).

    Assumes the slice is r-sectorial; the result is meaningless otherwise.
    """
    r = _check_r(r)
    a = as_matrix(a)
    smax = float(np.linalg.norm(a, 2))
    if r > smax * (1.0 + _TOP_BAND):
        return ConstrainedPhaseSector(r, np.inf, -np.inf, True)
    rng = generator(seed)
    x = unit_vectors(rng, a.shape[0], int(samples))
    x = np.hstack([x, _top_subspace(a)])
    pts = _kernels.shell_points(a, x)
    z = pts[:, 0] + 1j * pts[:, 1]
    r2 = r * r
    feas = pts[:, 2] >= r2 * (1.0 - 1e-9)
    pool = feas.copy()
    pool[-1] = True  # top singular vector always qualifies
    zz = z[pool]
    zz = zz[np.abs(zz) > 0]
    ref = float(np.angle(np.sum(zz / np.abs(zz)))) if zz.size else 0.0
    rel = wrap_angle(np.angle(z) - ref)

    out = []
    for sign in (1.0, -1.0):
        score = np.where(feas, sign * rel, -np.inf)
        idx = list(np.argsort(-score)[:n_seeds])
        if np.sum(feas) < n_seeds:
            # too few feasible samples: add the tallest ones and let the kernel lift them
            idx += list(np.argsort(-pts[:, 2])[:n_seeds])
        idx.append(x.shape[1] - 1)
        idx = np.unique(idx)
        f, ok, _ = _kernels.refine_extreme_angle(a, x[:, idx], r, ref, sign, steps)
        cand = np.concatenate([f[ok], rel[feas]])
        out.append(sign * np.max(sign * cand))
    hi, lo = out
    return _finish(r, lo + ref, hi + ref, -ref)


def oracle_constrained_gain(a, theta, samples=10_000, seed=None, steps=100, n_seeds=32):
    """Sampled estimate (lower bound) of the constrained gain; NaN if no sample qualifies."""
    a = as_matrix(a)
    rng = generator(seed)
    x = unit_vectors(rng, a.shape[0], int(samples))
    pts = _kernels.shell_points(a, x)
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    best = -np.inf
    for sign in (1.0, -1.0):
        # piece with angle in [theta, pi] (sign=+1) or [-pi, -theta]
        mask = sign * ang >= theta if theta > 0 else (sign * pts[:, 1] >= 0)
        if not np.any(mask):
            continue
        cand = np.flatnonzero(mask)
        idx = cand[np.argsort(-pts[cand, 2])[:n_seeds]]
        f, ok, _ = _kernels.refine_constrained_gain(a, x[:, idx], theta, sign, steps)
        best = max(best, float(np.max(pts[cand, 2])))
        if np.any(ok):
            best = max(best, float(np.max(f[ok])))
    return float(np.sqrt(best)) if np.isfinite(best) else float("nan")
