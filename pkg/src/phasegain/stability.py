"""Feedback stability tests built from gain and phase information.

Matrix-level tests decide invertibility of ``I + AB`` from fan- and
vase-shaped sets. System-level checkers evaluate the corresponding
frequency-wise conditions on a finite indented contour and report a
:class:`StabilityVerdict` with per-point margins.

All phase conditions are evaluated branch-free: a phase sector counts as
contained in an interval when some shift by a multiple of ``2*pi`` puts it
there. Margins are slacks in radians for phase conditions and in relative
form (``1 - product of gains``) for gain conditions.

Grid verdicts are only labelled Stable when every strict margin exceeds
``margin_floor``; small positive margins give Unknown, violations give
ConditionFailed.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import dwshell
from .errors import (DimensionError, NotSectorialError, PreconditionError,
                     SolverTroubleError, SoundnessViolation)
from .lti import (ContourKind, FrequencyGrid, PoleSet, StateSpace, _midpoint, _with_weights,
                  build_indented_contour, default_eps, evaluate_many,
                  imaginary_axis_poles, is_hurwitz)
from .matnum import (Sectoriality, as_matrix, classify_sectoriality, default_tol, matrix_phases,
                     singular_values, wrap_angle)

__all__ = [
    "MARGIN_FLOOR",
    "Verdict",
    "Check",
    "PointResult",
    "Failure",
    "StabilityVerdict",
    "FanVasePoint",
    "FanVaseSpec",
    "Membership",
    "DwInvertibility",
    "RobustStabilizationBound",
    "in_fan",
    "in_vase",
    "vase_invertibility",
    "vase_necessity_certificate",
    "dw_matrix_invertibility",
    "small_gain_check",
    "small_phase_check",
    "mixed_cutoff_check",
    "frequencywise_mixed_check",
    "small_vase_necessity_check",
    "dw_phase_stability_check",
    "dw_gain_stability_check",
    "cutoff_spec",
    "accretivity_margin",
    "cutoff_limit",
    "robust_stabilization_epsilon",
]

MARGIN_FLOOR = 1e-4
# closed conditions tolerate this much round-off; strict ones need margin > _BOUNDARY
_BOUNDARY = 1e-12
_MAX_DEPTH = 6
_MAX_POINTS = 6000
_N_SEARCH = 24


class Verdict(Enum):
    STABLE = "Stable"
    CONDITION_FAILED = "ConditionFailed"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Check:
    """One condition evaluated at one point.

    Strict conditions hold iff ``margin > 0``; closed ones iff ``margin >= 0``
    (up to round-off). ``decided=False`` flags a condition that could not be
    evaluated (semi-sectorial sample, solver trouble). Phase conditions
    reduced modulo ``2*pi`` record the reduced center offset in ``center``
    so that a crossing of the cut between samples can be detected.
    """

    condition: str
    margin: float
    strict: bool = True
    decided: bool = True
    center: float = np.nan

    @property
    def violated(self):
        if not self.decided:
            return False
        if self.strict:
            return self.margin <= 0.0
        return self.margin < -_BOUNDARY


@dataclass(frozen=True)
class PointResult:
    """Checks at one contour point.

    ``loop_slack`` is ``1 - sigma_max(P) sigma_max(C)`` when known. A point
    whose loop-gain slack exceeds the floor is robustly invertible, so small
    (but positive) theorem margins there are not flagged.
    """

    point: object
    checks: tuple
    loop_slack: float = -np.inf

    @property
    def margin(self):
        """Smallest strict margin (inf when the point has none)."""
        vals = [c.margin for c in self.checks if c.strict and c.decided]
        return min(vals) if vals else float("inf")

    def status(self, floor):
        if any(c.violated for c in self.checks):
            return "fail"
        if any(not c.decided for c in self.checks):
            return "unknown"
        if self.margin <= floor and not self.loop_slack > floor:
            return "unknown"
        return "pass"


@dataclass(frozen=True)
class Failure:
    omega: float
    s: complex
    condition: str
    margin: float
    kind: str  # "violated", "undecided" or "below-floor"


@dataclass
class StabilityVerdict:
    verdict: Verdict
    failures: list
    theorem: str
    margins_min: float
    points: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.verdict is Verdict.STABLE and self.failures:
            raise ValueError("a Stable verdict cannot carry failures")

    def __bool__(self):
        return self.verdict is Verdict.STABLE


# ------------------------------------------------------------------ sets


@dataclass(frozen=True)
class FanVasePoint:
    """Fan/vase parameters at one frequency.

    A disabled branch is absent: for the plant's vase it contributes nothing,
    for the controller's fan it imposes nothing. ``phase_closed`` and
    ``gain_closed`` override the default closure of the set being tested.
    """

    alpha: float = -np.pi / 2
    beta: float = np.pi / 2
    gamma: float = 1.0
    phase_enabled: bool = True
    gain_enabled: bool = True
    phase_closed: bool = None
    gain_closed: bool = None

    def __post_init__(self):
        if not (self.phase_enabled or self.gain_enabled):
            raise PreconditionError("at least one of the phase and gain branches must be enabled")
        if self.phase_enabled and not (np.isfinite(self.alpha) and np.isfinite(self.beta)
                                       and self.beta > self.alpha):
            raise PreconditionError(f"need alpha < beta, got ({self.alpha}, {self.beta})")
        if self.gain_enabled and not (0.0 < self.gamma < np.inf):
            raise PreconditionError(f"gamma must be positive and finite, got {self.gamma}")

    def validate(self):
        """Check the plant-side hypothesis ``beta - alpha in (0, pi]``."""
        if self.phase_enabled and not (0.0 < self.beta - self.alpha <= np.pi + _BOUNDARY):
            raise PreconditionError(
                f"beta - alpha must lie in (0, pi], got {self.beta - self.alpha:.6g}")
        return self

    def dual(self):
        """Controller fan ``P(-pi - alpha, pi - beta) & G(1/gamma)`` (strict)."""
        return FanVasePoint(-np.pi - self.alpha, np.pi - self.beta, 1.0 / self.gamma,
                            self.phase_enabled, self.gain_enabled, False, False)


@dataclass(frozen=True)
class FanVaseSpec:
    """Piecewise fan/vase parameters over frequency.

    ``pieces[k]`` governs ``[breakpoints[k-1], breakpoints[k])``. A piece is
    either a :class:`FanVasePoint` or a callable of the contour point ``s``
    (``j*omega`` on the axis) returning one. At a breakpoint the
    ``at_breakpoints`` rule selects the left value, the right value, or both
    (both must then pass).
    """

    pieces: tuple
    breakpoints: tuple = ()
    at_breakpoints: str = "both"

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if len(self.pieces) != len(self.breakpoints) + 1:
            raise PreconditionError("need exactly one more piece than breakpoints")
        b = np.asarray(self.breakpoints)
        if b.size and (np.any(b <= 0) or np.any(~np.isfinite(b)) or np.any(np.diff(b) <= 0)):
            raise PreconditionError("breakpoints must be positive, finite and increasing")
        if self.at_breakpoints not in ("both", "left", "right"):
            raise PreconditionError(f"unknown breakpoint rule {self.at_breakpoints!r}")
        for p in self.pieces:
            if isinstance(p, FanVasePoint):
                p.validate()
            elif not callable(p):
                raise PreconditionError("pieces must be FanVasePoint or callable")

    @classmethod
    def constant(cls, point):
        return cls((point,))

    def _resolve(self, k, s):
        p = self.pieces[k]
        p = p if isinstance(p, FanVasePoint) else p(s)
        return p.validate()

    def points_at(self, omega, s=None):
        """``[(label, FanVasePoint)]`` governing frequency `omega`."""
        s = complex(0.0, omega) if s is None else s
        b = np.asarray(self.breakpoints)
        if not b.size or not np.isfinite(omega):
            return [("", self._resolve(len(self.pieces) - 1 if b.size else 0, s))]
        hit = np.nonzero(np.abs(b - omega) <= 1e-12 * max(1.0, omega))[0]
        if hit.size:
            j = int(hit[0])
            left = ("left", self._resolve(j, s))
            right = ("right", self._resolve(j + 1, s))
            return {"left": [left], "right": [right], "both": [left, right]}[self.at_breakpoints]
        return [("", self._resolve(int(np.searchsorted(b, omega, side="right")), s))]


@dataclass(frozen=True)
class Membership:
    """Outcome of a fan or vase membership test.

    ``phase_low``/``phase_high`` are the radian slacks to ``alpha``/``beta``
    (inf for a disabled branch, -inf when phases are undefined); ``gain`` is
    ``1 - sigma_max / gamma``.
    """

    inside: bool
    phase_low: float
    phase_high: float
    gain: float
    sectoriality: Sectoriality
    margin: float


def _sector_slacks(lo, hi, alpha, beta):
    # best 2*pi shift of [lo, hi] into [alpha, beta]
    c, m = 0.5 * (lo + hi), 0.5 * (alpha + beta)
    k = np.round((m - c) / (2.0 * np.pi))
    shift = 2.0 * np.pi * k
    return float(lo + shift - alpha), float(beta - hi - shift)


def _sector_offset(lo, hi, alpha, beta):
    return float(wrap_angle(0.5 * (lo + hi) - 0.5 * (alpha + beta)))


def _sum_slack(lo1, hi1, lo2, hi2):
    """Slack of ``[lo1+lo2, hi1+hi2]`` inside ``(-pi, pi)`` modulo ``2*pi``.

    Returns ``(slack, reduced center)``.
    """
    c = float(wrap_angle(0.5 * (lo1 + hi1 + lo2 + hi2)))
    half = 0.5 * ((hi1 - lo1) + (hi2 - lo2))
    return float(np.pi - abs(c) - half), c


def _gain_slack(smax, gamma):
    return float(1.0 - smax / gamma)


def _member(a, point, phase_closed, gain_closed, union):
    a = as_matrix(a)
    smax = float(singular_values(a)[0])
    try:
        ps = matrix_phases(a)
        tag = Sectoriality.SECTORIAL
    except NotSectorialError:
        ps = None
        tag = classify_sectoriality(a).tag
    pc = phase_closed if point.phase_closed is None else point.phase_closed
    gc = gain_closed if point.gain_closed is None else point.gain_closed

    def ok(m, closed):
        return m >= -_BOUNDARY if closed else m > _BOUNDARY

    if point.phase_enabled:
        if ps is None:
            lo_s = hi_s = -np.inf
        else:
            lo_s, hi_s = _sector_slacks(ps.lo, ps.hi, point.alpha, point.beta)
        phase_ok = ps is not None and ok(lo_s, pc) and ok(hi_s, pc)
    else:
        lo_s = hi_s = np.inf
        phase_ok = not union
    if point.gain_enabled:
        g_s = _gain_slack(smax, point.gamma)
        gain_ok = ok(g_s, gc)
    else:
        g_s = np.inf
        gain_ok = not union
    if union:
        pm = min(lo_s, hi_s) if point.phase_enabled else -np.inf
        gm = g_s if point.gain_enabled else -np.inf
        return Membership(phase_ok or gain_ok, lo_s, hi_s, g_s, tag, max(pm, gm))
    return Membership(phase_ok and gain_ok, lo_s, hi_s, g_s, tag, min(lo_s, hi_s, g_s))


def in_fan(a, point):
    """Membership in ``P(alpha, beta) & G(gamma)``, strict unless `point` says closed.

    Non-sectorial matrices are outside whenever the phase branch is enabled.

    Examples
    --------
    >>> in_fan(0.5 * np.exp(0.5j), FanVasePoint(0.0, np.pi / 4, 1.0)).inside
    True
    """
    return _member(a, point, False, False, union=False)


def in_vase(a, point):
    """Membership in ``P_closed(alpha, beta) | G_closed(gamma)``."""
    return _member(a, point, True, True, union=True)


def _check_sets(alpha, beta, gamma):
    return FanVasePoint(float(alpha), float(beta), float(gamma)).validate()


def _assert_invertible(a, b, what):
    m = np.eye(a.shape[0]) + a @ b
    smin = singular_values(m)[-1]
    scale = 1.0 + np.linalg.norm(a, 2) * np.linalg.norm(b, 2)
    if smin <= 1e-14 * scale:
        raise SoundnessViolation(f"{what} held but I + AB is singular (sigma_min={smin:.3g})")


def vase_invertibility(a, b, alpha, beta, gamma):
    """Sufficient test for invertibility of ``I + AB``.

    True when ``a`` lies in the closed vase ``P(alpha, beta) | G(gamma)`` and
    ``b`` in the strict fan ``P(-pi - alpha, pi - beta) & G(1/gamma)``.
    False means no claim. Whenever the test passes the conclusion is checked
    numerically and :class:`SoundnessViolation` is raised if it fails.
    """
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError("a and b must have the same shape")
    pt = _check_sets(alpha, beta, gamma)
    ok = in_vase(a, pt).inside and in_fan(b, pt.dual()).inside
    if ok:
        _assert_invertible(a, b, "vase hypothesis")
    return bool(ok)


def vase_necessity_certificate(b, alpha, beta, gamma):
    """Whether ``I + AB`` is invertible for every ``A`` in the closed vase.

    This holds exactly when ``b`` is in ``P(-pi - alpha, pi - beta) & G(1/gamma)``.

    Raises
    ------
    NotSectorialError
        If `b` is not sectorial.
    """
    b = as_matrix(b)
    cls = classify_sectoriality(b)
    if not cls.is_sectorial:
        raise NotSectorialError(f"b is {cls.tag.value}", cls.margin)
    pt = _check_sets(alpha, beta, gamma)
    return bool(in_fan(b, pt.dual()).inside)


@dataclass(frozen=True)
class DwInvertibility:
    holds: bool
    reason: str
    phase_high: float = float("nan")
    phase_low: float = float("nan")
    gain: float = float("nan")

    def __bool__(self):
        return self.holds


def dw_matrix_invertibility(a, b, r):
    """Invertibility of ``I + AB`` from constrained phases of ``a`` at level ``r``.

    Conditions: ``a`` is r-sectorial,
    ``psi_hi_r(a) + phi_hi(b) < pi``, ``psi_lo_r(a) + phi_lo(b) > -pi`` and
    ``sigma_max(b) * r < 1``. ``phase_high``/``phase_low`` are the slacks of
    the two phase conditions, ``gain`` is ``1 - sigma_max(b) r``.

    Raises
    ------
    NotSectorialError
        If `b` is not sectorial.
    """
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError("a and b must have the same shape")
    r = float(r)
    pb = matrix_phases(b)
    g = 1.0 - float(singular_values(b)[0]) * r
    try:
        sec = dwshell.constrained_phase_sector(a, r) if r > 0 else None
        if sec is None:
            pa = matrix_phases(a)
            lo, hi, empty = pa.lo, pa.hi, False
        else:
            lo, hi, empty = sec.lo, sec.hi, sec.empty
    except NotSectorialError as exc:
        return DwInvertibility(False, f"a is not r-sectorial (margin {exc.margin:.3g})", gain=g)
    if empty:
        ph = pl = np.inf
    else:
        c = 0.5 * (lo + hi + pb.lo + pb.hi)
        k = np.round(-c / (2.0 * np.pi))
        shift = 2.0 * np.pi * k
        ph = float(np.pi - (hi + pb.hi + shift))
        pl = float(lo + pb.lo + shift + np.pi)
    holds = ph > _BOUNDARY and pl > _BOUNDARY and g > _BOUNDARY
    if holds:
        _assert_invertible(a, b, "constrained-phase hypothesis")
        reason = "conditions hold"
    elif g <= _BOUNDARY:
        reason = "sigma_max(b) * r >= 1"
    else:
        reason = "phase sum condition fails"
    return DwInvertibility(bool(holds), reason, ph, pl, g)


# -------------------------------------------------------- checker engine


class _Sample:
    """Loop-matrix sample; phases are computed on first use."""

    __slots__ = ("value", "gain", "_cls")

    def __init__(self, value):
        self.value = value
        self.gain = float(np.linalg.norm(value, 2)) if value.size else 0.0
        self._cls = None

    def _classify(self):
        if self._cls is None:
            v = self.value
            try:
                self._cls = (matrix_phases(v), Sectoriality.SECTORIAL, np.inf)
            except NotSectorialError as exc:
                # the error carries the optimal rotated margin; no second search needed
                m = exc.margin
                tag = (Sectoriality.SEMI_SECTORIAL if m >= -default_tol(v)
                       else Sectoriality.NON_SECTORIAL)
                self._cls = (None, tag, m)
        return self._cls

    @property
    def sector(self):
        return self._classify()[0]

    @property
    def tag(self):
        return self._classify()[1]

    @property
    def class_margin(self):
        return self._classify()[2]

    @property
    def sectorial(self):
        return self.sector is not None


_sample = _Sample


def _class_check(name, smp):
    """Check flagging a non-sectorial (violated) or semi-sectorial (undecided) sample."""
    label = f"{name} sectorial"
    if smp.tag is Sectoriality.NON_SECTORIAL:
        return Check(label, min(smp.class_margin, 0.0))
    return Check(label, smp.class_margin, decided=False)


def _phase_sum_checks(sp, sc):
    out = []
    for name, smp in (("C", sc), ("P", sp)):
        if not smp.sectorial:
            out.append(_class_check(name, smp))
    if out:
        return out
    slack, c = _sum_slack(sp.sector.lo, sp.sector.hi, sc.sector.lo, sc.sector.hi)
    return [Check("phase sum", slack, center=c)]


def _gain_check(sp, sc, label="gain product"):
    return [Check(label, 1.0 - sp.gain * sc.gain)]


def _at_infinity(point):
    return point.kind is ContourKind.INFINITY


def _infinity_rule(point, sp, sc):
    """Gain fallback at s = inf when a feedthrough matrix is not sectorial."""
    if _at_infinity(point) and not (sp.sectorial and sc.sectorial):
        return _gain_check(sp, sc, "gain product at infinity")
    return None


def _key(p):
    return (p.kind, p.s)


def _needs_refine(a, b, floor):
    if _at_infinity(a.point) or _at_infinity(b.point):
        return False
    if {c.condition for c in a.checks} != {c.condition for c in b.checks}:
        return False
    if a.status(0.0) == "fail" or b.status(0.0) == "fail":
        return False
    if a.loop_slack > floor and b.loop_slack > floor:
        return False
    ma, mb = a.margin, b.margin
    if not (np.isfinite(ma) and np.isfinite(mb)):
        return False
    return min(ma, mb) < max(10.0 * floor, abs(ma - mb))


def _cut_crossings(a, b):
    """Conditions whose reduced center passes the +-pi cut between two samples.

    The center is followed along the shortest increment, so a crossing
    means the unreduced phase went through an odd multiple of pi, where
    the slack of that condition is not positive.
    """
    if _at_infinity(a.point) or _at_infinity(b.point):
        return []
    cb = {ch.condition: ch.center for ch in b.checks if np.isfinite(ch.center)}
    out = []
    for ch in a.checks:
        if not np.isfinite(ch.center) or ch.condition not in cb:
            continue
        d = float(wrap_angle(cb[ch.condition] - ch.center))
        x = ch.center + d
        if abs(x) > np.pi:
            t = (np.copysign(np.pi, x) - ch.center) / d
            out.append((ch.condition, t))
    return out


def _crossing_failures(pts, cache):
    out = []
    for p, q in zip(pts, pts[1:]):
        a, b = cache[_key(p)], cache[_key(q)]
        for cond, t in _cut_crossings(a, b):
            s = p.s + t * (q.s - p.s)
            w = p.omega + t * (q.omega - p.omega)
            out.append(Failure(float(w), s, cond + " (between samples)", 0.0, "violated"))
    return out


def _run(theorem, contour, systems, evaluate, floor, refine, loop=True):
    cache = {}
    pts = list(contour)
    for depth in range(_MAX_DEPTH + 1):
        new = [p for p in pts if _key(p) not in cache]
        if new:
            s = np.array([p.s for p in new], dtype=complex)
            vals = [evaluate_many(g, s) for g in systems]
            for i, p in enumerate(new):
                smps = [_sample(v[i]) for v in vals]
                slack = 1.0 - smps[0].gain * smps[1].gain if loop else -np.inf
                cache[_key(p)] = PointResult(p, tuple(evaluate(p, *smps)), slack)
        if not refine or depth == _MAX_DEPTH:
            break
        insert = {}
        for i in range(len(pts) - 1):
            a, b = cache[_key(pts[i])], cache[_key(pts[i + 1])]
            if _needs_refine(a, b, floor) or (
                    "fail" not in (a.status(0.0), b.status(0.0)) and _cut_crossings(a, b)):
                mid = _midpoint(pts[i], pts[i + 1])
                if mid is not None and abs(mid.s - pts[i].s) > 1e-13 * (1 + abs(mid.s)):
                    insert[i] = mid
        if not insert or len(pts) + len(insert) > _MAX_POINTS:
            break
        merged = []
        for i, p in enumerate(pts):
            merged.append(p)
            if i in insert:
                merged.append(insert[i])
        pts = merged
    results = tuple(cache[_key(p)] for p in _with_weights(pts))
    return _aggregate(theorem, results, floor, _crossing_failures(pts, cache))


def _aggregate(theorem, results, floor, extra=()):
    failures = list(extra)
    worst = 0.0 if failures else np.inf
    failed = bool(failures)
    unknown = False
    for pr in results:
        p = pr.point
        for ch in pr.checks:
            kind = None
            if ch.violated:
                kind, failed = "violated", True
            elif not ch.decided:
                kind, unknown = "undecided", True
            elif ch.strict and ch.margin <= floor and not pr.loop_slack > floor:
                kind, unknown = "below-floor", True
            if kind:
                failures.append(Failure(float(p.omega), p.s, ch.condition, float(ch.margin), kind))
        worst = min(worst, pr.margin)
    if failed:
        verdict = Verdict.CONDITION_FAILED
    elif unknown:
        verdict = Verdict.UNKNOWN
    else:
        verdict = Verdict.STABLE
    return StabilityVerdict(verdict, failures, theorem, float(worst), results)


def _pair(p, c):
    if not isinstance(p, StateSpace) or not isinstance(c, StateSpace):
        raise TypeError("plant and controller must be StateSpace")
    n = p.require_square()
    if c.require_square() != n:
        raise DimensionError("plant and controller sizes differ")


def _require_stable(sys, name):
    if not is_hurwitz(sys):
        raise PreconditionError(f"{name} must be stable (Hurwitz)")


def _require_semistable(sys, name):
    poles = imaginary_axis_poles(sys)
    if poles.has_orhp_pole:
        raise PreconditionError(f"{name} has an open right-half-plane pole")
    if not poles.all_simple:
        bad = [w for w, m in zip(poles.imag_axis_freqs, poles.multiplicities) if m > 1]
        raise PreconditionError(f"{name} has a repeated imaginary-axis pole at omega={bad[0]:.6g}")
    return poles


def _axis_contour(grid, extra=()):
    return build_indented_contour(PoleSet(), grid=grid or FrequencyGrid(),
                                  extra_frequencies=extra)


def _indented(poles, grid, eps, extra=(), eps_cap=None):
    grid = grid or FrequencyGrid()
    if eps is None:
        lo_end = 0.0 if grid.include_zero else grid.omega_min
        eps = default_eps(poles, lo_end, grid.omega_max)
        if eps_cap is not None:
            eps = min(eps, eps_cap)
    return build_indented_contour(poles, eps=eps, grid=grid, extra_frequencies=extra)


# ------------------------------------------------------------ checkers


def small_gain_check(p, c, grid=None, margin_floor=MARGIN_FLOOR, refine=True):
    """Gain product ``sigma_max(P) sigma_max(C) < 1`` on ``[0, inf]``.

    Raises
    ------
    PreconditionError
        If `p` or `c` is not stable.
    """
    _pair(p, c)
    _require_stable(p, "plant")
    _require_stable(c, "controller")

    def ev(point, sp, sc):
        return _gain_check(sp, sc)

    return _run("small-gain", _axis_contour(grid), (p, c), ev, margin_floor, refine)


def small_phase_check(p, c, grid=None, eps=None, margin_floor=MARGIN_FLOOR, refine=True):
    """Phase sums ``phi_hi(P) + phi_hi(C) < pi`` and ``phi_lo(P) + phi_lo(C) > -pi``.

    Evaluated on the indented contour around the imaginary-axis poles of `p`.
    At ``s = inf`` non-sectorial feedthroughs fall back to the gain product.
    """
    _pair(p, c)
    poles = _require_semistable(p, "plant")
    _require_stable(c, "controller")

    def ev(point, sp, sc):
        return _infinity_rule(point, sp, sc) or _phase_sum_checks(sp, sc)

    return _run("small-phase", _indented(poles, grid, eps), (p, c), ev, margin_floor, refine)


def mixed_cutoff_check(p, c, omega_c, grid=None, eps=None, margin_floor=MARGIN_FLOOR,
                       refine=True):
    """Phase conditions below `omega_c`, gain product from `omega_c` on.

    Raises
    ------
    PreconditionError
        If `omega_c` is not in ``(0, inf)``, if `p` has an axis pole at or
        above `omega_c`, or if `c` is not stable.
    """
    _pair(p, c)
    omega_c = float(omega_c)
    if not 0.0 < omega_c < np.inf:
        raise PreconditionError(f"omega_c must lie in (0, inf), got {omega_c}")
    poles = _require_semistable(p, "plant")
    _require_stable(c, "controller")
    top = max(poles.imag_axis_freqs, default=None)
    if top is not None and top >= omega_c:
        raise PreconditionError(
            f"plant has an imaginary-axis pole at {top:.6g} >= omega_c={omega_c:.6g}")
    cap = None if top is None else 0.25 * (omega_c - top)

    def ev(point, sp, sc):
        if point.omega < omega_c:
            return _phase_sum_checks(sp, sc)
        return _gain_check(sp, sc)

    contour = _indented(poles, grid, eps, extra=(omega_c,), eps_cap=cap)
    return _run("mixed-cutoff", contour, (p, c), ev, margin_floor, refine)


def _vase_checks(sp, sc, pt, label):
    sfx = f" ({label})" if label else ""
    out = []
    mp = _member(sp.value, pt, True, True, union=True)
    semi = pt.phase_enabled and mp.sectoriality is Sectoriality.SEMI_SECTORIAL
    # without phases a semi-sectorial plant can neither pass nor fail the phase branch
    out.append(Check("P in vase" + sfx, mp.margin, strict=False,
                     decided=mp.inside or not semi))
    dual = pt.dual()
    if dual.phase_enabled and not sc.sectorial:
        out.append(_class_check("C", sc))
    elif dual.phase_enabled:
        lo, hi = _sector_slacks(sc.sector.lo, sc.sector.hi, dual.alpha, dual.beta)
        c = _sector_offset(sc.sector.lo, sc.sector.hi, dual.alpha, dual.beta)
        out.append(Check("C phase low" + sfx, lo, center=c))
        out.append(Check("C phase high" + sfx, hi, center=c))
    if dual.gain_enabled:
        out.append(Check("C gain" + sfx, _gain_slack(sc.gain, dual.gamma)))
    return out


def frequencywise_mixed_check(p, c, spec, grid=None, eps=None, margin_floor=MARGIN_FLOOR,
                              refine=True):
    """Frequency-wise fan/vase test.

    At every contour point ``P`` must lie in the closed vase of `spec` and
    ``C`` in the dual (strict) fan.

    Raises
    ------
    PreconditionError
        If `spec` violates ``beta - alpha in (0, pi]`` or the systems violate
        the stability hypotheses.
    """
    _pair(p, c)
    if not isinstance(spec, FanVaseSpec):
        raise TypeError("spec must be a FanVaseSpec")
    poles = _require_semistable(p, "plant")
    _require_stable(c, "controller")

    def ev(point, sp, sc):
        fallback = _infinity_rule(point, sp, sc)
        out = []
        for label, pt in spec.points_at(point.omega, point.s):
            if fallback and pt.phase_enabled:
                return fallback
            out.extend(_vase_checks(sp, sc, pt, label))
        return out

    contour = _indented(poles, grid, eps, extra=spec.breakpoints)
    return _run("frequencywise-mixed", contour, (p, c), ev, margin_floor, refine)


def cutoff_spec(p, omega_c):
    """Fan/vase spec that reproduces the cut-off test for plant `p`.

    Below `omega_c` the phase branch hugs the plant's own phases (gain branch
    disabled); from `omega_c` on only the gain branch remains, with ``gamma``
    equal to the plant's largest singular value.
    """
    omega_c = float(omega_c)

    def low(s):
        v = evaluate_many(p, np.array([s]))[0]
        try:
            ps = matrix_phases(v)
        except NotSectorialError:
            return FanVasePoint(gain_enabled=False, phase_closed=True)
        d = min(1e-9, 0.5 * (np.pi - ps.spread))
        return FanVasePoint(ps.lo - d, ps.hi + d, gain_enabled=False, phase_closed=True)

    def high(s):
        v = evaluate_many(p, np.array([s]))[0]
        g = float(np.linalg.norm(v, 2))
        return FanVasePoint(gamma=max(g, 1e-300), phase_enabled=False, gain_closed=True)

    return FanVaseSpec((low, high), (omega_c,), at_breakpoints="right")


def _scalar_weight(w, name, inverse_name):
    if not isinstance(w, StateSpace) or w.d.shape != (1, 1):
        raise PreconditionError(f"weight {name} must be a scalar StateSpace")
    if not is_hurwitz(w):
        raise PreconditionError(f"weight {name} must be stable")
    dw = float(w.d[0, 0])
    if dw == 0.0:
        raise PreconditionError(f"weight {inverse_name} is improper: {name}(inf) = 0")
    if w.n_states:
        a_inv = w.a - w.b @ w.c / dw
        if not np.all(np.linalg.eigvals(a_inv).real < -1e-9):
            raise PreconditionError(f"weight {inverse_name} must be stable")


def small_vase_necessity_check(c, g, h, grid=None, margin_floor=MARGIN_FLOOR, refine=True):
    """Robust stability against the whole vase ``P(-pi/2 + ang h, pi/2 + ang h) | G(|g|)``.

    Tests ``C(jw) in P(-pi/2 - ang h, pi/2 - ang h) & G(1/|g|)`` on the grid,
    which is necessary and sufficient for stability of ``P # C`` for every
    stable plant in the vase. At ``s = inf`` a zero feedthrough of `c`
    passes outright.

    Raises
    ------
    PreconditionError
        Naming the weight and frequency if `g` or `h` leave their classes.
    """
    c.require_square()
    _require_stable(c, "controller")
    _scalar_weight(g, "g", "1/g")
    _scalar_weight(h, "h", "1/h")
    contour = _axis_contour(grid)
    s = np.array([pt.s for pt in contour], dtype=complex)
    gv = evaluate_many(g, s)[:, 0, 0]
    hv = evaluate_many(h, s)[:, 0, 0]
    for pt, x, y in zip(contour, gv, hv):
        if not 0.0 < abs(x) < np.inf:
            raise PreconditionError(f"weight g has |g| = {abs(x):.3g} at omega={pt.omega:.6g}")
        if not abs(np.angle(y)) < np.pi / 2:
            raise PreconditionError(
                f"weight h has angle {np.angle(y):.6g} outside (-pi/2, pi/2) at omega={pt.omega:.6g}")

    def ev(point, sc, sg, sh):
        if _at_infinity(point) and sc.gain == 0.0:
            return [Check("C(inf) = 0", 1.0)]
        ang = float(np.angle(sh.value[0, 0]))
        pt = FanVasePoint(-np.pi / 2 + ang, np.pi / 2 + ang, float(abs(sg.value[0, 0])))
        dual = pt.dual()
        if not sc.sectorial:
            return [_class_check("C", sc)]
        lo, hi = _sector_slacks(sc.sector.lo, sc.sector.hi, dual.alpha, dual.beta)
        c = _sector_offset(sc.sector.lo, sc.sector.hi, dual.alpha, dual.beta)
        return [Check("C phase low", lo, center=c), Check("C phase high", hi, center=c),
                Check("C gain", _gain_slack(sc.gain, dual.gamma))]

    return _run("small-vase", contour, (c, g, h), ev, margin_floor, refine, loop=False)


def _dw_phase_slack(pv, sp, r, sc):
    """Phase slack of the constrained sector at level r; None if not r-sectorial.

    Returns ``((slack, center), check_if_failed)``.
    """
    if r == 0.0:
        if not sp.sectorial:
            return None, _class_check("P", sp)
        return _sum_slack(sp.sector.lo, sp.sector.hi, sc.sector.lo, sc.sector.hi), None
    try:
        sec = dwshell.constrained_phase_sector(pv, r)
    except NotSectorialError as exc:
        m = exc.margin
        decided = not abs(m) <= dwshell._STRICT
        return None, Check("P r-sectorial", min(m, 0.0) if decided else m, decided=decided)
    if sec.empty:
        return (np.inf, np.nan), None
    return _sum_slack(sec.lo, sec.hi, sc.sector.lo, sc.sector.hi), None


def _dw_phase_point(sp, sc, r):
    res, bad = _dw_phase_slack(sp.value, sp, r, sc)
    if bad is not None:
        return [bad]
    out = [Check("constrained phase sum", res[0], center=res[1])]
    if r > 0:
        out.append(Check("C gain times r", 1.0 - sc.gain * r))
    return out


def _bisect_candidates(n, f):
    """First index with ``f(i) >= 0`` for nondecreasing f on ``range(n)`` (n if none)."""
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if f(mid) >= 0:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _dw_phase_search(sp, sc):
    if sp.gain == 0.0:
        return [Check("zero plant", 1.0)]
    smax = sp.gain
    cands = [smax * (1 + 1e-3)] + list(np.geomspace(1e-3 * smax, smax, _N_SEARCH)[::-1]) + [0.0]
    memo, centers = {}, {}
    trouble = []

    def phase(i):
        if i not in memo:
            try:
                res, _ = _dw_phase_slack(sp.value, sp, cands[i], sc)
            except SolverTroubleError:
                trouble.append(cands[i])
                res = None
            memo[i], centers[i] = (-np.inf, np.nan) if res is None else res
        return memo[i]

    def gain(i):
        return np.inf if cands[i] == 0.0 else 1.0 - sc.gain * cands[i]

    # phase slack shrinks and gain slack grows along the (descending) candidates
    k = _bisect_candidates(len(cands), lambda i: gain(i) - phase(i))
    best, best_i = -np.inf, None
    for i in (k - 1, k):
        if 0 <= i < len(cands):
            m = min(gain(i), phase(i))
            if m > best:
                best, best_i = m, i
    if trouble and best <= MARGIN_FLOOR:
        return [Check("constrained phase search (SDP trouble)", best, decided=False)]
    ph = Check("constrained phase sum", phase(best_i), center=centers[best_i])
    if cands[best_i] == 0.0:
        return [ph]
    return [ph, Check("C gain times r", gain(best_i))]


def dw_phase_stability_check(p, c, r_schedule=None, grid=None, eps=None,
                             margin_floor=MARGIN_FLOOR, refine=True):
    """Constrained-phase test with a gain level ``r(omega)``.

    At each contour point ``P`` must be r-sectorial with
    ``psi_hi_r(P) + phi_hi(C) < pi``, ``psi_lo_r(P) + phi_lo(C) > -pi`` and
    ``sigma_max(C) r < 1``. Without `r_schedule` a level is searched per
    point among ``0``, 24 log-spaced values up to ``sigma_max(P)`` and one
    value just above it (empty slice).
    """
    _pair(p, c)
    poles = _require_semistable(p, "plant")
    _require_stable(c, "controller")

    def ev(point, sp, sc):
        fallback = _infinity_rule(point, sp, sc)
        if fallback:
            return fallback
        if not sc.sectorial:
            return [_class_check("C", sc)]
        try:
            if r_schedule is None:
                return _dw_phase_search(sp, sc)
            r = float(r_schedule(point.omega))
            if not r >= 0.0:
                raise PreconditionError(f"r_schedule gave {r} at omega={point.omega}")
            return _dw_phase_point(sp, sc, r)
        except SolverTroubleError as exc:
            return [Check(f"SDP trouble: {exc}", np.nan, decided=False)]

    return _run("dw-phase", _indented(poles, grid, eps), (p, c), ev, margin_floor, refine)


def _gamma_theta(sp, theta, allow_sampling):
    """Constrained gain of the plant sample, or None when not certifiable."""
    if theta == 0.0 or not sp.sectorial:
        return sp.gain  # gamma_theta <= sigma_max always
    res = dwshell.constrained_gain(sp.value, theta)
    if res.approximate and not allow_sampling:
        return None
    return res.value


def _dw_gain_checks(sp, sc, theta, allow_sampling):
    if theta == 0.0:
        return _gain_check(sp, sc)
    if not sc.sectorial:
        return [_class_check("C", sc)]
    g = _gamma_theta(sp, theta, allow_sampling)
    if g is None:
        return [Check("constrained gain (theta >= pi/2)", np.nan, decided=False)]
    c = float(wrap_angle(sc.sector.center))
    base = np.pi - abs(c) - 0.5 * sc.sector.spread
    return [Check("constrained gain product", 1.0 - g * sc.gain),
            Check("C phase within pi - theta", base - theta, center=c)]


def _dw_gain_search(sp, sc):
    if not sc.sectorial:
        return _gain_check(sp, sc)
    thetas = np.linspace(0.0, np.pi / 2, _N_SEARCH, endpoint=False)[::-1]
    c = float(wrap_angle(sc.sector.center))
    base = np.pi - abs(c) - 0.5 * sc.sector.spread
    memo = {}

    def gain(i):
        if i not in memo:
            memo[i] = 1.0 - _gamma_theta(sp, thetas[i], False) * sc.gain
        return memo[i]

    def phase(i):
        return np.inf if thetas[i] == 0.0 else base - thetas[i]

    # gain slack shrinks and phase slack grows as theta decreases
    k = _bisect_candidates(len(thetas), lambda i: phase(i) - gain(i))
    best, best_i = -np.inf, None
    for i in (k - 1, k):
        if 0 <= i < len(thetas):
            m = min(gain(i), phase(i))
            if m > best:
                best, best_i = m, i
    if thetas[best_i] == 0.0:
        return _gain_check(sp, sc)
    return [Check("constrained gain product", gain(best_i)),
            Check("C phase within pi - theta", phase(best_i), center=c)]


def dw_gain_stability_check(p, c, theta_schedule=None, grid=None, margin_floor=MARGIN_FLOOR,
                            refine=True, allow_sampling=False):
    """Constrained-gain test with an angle ``theta(omega)``.

    At each frequency ``gamma_theta(P) sigma_max(C) < 1`` and
    ``Psi(C) in (-pi + theta, pi - theta)``. ``theta = 0`` is the gain
    product and needs no phase information. Angles ``>= pi/2`` only have a
    sampled constrained gain, which is a lower estimate; such points are
    Unknown unless `allow_sampling` is set (then the verdict is not
    rigorous). Without `theta_schedule`, 24 angles in ``[0, pi/2)`` are
    searched per point. Non-sectorial plant samples use
    ``gamma_theta <= sigma_max``.

    Raises
    ------
    PreconditionError
        If `p` or `c` is unstable or a scheduled angle is outside ``[0, pi)``.
    """
    _pair(p, c)
    _require_stable(p, "plant")
    _require_stable(c, "controller")

    def ev(point, sp, sc):
        try:
            if theta_schedule is None:
                return _dw_gain_search(sp, sc)
            th = float(theta_schedule(point.omega))
            if not 0.0 <= th < np.pi:
                raise PreconditionError(f"theta_schedule gave {th} at omega={point.omega}")
            return _dw_gain_checks(sp, sc, th, allow_sampling)
        except SolverTroubleError as exc:
            return [Check(f"SDP trouble: {exc}", np.nan, decided=False)]

    return _run("dw-gain", _axis_contour(grid), (p, c), ev, margin_floor, refine)


# ------------------------------------------------- robust stabilization


@dataclass(frozen=True)
class RobustStabilizationBound:
    """``c = eta sigma_max(K) / omega_c + gamma sigma_max(K)``; any ``0 < eps < 1/c`` works."""

    c: float
    epsilon_sup: float
    omega_c: float
    omega_c_limit: float = float("nan")


def accretivity_margin(m):
    """Smallest eigenvalue of the Hermitian part of `m`.

    When positive, ``m + E`` stays accretive for every ``||E|| <`` this value.
    """
    m = as_matrix(m)
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


def _check_k(k):
    k = np.atleast_2d(np.asarray(k, dtype=float))
    if k.shape[0] != k.shape[1]:
        raise DimensionError("k must be square")
    s = singular_values(k)
    if s[-1] <= 1e-12 * max(s[0], 1e-300):
        raise PreconditionError("k must be nonsingular")
    return k, float(s[0])


def cutoff_limit(k, gamma, delta_tilde):
    """Upper bound ``delta_tilde / (gamma sigma_max(K))`` for the cut-off frequency."""
    _, smax = _check_k(k)
    return float(delta_tilde) / (float(gamma) * smax)


def robust_stabilization_epsilon(k, delta, eta, gamma, omega_c, delta_tilde=None):
    """Gain bound for robust stabilization of ``A/s + P(s)`` by ``eps K``.

    Parameters
    ----------
    k : array_like
        Nonsingular real gain.
    delta, eta : float
        Bounds ``sigma_min(A) >= delta`` and ``sigma_max(A) <= eta``.
    gamma : float
        Bound on ``||P||_inf``.
    omega_c : float
        Cut-off frequency. When `delta_tilde` (the accretivity margin of
        ``KA``) is given it must lie below ``delta_tilde / (gamma sigma_max(K))``.

    Returns
    -------
    RobustStabilizationBound
    """
    k, smax = _check_k(k)
    for name, v in (("delta", delta), ("eta", eta), ("gamma", gamma), ("omega_c", omega_c)):
        if not 0.0 < float(v) < np.inf:
            raise PreconditionError(f"{name} must be positive and finite, got {v}")
    limit = float("nan")
    if delta_tilde is not None:
        if not float(delta_tilde) > 0:
            raise PreconditionError("delta_tilde must be positive (KA strictly accretive)")
        limit = cutoff_limit(k, gamma, delta_tilde)
        if not float(omega_c) < limit:
            raise PreconditionError(f"omega_c={omega_c} must be below {limit:.6g}")
    c = float(eta) * smax / float(omega_c) + float(gamma) * smax
    return RobustStabilizationBound(c, 1.0 / c, float(omega_c), limit)
