"""Generalized KYP certificates on frequency intervals.

A frequency interval on the imaginary axis is described by a pair of
2x2 Hermitian matrices ``(Phi, Psi)``::

    Lambda(Phi, Psi) = { lam : [lam; 1]^* Phi [lam; 1] = 0,
                               [lam; 1]^* Psi [lam; 1] >= 0 }

With ``Phi = [[0, 1], [1, 0]]`` the first condition selects the
imaginary axis; ``Psi`` cuts out ``j[0, w_c]`` or ``j[w_c, inf)``. A
frequency-domain inequality on that interval holds iff

    N^* (Phi (x) P + Psi (x) Q) N + M <= 0,   N = [[A, B], [I, 0]]

has a Hermitian solution ``P`` and a PSD solution ``Q``.

The bounded and sectored check combines three such LMIs: two
low-frequency blocks bounding the phase sector from below and above,
and one high-frequency block bounding the gain.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from . import sdpkit
from .errors import DimensionError, PreconditionError, SolverTroubleError
from .lti import StateSpace, evaluate

__all__ = [
    "CurveKind",
    "CurveSpec",
    "CurveSegment",
    "GkypLmi",
    "KypCertificate",
    "KypStatus",
    "BoundedSectoredResult",
    "curve_points",
    "curve_conditions",
    "phase_multiplier",
    "gain_multiplier",
    "supply_matrix",
    "assemble_gkyp_lmi",
    "solve_gkyp",
    "bounded_sectored_check",
    "block_supplies",
    "certificate_residuals",
    "tail_gain_bound",
    "is_controllable",
    "is_observable",
]

_RANK_TOL = 1e-8
_PHI = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


class CurveKind(Enum):
    LOW = "LowFreq"
    HIGH = "HighFreq"


@dataclass(frozen=True)
class CurveSpec:
    """Frequency interval ``j[0, w_c]`` (LOW) or ``j[w_c, inf)`` (HIGH)."""

    kind: CurveKind
    omega_c: float

    def __post_init__(self):
        w = float(self.omega_c)
        if not (np.isfinite(w) and w > 0):
            raise PreconditionError(f"omega_c must be positive and finite, got {self.omega_c}")
        object.__setattr__(self, "omega_c", w)
        object.__setattr__(self, "kind", CurveKind(self.kind))

    @classmethod
    def low(cls, omega_c):
        return cls(CurveKind.LOW, omega_c)

    @classmethod
    def high(cls, omega_c):
        return cls(CurveKind.HIGH, omega_c)

    @property
    def label(self):
        return f"{self.kind.value}({self.omega_c:g})"

    @property
    def phi(self):
        return _PHI.copy()

    @property
    def psi(self):
        w = self.omega_c
        if self.kind is CurveKind.LOW:
            return np.array([[-2.0, 1j * w], [-1j * w, 0.0]])
        return np.array([[0.0, 1j], [-1j, -2.0 * w]])


@dataclass(frozen=True)
class CurveSegment:
    """Symbolic interval ``j[lower, upper]`` plus sample points on it."""

    lower: float
    upper: float
    samples: np.ndarray = field(repr=False)

    def contains(self, omega):
        return self.lower <= omega <= self.upper


def curve_conditions(spec, lam):
    """Values of the two quadratic forms at ``[lam; 1]``.

    Returns ``(phi_value, psi_value)``; ``lam`` lies on the curve iff the
    first is zero and the second nonnegative.
    """
    lam = np.asarray(lam, dtype=complex)
    v = np.stack([lam, np.ones_like(lam)], axis=-1)
    phi = np.einsum("...i,ij,...j->...", v.conj(), spec.phi, v)
    psi = np.einsum("...i,ij,...j->...", v.conj(), spec.psi, v)
    return phi.real, psi.real


def curve_points(spec, n=64):
    """Frequency segment selected by `spec`, with `n` sample points."""
    w = spec.omega_c
    if spec.kind is CurveKind.LOW:
        omegas = np.linspace(0.0, w, n)
        seg = CurveSegment(0.0, w, 1j * omegas)
    else:
        omegas = w * np.logspace(0.0, 6.0, n)
        seg = CurveSegment(w, np.inf, 1j * omegas)
    return seg


def phase_multiplier(angle, n, lower=True):
    """Supply ``Pi`` whose quadratic form is ``<= 0`` iff the phase is ``>= angle``.

    With ``lower=False`` the form is ``<= 0`` iff the phase is ``<= angle``.
    """
    rot = np.exp(1j * (angle - np.pi / 2)) if lower else np.exp(1j * (np.pi / 2 + angle))
    eye = np.eye(n)
    z = np.zeros((n, n))
    return np.block([[z, rot * eye], [np.conj(rot) * eye, z]])


def gain_multiplier(gamma, n_out, n_in):
    return np.block([[np.eye(n_out), np.zeros((n_out, n_in))],
                     [np.zeros((n_in, n_out)), -gamma ** 2 * np.eye(n_in)]])


def supply_matrix(sys, pi):
    """``[C D; 0 I]^* Pi [C D; 0 I]`` for a supply rate on ``(y, u)``."""
    nx, nu = sys.n_states, sys.n_inputs
    lift = np.block([[sys.c, sys.d], [np.zeros((nu, nx)), np.eye(nu)]])
    m = lift.T @ pi @ lift
    return 0.5 * (m + m.conj().T)


def _rank(m, tol):
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def is_controllable(a, b, tol=_RANK_TOL):
    n = a.shape[0]
    if n == 0:
        return True
    blocks, cur = [], b
    for _ in range(n):
        blocks.append(cur)
        cur = a @ cur
    return _rank(np.hstack(blocks), tol) == n


def is_observable(a, c, tol=_RANK_TOL):
    return is_controllable(a.T, c.T, tol)


@dataclass(frozen=True)
class GkypLmi:
    """``N^*(Phi (x) P + Psi (x) Q) N + M <= t I`` collected for solving."""

    spec: CurveSpec
    constant: np.ndarray
    problem: sdpkit.SdpProblem = field(repr=False)
    p: sdpkit.HermitianVariable = field(repr=False)
    q: sdpkit.HermitianVariable = field(repr=False)
    t: int = 0
    psi_scale: float = 1.0

    def lhs(self, p, q, n_mat):
        """Evaluate the left-hand side for given ``P``, ``Q``."""
        return _lhs(n_mat, self.spec.phi, self.psi_scale * self.spec.psi, p, q, self.constant)


def _lhs(n_mat, phi, psi, p, q, m):
    out = n_mat.conj().T @ (np.kron(phi, p) + np.kron(psi, q)) @ n_mat + m
    return 0.5 * (out + out.conj().T)


def _n_matrix(sys):
    nx, nu = sys.n_states, sys.n_inputs
    return np.block([[sys.a, sys.b], [np.eye(nx), np.zeros((nx, nu))]])


def assemble_gkyp_lmi(sys, spec, m, check_controllable=True, t_lower=None):
    """Build the generalized KYP LMI for `sys` on the curve `spec`.

    The LMI carries an extra scalar ``t`` (the right-hand side is ``t I``),
    to be minimized; the FDI on the curve holds iff the optimum is ``<= 0``.
    ``Psi`` is divided by ``max(1, w_c)`` to keep the data balanced, which
    rescales ``Q`` only.

    Raises
    ------
    PreconditionError
        If ``(A, B)`` is not controllable.
    """
    nx, nu = sys.n_states, sys.n_inputs
    m = np.asarray(m, dtype=complex)
    if m.shape != (nx + nu, nx + nu):
        raise DimensionError(f"supply matrix must be {(nx + nu,) * 2}, got {m.shape}")
    if check_controllable and not is_controllable(sys.a, sys.b):
        raise PreconditionError("realization (A, B) is not controllable")
    n_mat = _n_matrix(sys)
    psi_scale = 1.0 / max(1.0, spec.omega_c)
    phi, psi = spec.phi, psi_scale * spec.psi
    scale = 1.0 + float(np.linalg.norm(m, 2))
    bld = sdpkit.SdpBuilder()
    t = bld.scalar("t", lower=-scale if t_lower is None else t_lower)
    dim = nx + nu
    terms = [(t, -np.eye(dim))]
    if nx:
        p = bld.hermitian("P", nx)
        q = bld.hermitian("Q", nx, psd=True)
        terms += p.terms(lambda e: n_mat.T @ np.kron(phi, e) @ n_mat)
        terms += q.terms(lambda e: n_mat.T @ np.kron(psi, e) @ n_mat)
    else:
        p = q = None
    bld.lmi(m, terms)
    bld.minimize(t)
    return GkypLmi(spec, 0.5 * (m + m.conj().T), bld.build(), p, q, t, psi_scale)


@dataclass(frozen=True)
class _BlockResult:
    status: sdpkit.Status
    t: float
    p: np.ndarray
    q: np.ndarray
    residual: float


def solve_gkyp(sys, lmi):
    """Minimize ``t`` for one assembled block; residual is rechecked by eigvalsh."""
    nx = sys.n_states
    if nx == 0:
        t = float(np.linalg.eigvalsh(lmi.constant)[-1])
        z = np.zeros((0, 0))
        return _BlockResult(sdpkit.Status.OPTIMAL, t, z, z, t)
    sol = sdpkit.solve(lmi.problem)
    if not sol.ok:
        sol = sdpkit.shift_to_feasible(sol, lmi.t, +1.0)
    if not sol.ok and not np.all(np.isfinite(sol.x)):
        return _BlockResult(sol.status, np.nan, None, None, np.inf)
    p = sol.matrix(lmi.p)
    q = sol.matrix(lmi.q)
    # Q must be PSD for the certificate; clip round-off before re-evaluating
    w, v = np.linalg.eigh(q)
    q = (v * np.maximum(w, 0.0)) @ v.conj().T
    lhs = lmi.lhs(p, q, _n_matrix(sys))
    residual = float(np.linalg.eigvalsh(lhs)[-1])
    if not sol.ok:
        # a troubled iterate still certifies if the recomputed LMI holds;
        # it is never taken as evidence of infeasibility
        if residual > 0.0:
            return _BlockResult(sol.status, np.nan, None, None, np.inf)
        return _BlockResult(sdpkit.Status.OPTIMAL, min(sol[lmi.t], residual), p, q, residual)
    return _BlockResult(sol.status, sol[lmi.t], p, q, residual)


class KypStatus(Enum):
    CERTIFIED = "Certified"
    NOT_CERTIFIED = "NotCertified"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class KypCertificate:
    """Hermitian ``P_i`` and PSD ``Q_i`` for the three blocks.

    The matrices refer to the realization the user passed in and to the
    unscaled ``Psi`` of each curve. ``residuals[i]`` is
    ``max(0, lambda_max)`` of block ``i``'s left-hand side recomputed
    from ``P_i, Q_i`` in those coordinates.
    """

    p: tuple
    q: tuple
    residuals: tuple

    @property
    def max_residual(self):
        return max(self.residuals)


@dataclass(frozen=True)
class BoundedSectoredResult:
    status: KypStatus
    certificate: KypCertificate = None
    objectives: tuple = ()
    reason: str = ""

    def __bool__(self):
        return self.status is KypStatus.CERTIFIED


def _check_preconditions(sys, omega_c, alpha, beta, gamma):
    sys.require_square()
    if not (np.isfinite(alpha) and np.isfinite(beta) and 0.0 < beta - alpha <= np.pi + 1e-12):
        raise PreconditionError(f"beta - alpha must lie in (0, pi], got {beta - alpha:.6g}")
    if not (np.isfinite(gamma) and gamma > 0):
        raise PreconditionError(f"gamma must be positive and finite, got {gamma}")
    if not (np.isfinite(omega_c) and omega_c > 0):
        raise PreconditionError(f"omega_c must be positive and finite, got {omega_c}")
    if not is_controllable(sys.a, sys.b):
        raise PreconditionError("realization is not minimal: (A, B) not controllable")
    if not is_observable(sys.a, sys.c):
        raise PreconditionError("realization is not minimal: (A, C) not observable")
    lam = sys.eigenvalues()
    scale = 1.0 + np.linalg.norm(sys.a, 2) if sys.n_states else 1.0
    tol = 1e-9 * scale
    if np.any(lam.real > tol):
        raise PreconditionError("system has poles in the open right half plane")
    axis = lam[np.abs(lam.real) <= tol]
    if axis.size and np.max(np.abs(axis.imag)) >= omega_c:
        raise PreconditionError(
            f"imaginary-axis pole at {np.max(np.abs(axis.imag)):.6g} rad/s is not below omega_c")


def _normalized(sys, omega_c):
    """Rescaled realization ``(sys', T, s, k)`` for solving.

    ``sys'(s) = sys(k s) / s`` with balanced states ``x = T x'`` and
    ``k = max(1, w_c)``, so the solved curve has cutoff ``w_c / k <= 1``.
    Phases are unchanged and gains scale by ``1/s``.
    """
    nx = sys.n_states
    if nx:
        _, (sc, _) = scipy.linalg.matrix_balance(sys.a, permute=False, separate=True)
    else:
        sc = np.ones(0)
    t = np.diag(sc)
    ti = np.diag(1.0 / sc)
    k = max(1.0, float(omega_c))
    g = evaluate(sys, 1j * omega_c)
    s = max(float(np.linalg.norm(sys.d, 2)), float(np.linalg.norm(g, 2)))
    if not (np.isfinite(s) and s > 1e-300):
        s = 1.0
    if nx:
        # a scalar state scaling evens out the input and output maps
        nb = np.linalg.norm(ti @ sys.b) / k
        nc = np.linalg.norm(sys.c @ t) / s
        if nb > 0 and nc > 0:
            tau = np.sqrt(nb / nc)
            t, ti = t * tau, ti / tau
    out = StateSpace(ti @ sys.a @ t / k, ti @ sys.b / k, sys.c @ t / s, sys.d / s)
    return out, t, s, k


def _to_original(p, q, t, factor, p_scale, q_scale):
    ti = np.linalg.inv(t)
    return (factor * p_scale * ti.T @ p @ ti, factor * q_scale * ti.T @ q @ ti)


def _block_lhs(sys, spec, m, p, q):
    return _lhs(_n_matrix(sys), spec.phi, spec.psi, p, q, m)


def block_supplies(sys, alpha, beta, gamma):
    """Supply matrices ``M_1, M_2, M_3`` of the three blocks for `sys`."""
    n = sys.n_inputs
    return (supply_matrix(sys, phase_multiplier(alpha, n, lower=True)),
            supply_matrix(sys, phase_multiplier(beta, n, lower=False)),
            supply_matrix(sys, gain_multiplier(gamma, n, n)))


def certificate_residuals(sys, omega_c, alpha, beta, gamma, cert):
    """Recompute ``lambda_max`` of the three left-hand sides from a certificate."""
    specs = (CurveSpec.low(omega_c), CurveSpec.low(omega_c), CurveSpec.high(omega_c))
    out = []
    for spec, m, p, q in zip(specs, block_supplies(sys, alpha, beta, gamma), cert.p, cert.q):
        if sys.n_states == 0:
            out.append(float(np.linalg.eigvalsh(m)[-1]))
        else:
            out.append(float(np.linalg.eigvalsh(_block_lhs(sys, spec, m, p, q))[-1]))
    return tuple(out)


def bounded_sectored_check(sys, omega_c, alpha, beta, gamma, mu_rel=1e-9, tol_rel=1e-8):
    """Certify phase sector ``[alpha, beta]`` below `omega_c` and gain ``< gamma`` above.

    Three independent SDPs are solved, each minimizing the shift ``t``
    of one LMI: phase lower bound and phase upper bound on ``j[0, w_c]``,
    gain bound on ``j[w_c, inf)``. The gain block carries an extra
    ``mu I`` (``mu = mu_rel * scale``) to stand in for strictness.

    Parameters
    ----------
    sys : StateSpace
        Square, minimal, with no open right-half-plane poles and
        imaginary-axis poles strictly below `omega_c`.
    omega_c : float
        Cutoff frequency in rad/s.
    alpha, beta : float
        Phase bounds in radians, ``0 < beta - alpha <= pi``.
    gamma : float
        Gain bound for frequencies at and above the cutoff.

    Returns
    -------
    BoundedSectoredResult
        ``CERTIFIED`` with the certificate when all three optimal shifts
        are ``<= tol_rel * scale``; ``NOT_CERTIFIED`` when some block's
        optimum is clearly positive; ``UNKNOWN`` on solver trouble.
    """
    omega_c, alpha, beta, gamma = map(float, (omega_c, alpha, beta, gamma))
    _check_preconditions(sys, omega_c, alpha, beta, gamma)
    h, t, s, kf = _normalized(sys, omega_c)
    w = omega_c / kf
    specs = (CurveSpec.low(w), CurveSpec.low(w), CurveSpec.high(w))
    factors = (s, s, s * s)
    # undoing s -> k s: Phi picks up 1/k, Psi_low 1/k**2 and Psi_high 1/k
    q_scales = (kf ** -2, kf ** -2, 1.0 / kf)
    ps, qs, objs, ok = [], [], [], []
    for k, (spec, m) in enumerate(zip(specs, block_supplies(h, alpha, beta, gamma / s))):
        scale = 1.0 + float(np.linalg.norm(m, 2))
        if k == 2:
            m = m + mu_rel * scale * np.eye(m.shape[0])
        out = solve_gkyp(h, assemble_gkyp_lmi(h, spec, m, check_controllable=False))
        if out.status is not sdpkit.Status.OPTIMAL:
            return BoundedSectoredResult(KypStatus.UNKNOWN,
                                         reason=f"block {k + 1}: solver {out.status.value}")
        p, q = _to_original(out.p, out.q, t, factors[k], 1.0 / kf, q_scales[k])
        ps.append(p)
        qs.append(q)
        objs.append(out.t)
        ok.append(out.residual <= tol_rel * scale)
    res = certificate_residuals(sys, omega_c, alpha, beta, gamma,
                                KypCertificate(tuple(ps), tuple(qs), (0.0,) * 3))
    cert = KypCertificate(tuple(ps), tuple(qs), tuple(max(r, 0.0) for r in res))
    if all(ok):
        return BoundedSectoredResult(KypStatus.CERTIFIED, cert, tuple(objs))
    names = ("phase lower bound", "phase upper bound", "gain bound")
    bad = ", ".join(n for n, good in zip(names, ok) if not good)
    return BoundedSectoredResult(KypStatus.NOT_CERTIFIED, cert, tuple(objs),
                                 reason=f"infeasible: {bad}")


def tail_gain_bound(sys, omega_c):
    """Smallest ``gamma`` with ``sigma_max(G(jw)) <= gamma`` on ``[w_c, inf)``, from the LMI.

    Minimizes ``g = gamma**2`` subject to the high-frequency KYP block,
    so the result can be compared with a Hamiltonian bisection.
    """
    sys.require_square()
    if not is_controllable(sys.a, sys.b):
        raise PreconditionError("realization (A, B) is not controllable")
    if sys.n_states == 0:
        return float(np.linalg.norm(sys.d, 2))
    h, _, s, kf = _normalized(sys, omega_c)
    spec = CurveSpec.high(omega_c / kf)
    nx, nu = h.n_states, h.n_inputs
    m0 = supply_matrix(h, gain_multiplier(0.0, nu, nu))
    n_mat = _n_matrix(h)
    phi, psi = spec.phi, spec.psi
    e_u = np.zeros((nx + nu, nx + nu))
    e_u[nx:, nx:] = np.eye(nu)
    bld = sdpkit.SdpBuilder()
    g = bld.scalar("g", lower=0.0)
    p = bld.hermitian("P", nx)
    q = bld.hermitian("Q", nx, psd=True)
    terms = [(g, -e_u)]
    terms += p.terms(lambda e: n_mat.T @ np.kron(phi, e) @ n_mat)
    terms += q.terms(lambda e: n_mat.T @ np.kron(psi, e) @ n_mat)
    bld.lmi(m0, terms)
    bld.minimize(g)
    sol = sdpkit.solve(bld.build())
    if sol.status in (sdpkit.Status.INFEASIBLE, sdpkit.Status.UNBOUNDED) \
            or not np.all(np.isfinite(sol.x)):
        raise SolverTroubleError(f"gain bound SDP ended with {sol.status.value}")
    g0 = max(float(sol[g]), 0.0)

    def certified(x):
        m = supply_matrix(h, gain_multiplier(np.sqrt(x), nu, nu))
        out = solve_gkyp(h, assemble_gkyp_lmi(h, spec, m, check_controllable=False))
        return out.status is sdpkit.Status.OPTIMAL and out.residual <= 0.0

    # the optimum sits on the boundary and the solver may land on either side;
    # bracket it with the eigenvalue recheck, then bisect
    lo, hi = None, None
    for rho in (1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2):
        x = g0 * (1.0 + rho) + rho
        if certified(x):
            hi = x
            break
        lo = x
    if hi is None:
        raise SolverTroubleError("gain bound could not be certified")
    lo = g0 * (1.0 - 1e-4) if lo is None else lo
    while hi - lo > 1e-8 * (1.0 + hi):
        mid = 0.5 * (lo + hi)
        if certified(mid):
            hi = mid
        else:
            lo = mid
    return s * float(np.sqrt(hi))
