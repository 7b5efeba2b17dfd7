"""Small SDP layer: Hermitian LMIs in real scalar variables.

Every variable is a real scalar. Hermitian matrix unknowns are expanded
over a real basis of Hermitian matrices, so each LMI reads

    F0 + sum_i x_i F_i  <= 0   (or >= 0)

with Hermitian ``F``. Complex data is mapped to real symmetric data of
twice the size before it reaches the backend (Clarabel).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError

__all__ = [
    "FEAS_TOL",
    "GAP_TOL",
    "Status",
    "HermitianLmiTerm",
    "HermitianVariable",
    "SdpProblem",
    "SdpBuilder",
    "SdpSolution",
    "embed_hermitian_to_real",
    "hermitian_basis",
    "solve",
    "shift_to_feasible",
]

FEAS_TOL = 1e-8
GAP_TOL = 1e-8
_HERM_TOL = 1e-12


class Status(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_TROUBLE = "NumericalTrouble"


def _check_hermitian(m, what="matrix"):
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {m.shape}")
    scale = 1.0 + np.max(np.abs(m), initial=0.0)
    if np.max(np.abs(m - m.conj().T), initial=0.0) > _HERM_TOL * scale:
        raise ValueError(f"{what} is not Hermitian")
    return 0.5 * (m + m.conj().T)


def embed_hermitian_to_real(m):
    """Real symmetric embedding ``[[Re M, -Im M], [Im M, Re M]]``.

    The embedding has the eigenvalues of `m`, each with doubled multiplicity,
    so it is PSD exactly when `m` is.
    """
    m = _check_hermitian(m)
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def hermitian_basis(n):
    """Real basis of the n x n Hermitian matrices (n**2 elements)."""
    basis = []
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = e[j, i] = 1.0
            basis.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[i, j], e[j, i] = -1j, 1j
            basis.append(e)
    return basis


@dataclass(frozen=True)
class HermitianLmiTerm:
    """``constant + sum(x[i] * F_i)`` constrained ``<= 0`` or ``>= 0``."""

    terms: tuple
    constant: np.ndarray
    sense: str = "<=0"

    def __post_init__(self):
        if self.sense not in ("<=0", ">=0"):
            raise ValueError(f"sense must be '<=0' or '>=0', got {self.sense!r}")
        c = _check_hermitian(self.constant, "LMI constant")
        object.__setattr__(self, "constant", c)
        checked = []
        for idx, mat in self.terms:
            mat = _check_hermitian(mat, "LMI coefficient")
            if mat.shape != c.shape:
                raise DimensionError("LMI coefficients must share one dimension")
            checked.append((int(idx), mat))
        object.__setattr__(self, "terms", tuple(checked))

    @property
    def dim(self):
        return self.constant.shape[0]

    def value(self, x):
        out = self.constant.copy()
        for idx, mat in self.terms:
            out = out + x[idx] * mat
        return out

    def violation(self, x):
        """How far the LMI is from holding (0 when satisfied)."""
        eig = np.linalg.eigvalsh(self.value(x))
        if self.sense == "<=0":
            return max(0.0, float(eig[-1]))
        return max(0.0, float(-eig[0]))


@dataclass(frozen=True)
class HermitianVariable:
    """An n x n Hermitian unknown spread over ``n**2`` scalar variables."""

    name: str
    dim: int
    indices: tuple
    psd: bool = False

    @property
    def basis(self):
        return hermitian_basis(self.dim)

    def terms(self, linear_map):
        """Coefficients ``(index, linear_map(E_k))`` for a linear map of the unknown."""
        return [(i, linear_map(e)) for i, e in zip(self.indices, self.basis)]

    def value(self, x):
        return sum(x[i] * e for i, e in zip(self.indices, self.basis))


@dataclass(frozen=True)
class SdpProblem:
    """Minimize ``objective @ x`` subject to bounds and LMIs.

    ``objective`` of ``None`` means a pure feasibility problem.
    """

    names: tuple
    lower: np.ndarray
    upper: np.ndarray
    constraints: tuple
    objective: np.ndarray = None
    matrix_variables: tuple = ()

    @property
    def n_vars(self):
        return len(self.names)

    def __post_init__(self):
        n = len(self.names)
        for con in self.constraints:
            for idx, _ in con.terms:
                if not 0 <= idx < n:
                    raise ValueError(f"constraint references undeclared variable {idx}")
        if self.objective is not None and len(self.objective) != n:
            raise DimensionError("objective length does not match variable count")


class SdpBuilder:
    """Incremental construction of an :class:`SdpProblem`."""

    def __init__(self):
        self._names = []
        self._lower = []
        self._upper = []
        self._constraints = []
        self._mvars = []
        self._objective = {}

    def scalar(self, name, lower=-np.inf, upper=np.inf):
        self._names.append(name)
        self._lower.append(lower)
        self._upper.append(upper)
        return len(self._names) - 1

    def hermitian(self, name, dim, psd=False):
        idx = tuple(self.scalar(f"{name}[{k}]") for k in range(dim * dim))
        var = HermitianVariable(name, dim, idx, psd)
        self._mvars.append(var)
        if psd:
            self.lmi(np.zeros((dim, dim)), var.terms(lambda e: e), sense=">=0")
        return var

    def lmi(self, constant, terms, sense="<=0"):
        con = HermitianLmiTerm(tuple(terms), constant, sense)
        self._constraints.append(con)
        return con

    def minimize(self, index, weight=1.0):
        self._objective[index] = self._objective.get(index, 0.0) + weight

    def maximize(self, index, weight=1.0):
        self.minimize(index, -weight)

    def build(self):
        objective = None
        if self._objective:
            objective = np.zeros(len(self._names))
            for k, w in self._objective.items():
                objective[k] = w
        return SdpProblem(tuple(self._names), np.array(self._lower, dtype=float),
                          np.array(self._upper, dtype=float), tuple(self._constraints),
                          objective, tuple(self._mvars))


@dataclass
class SdpSolution:
    status: Status
    objective_value: float
    x: np.ndarray
    max_constraint_violation: float
    problem: SdpProblem = field(repr=False, default=None)
    backend_status: str = ""

    @property
    def ok(self):
        return self.status is Status.OPTIMAL

    def __getitem__(self, index):
        return float(self.x[index])

    def matrix(self, var):
        """Recover the Hermitian value of a matrix variable."""
        return var.value(self.x)


def _svec(m):
    # Clarabel PSD triangle: upper triangle by columns, off-diagonals * sqrt(2)
    il = np.tril_indices(m.shape[0])
    scale = np.where(il[0] == il[1], 1.0, np.sqrt(2.0))
    return m[il[1], il[0]] * scale


def _realify(m, complex_data):
    if complex_data:
        return np.block([[m.real, -m.imag], [m.imag, m.real]])
    return m.real


def _data_scale(problem):
    s = 1.0
    for con in problem.constraints:
        s = max(s, np.max(np.abs(con.constant), initial=0.0))
    return s


def solve(problem, feas_tol=FEAS_TOL, gap_tol=GAP_TOL, max_iter=200):
    """Solve `problem` with Clarabel; never raises on backend failure."""
    import clarabel

    n = problem.n_vars
    rows_a, b_parts, cones = [], [], []
    nonneg = []
    for i in range(n):
        if np.isfinite(problem.lower[i]):
            nonneg.append((-1.0, i, -problem.lower[i]))
        if np.isfinite(problem.upper[i]):
            nonneg.append((1.0, i, problem.upper[i]))
    if nonneg:
        a = np.zeros((len(nonneg), n))
        b = np.zeros(len(nonneg))
        for r, (sgn, i, rhs) in enumerate(nonneg):
            a[r, i] = sgn
            b[r] = rhs
        rows_a.append(sp.csc_matrix(a))
        b_parts.append(b)
        cones.append(clarabel.NonnegativeConeT(len(nonneg)))
    for con in problem.constraints:
        cplx = np.any(np.abs(con.constant.imag) > 0) or any(
            np.any(np.abs(m.imag) > 0) for _, m in con.terms)
        f0 = _realify(con.constant, cplx)
        d = f0.shape[0]
        sign = 1.0 if con.sense == "<=0" else -1.0
        # slack s = -sign * F(x) must be PSD:  s = b - A x
        b = -sign * _svec(f0)
        a = np.zeros((b.size, n))
        for idx, mat in con.terms:
            a[:, idx] += sign * _svec(_realify(mat, cplx))
        rows_a.append(sp.csc_matrix(a))
        b_parts.append(b)
        cones.append(clarabel.PSDTriangleConeT(d))

    q = np.zeros(n) if problem.objective is None else np.asarray(problem.objective, float)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_gap_abs = gap_tol * 1e-2
    settings.tol_gap_rel = gap_tol * 1e-2
    settings.tol_feas = feas_tol * 1e-2
    settings.tol_infeas_abs = feas_tol * 1e-2
    settings.tol_infeas_rel = feas_tol * 1e-2
    settings.tol_ktratio = 1e-8
    try:
        a_all = sp.vstack(rows_a, format="csc") if rows_a else sp.csc_matrix((0, n))
        b_all = np.concatenate(b_parts) if b_parts else np.zeros(0)
        solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), q, a_all, b_all,
                                        cones, settings)
        res = solver.solve()
    except BaseException as exc:  # noqa: BLE001 - backend panics surface as trouble
        if isinstance(exc, KeyboardInterrupt):
            raise
        return SdpSolution(Status.NUMERICAL_TROUBLE, np.nan, np.full(n, np.nan),
                           np.inf, problem, repr(exc))

    status_name = str(res.status)
    x = np.asarray(res.x, dtype=float)
    viol = _violation(problem, x)
    tol = feas_tol * _data_scale(problem)
    if status_name in ("Solved", "AlmostSolved"):
        status = Status.OPTIMAL if viol <= tol else Status.NUMERICAL_TROUBLE
    elif status_name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = Status.INFEASIBLE
    elif status_name in ("DualInfeasible", "AlmostDualInfeasible"):
        status = Status.UNBOUNDED
    elif viol <= tol and status_name in ("MaxIterations", "InsufficientProgress"):
        # stalled close to the optimum; the point itself is feasible
        status = Status.OPTIMAL
    else:
        status = Status.NUMERICAL_TROUBLE
    obj = float(q @ x) if np.all(np.isfinite(x)) else np.nan
    return SdpSolution(status, obj, x, viol, problem, status_name)


def _violation(problem, x):
    if not np.all(np.isfinite(x)):
        return np.inf
    v = 0.0
    v = max(v, float(np.max(problem.lower - x, initial=0.0)))
    v = max(v, float(np.max(x - problem.upper, initial=0.0)))
    for con in problem.constraints:
        v = max(v, con.violation(x))
    return v


def shift_to_feasible(sol, index, direction, max_shift=1e-6, feas_tol=FEAS_TOL):
    """Move one variable of a slightly infeasible solution until it is feasible.

    Intended for objectives where giving up a little optimality in the
    conservative `direction` (+1 or -1) restores feasibility, e.g. a bound
    ``g`` in ``g*A <= B``. The shift is at most ``max_shift * (1 + |x_i|)``.
    A solution that is already optimal, or cannot be repaired, is returned
    unchanged.
    """
    if sol.ok or sol.problem is None or not np.all(np.isfinite(sol.x)):
        return sol
    problem = sol.problem
    tol = feas_tol * _data_scale(problem)
    # interior point iterates may sit a hair outside simple bounds
    x0 = np.clip(sol.x, problem.lower, problem.upper)
    step = np.zeros(problem.n_vars)
    step[index] = float(np.sign(direction))
    budget = max_shift * (1.0 + abs(x0[index]))
    if _violation(problem, x0 + budget * step) > tol:
        return sol
    lo, hi = 0.0, budget
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if _violation(problem, x0 + mid * step) > tol:
            lo = mid
        else:
            hi = mid
    x = x0 + hi * step
    if _violation(problem, x0) <= tol:
        x = x0
    q = np.zeros(problem.n_vars) if problem.objective is None else problem.objective
    return SdpSolution(Status.OPTIMAL, float(q @ x), x, _violation(problem, x), problem,
                       sol.backend_status + "+shifted")
