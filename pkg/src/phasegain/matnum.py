"""Gain and phase primitives for square complex matrices.

Singular values give the gains of a matrix. For sectorial matrices
(numerical range excluding the origin) the phases are the angles of the
diagonal unitary factor ``D`` in a congruence ``A = T^* D T``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError, NotSectorialError

__all__ = [
    "HermitianParts",
    "PhaseSector",
    "Sectoriality",
    "SectorialClass",
    "as_matrix",
    "hermitian_split",
    "singular_values",
    "classify_sectoriality",
    "matrix_phases",
    "wrap_angle",
    "default_tol",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_SEEDS = 64


def as_matrix(a, square=True):
    """Return `a` as a 2-D complex array, validating shape and finiteness."""
    arr = np.atleast_2d(np.asarray(a, dtype=complex))
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"square matrix required, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return arr


def wrap_angle(theta):
    """Map an angle into (-pi, pi]."""
    w = np.mod(np.asarray(theta, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def default_tol(a):
    """Sectoriality discrimination tolerance ``1e-9 * (1 + ||A||)``."""
    return 1e-9 * (1.0 + np.linalg.norm(a, 2))


@dataclass(frozen=True)
class HermitianParts:
    """``A = h + 1j * s`` with both parts Hermitian."""

    h: np.ndarray
    s: np.ndarray


class Sectoriality(Enum):
    SECTORIAL = "Sectorial"
    SEMI_SECTORIAL = "SemiSectorial"
    NON_SECTORIAL = "NonSectorial"


@dataclass(frozen=True)
class SectorialClass:
    """Outcome of the rotated Hermitian part test.

    Attributes
    ----------
    tag : Sectoriality
    witness_rotation : float
        Rotation ``theta0`` maximizing ``lambda_min(Re(e^{j theta} A))``.
    margin : float
        The maximal value itself.
    """

    tag: Sectoriality
    witness_rotation: float
    margin: float

    @property
    def is_sectorial(self):
        return self.tag is Sectoriality.SECTORIAL


@dataclass(frozen=True)
class PhaseSector:
    """Phases of a sectorial matrix, sorted descending.

    ``hi - lo < pi``; the center lies in (-pi, pi] unless the sector was
    deliberately moved to another branch with :meth:`shifted`.
    """

    lo: float
    hi: float
    all_phases: tuple = field(default=())

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def spread(self):
        return self.hi - self.lo

    def shifted(self, delta):
        """Same sector moved by `delta` radians (used for branch tracking)."""
        return PhaseSector(self.lo + delta, self.hi + delta,
                           tuple(p + delta for p in self.all_phases))

    def nearest_branch(self, reference):
        """Shift by a multiple of 2*pi so the center is closest to `reference`."""
        k = np.round((reference - self.center) / (2.0 * np.pi))
        return self if k == 0 else self.shifted(2.0 * np.pi * k)


def hermitian_split(a):
    """Hermitian and skew-Hermitian parts ``(A + A*)/2`` and ``(A - A*)/(2j)``."""
    a = as_matrix(a)
    ah = a.conj().T
    h = 0.5 * (a + ah)
    s = (a - ah) / 2j
    return HermitianParts(0.5 * (h + h.conj().T), 0.5 * (s + s.conj().T))


def singular_values(a):
    """Singular values in descending order (rectangular input allowed)."""
    a = as_matrix(a, square=False)
    return np.linalg.svd(a, compute_uv=False)


def _rotated_min_eig(parts, theta):
    return np.linalg.eigvalsh(np.cos(theta) * parts.h - np.sin(theta) * parts.s)[0]


def _best_rotation(parts, good_enough=np.inf):
    # lambda_min of the rotated Hermitian part is continuous in theta
    thetas = -np.pi + 2.0 * np.pi * (np.arange(_SEEDS) + 1) / _SEEDS
    stack = (np.cos(thetas)[:, None, None] * parts.h[None]
             - np.sin(thetas)[:, None, None] * parts.s[None])
    vals = np.linalg.eigvalsh(stack)[:, 0]
    best_t, best_f = thetas[int(np.argmax(vals))], float(np.max(vals))
    if best_f >= good_enough:
        return wrap_angle(best_t), best_f
    step = 2.0 * np.pi / _SEEDS
    # refine around the best few seeds by batched zooming; local maxima are
    # rare but possible, so every candidate keeps its own window
    centers = thetas[np.argsort(vals)[::-1][:3]]
    offsets = np.linspace(-1.0, 1.0, 17)
    half = step
    while half > 1e-12:
        grid = (centers[:, None] + half * offsets[None, :]).ravel()
        stack = (np.cos(grid)[:, None, None] * parts.h[None]
                 - np.sin(grid)[:, None, None] * parts.s[None])
        gv = np.linalg.eigvalsh(stack)[:, 0].reshape(len(centers), -1)
        arg = np.argmax(gv, axis=1)
        centers = grid.reshape(len(centers), -1)[np.arange(len(centers)), arg]
        k = int(np.argmax(gv[np.arange(len(centers)), arg]))
        if gv[k, arg[k]] > best_f:
            best_t, best_f = centers[k], float(gv[k, arg[k]])
        half /= 8.0
    return wrap_angle(best_t), float(best_f)


def classify_sectoriality(a, tol=None):
    """Classify `a` as sectorial, semi-sectorial or non-sectorial.

    Uses ``0 not in W(A)  <=>  exists theta: e^{j theta} A + e^{-j theta} A^* > 0``
    and maximizes the smallest eigenvalue of the rotated Hermitian part.
    """
    a = as_matrix(a)
    if tol is None:
        tol = default_tol(a)
    theta, margin = _best_rotation(hermitian_split(a))
    if margin > tol:
        tag = Sectoriality.SECTORIAL
    elif margin >= -tol:
        tag = Sectoriality.SEMI_SECTORIAL
    else:
        tag = Sectoriality.NON_SECTORIAL
    return SectorialClass(tag, theta, margin)


def _normalize(phases):
    phases = np.sort(np.asarray(phases, dtype=float))[::-1]
    center = 0.5 * (phases[0] + phases[-1])
    target = wrap_angle(center)
    # real matrices have centers at exactly 0 or pi; keep pi, never -pi
    if target < -np.pi + 1e-12:
        target = np.pi
    phases = phases + (target - center)
    return PhaseSector(float(phases[-1]), float(phases[0]), tuple(float(p) for p in phases))


def _phases_at(a, theta0):
    parts = hermitian_split(np.exp(1j * theta0) * a)
    w, v = np.linalg.eigh(parts.h)
    isqrt = (v / np.sqrt(w)) @ v.conj().T
    lam = np.linalg.eigvalsh(isqrt @ parts.s @ isqrt)
    return _normalize(np.arctan(lam) - theta0)


def matrix_phases(a, tol=None, rotation_hint=None):
    """Phases of a sectorial matrix as a :class:`PhaseSector`.

    Parameters
    ----------
    a : array_like
    tol : float, optional
        Sectoriality tolerance, default :func:`default_tol`.
    rotation_hint : float, optional
        A rotation that probably makes the Hermitian part positive definite
        (e.g. minus the centre at a neighbouring frequency). When it does,
        the rotation search is skipped.

    Raises
    ------
    NotSectorialError
        If the numerical range of `a` touches or contains the origin.
    """
    a = as_matrix(a)
    if tol is None:
        tol = default_tol(a)
    if rotation_hint is not None:
        parts = hermitian_split(a)
        if _rotated_min_eig(parts, rotation_hint) > tol:
            return _phases_at(a, float(rotation_hint))
    if a.shape == (1, 1):
        z = complex(a[0, 0])
        if abs(z) <= tol:
            raise NotSectorialError("scalar is zero, phase undefined", -abs(z))
        phi = float(np.angle(z))
        return _normalize([phi])
    # any rotation with a well-conditioned positive definite Hermitian part will do
    parts = hermitian_split(a)
    scale = float(np.linalg.norm(a, 2))
    # the search only stops early when the margin is comfortable, otherwise
    # its result is the fully refined optimum that classification would find
    theta, margin = _best_rotation(parts, good_enough=max(1e-2 * scale, 2.0 * tol))
    if margin <= tol:
        tag = Sectoriality.SEMI_SECTORIAL if margin >= -tol else Sectoriality.NON_SECTORIAL
        raise NotSectorialError(f"matrix is {tag.value}, phases undefined", margin)
    return _phases_at(a, theta)
