"""Phase and gain analysis of MIMO feedback loops.

Matrix phases, Davis-Wielandt shell bounds, frequency-wise stability
checkers mixing gain and phase information, and a generalized KYP
certificate for bounded and sectored systems.
"""

from .errors import (DimensionError, DocumentError, DomainError, NotSectorialError,
                     PhaseGainError, PoleProximityError, PreconditionError,
                     SolverTroubleError, SoundnessViolation)
from .lti import StateSpace, gang_of_four, hinf_norm, is_hurwitz
from .matnum import PhaseSector, classify_sectoriality, matrix_phases
from .stability import Verdict

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "StateSpace",
    "PhaseSector",
    "Verdict",
    "matrix_phases",
    "classify_sectoriality",
    "gang_of_four",
    "hinf_norm",
    "is_hurwitz",
    "PhaseGainError",
    "DimensionError",
    "DocumentError",
    "DomainError",
    "NotSectorialError",
    "PoleProximityError",
    "PreconditionError",
    "SolverTroubleError",
    "SoundnessViolation",
]
