"""Exception hierarchy shared by all phasegain modules."""


class PhaseGainError(Exception):
    """Base class for all library errors."""


class DimensionError(PhaseGainError, ValueError):
    """Matrix or system dimensions are inconsistent."""


class DomainError(PhaseGainError, ValueError):
    """A scalar argument lies outside its admissible range."""


class NotSectorialError(PhaseGainError, ValueError):
    """Raised when an operation needs a sectorial (or r-sectorial) matrix.

    Parameters
    ----------
    message : str
        Human readable reason.
    margin : float
        Best achieved minimum eigenvalue of the rotated Hermitian part.
        Positive values would have meant sectorial.
    """

    def __init__(self, message, margin=float("nan")):
        super().__init__(message)
        self.margin = margin


class PoleProximityError(PhaseGainError, ValueError):
    """Evaluation point lies at (or numerically on) a pole."""

    def __init__(self, message, distance):
        super().__init__(message)
        self.distance = distance


class PreconditionError(PhaseGainError, ValueError):
    """Inputs violate a hypothesis required by a checker."""


class SolverTroubleError(PhaseGainError, RuntimeError):
    """The SDP backend could not deliver a trustworthy answer."""


class SoundnessViolation(PhaseGainError, AssertionError):
    """A sufficient condition held but its conclusion was contradicted.

    Raised by the invertibility tests when det(I + AB) vanishes although
    the hypothesis was verified. Should never happen.
    """


class DocumentError(PhaseGainError, ValueError):
    """A system or matrix document could not be parsed."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
