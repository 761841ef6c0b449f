"""Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI reports for it.
"""

from typing import Optional, Sequence


class TorusBlochError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParseError(TorusBlochError):
    """Malformed JSON input or a document that does not follow the schema."""

    exit_code = 2


class OperandError(TorusBlochError):
    """An operation was called outside its contract."""

    exit_code = 3


class DimensionMismatchError(OperandError):
    """Frequency vectors, points or matrices disagree on dimension."""

    def __init__(self, what: str, expected: int, actual: int):
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class MissingWindowError(OperandError):
    """Sublevel enumeration needs a window because no coordinate bound exists."""

    def __init__(self, reason: str, flag: str = "--window"):
        super().__init__(f"{reason}; pass a window radius ({flag})")
        self.flag = flag


class ValidityError(TorusBlochError):
    """Input is well formed but mathematically invalid."""

    exit_code = 4


class EllipticityError(ValidityError):
    """The coefficient matrix field is not uniformly positive definite."""

    def __init__(self, a0_estimate: float):
        super().__init__(f"coefficient field is not elliptic: sampled a0 estimate = {a0_estimate:.6g} <= 0")
        self.a0_estimate = a0_estimate


class DeformationError(ValidityError):
    """A deformation violates its Jacobian or gradient bounds."""


class JacobianError(ValidityError):
    """A non-positive Jacobian was met while integrating over a deformed box."""


class EigensolverError(ValidityError):
    """The dense Hermitian eigensolver failed or its residual contract broke."""

    def __init__(self, message: str, size: int):
        super().__init__(f"{message} (matrix size {size}x{size})")
        self.size = size


class BandSweepError(ValidityError):
    """A single Bloch frequency of a band sweep failed."""

    def __init__(self, index: int, theta: Sequence[float], cause: Exception):
        theta_text = ", ".join(f"{value:.6g}" for value in theta)
        super().__init__(f"theta #{index} ({theta_text}): {cause}")
        self.index = index
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", ValidityError.exit_code)


class EstimateCancelled(TorusBlochError):
    """A long-running estimate was cancelled through its ``should_stop`` callback."""

    def __init__(self, completed: int, total: Optional[int] = None):
        progress = f"{completed}/{total}" if total is not None else str(completed)
        super().__init__(f"estimate cancelled after {progress} mode chunks")
        self.completed = completed
