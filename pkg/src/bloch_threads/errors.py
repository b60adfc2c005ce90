"""Exception types shared across the package."""

from __future__ import annotations


class BlochThreadsError(Exception):
    """Base class for all package errors."""


class InvalidStateError(BlochThreadsError, ValueError):
    """A density matrix or Bloch state violates its invariants."""


class SystemInputError(BlochThreadsError, ValueError):
    """A system description file is malformed."""


class RootFindingError(BlochThreadsError, ArithmeticError):
    """Polynomial root extraction failed; carries the coefficients."""

    def __init__(self, message: str, coefficients=None):
        super().__init__(message)
        self.coefficients = coefficients


class FeedbackError(BlochThreadsError, ArithmeticError):
    """The critical-point feedback is not defined at the requested point."""

    def __init__(self, message: str, r: float | None = None, n_hat=None):
        super().__init__(message)
        self.r = r
        self.n_hat = n_hat


class SingularLambda(FeedbackError):
    """Lambda = 2rA - C lost invertibility along a direction not orthogonal to n_hat."""

    def __init__(self, message: str, index: int, eigenvalue: float, r=None, n_hat=None):
        super().__init__(message, r=r, n_hat=n_hat)
        self.index = index
        self.eigenvalue = eigenvalue


class KDenominatorVanished(FeedbackError):
    """n_hat^T Lambda^-1 n_hat vanished: the thread is tangent to the sphere of radius r."""

    def __init__(self, message: str, denominator: float, r=None, n_hat=None):
        super().__init__(message, r=r, n_hat=n_hat)
        self.denominator = denominator


class UnresolvableSpecialCase(FeedbackError):
    """No special-case handler applies to a feedback failure."""


class ApogeeReached(BlochThreadsError, ArithmeticError):
    """The chimney feedback denominator vanished (critical point reached)."""

    def __init__(self, message: str, denominator: float, r=None, n_hat=None):
        super().__init__(message)
        self.denominator = denominator
        self.r = r
        self.n_hat = n_hat


class FIsZeroOnThread(BlochThreadsError, ValueError):
    """The radial velocity changes sign on the portion of thread being planned."""

    def __init__(self, message: str, r_crossing: float):
        super().__init__(message)
        self.r_crossing = r_crossing


class SeedMatchingError(BlochThreadsError, RuntimeError):
    """No critical point near a tangency point could seed an alternate thread."""
