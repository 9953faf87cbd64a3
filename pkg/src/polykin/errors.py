"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1,
validation failures exit 2, runtime failures exit 3.
"""
from __future__ import annotations


class PolykinError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(PolykinError):
    """Scenario file could not be parsed or is structurally malformed."""


class ValidationError(PolykinError):
    """Inputs violate a documented precondition or model assumption."""


class DomainError(ValidationError):
    """Argument lies outside the mathematical domain of an operation."""


class OutOfRangeError(DomainError):
    """Value not attained by a monotone profile.

    ``bound`` records which side was violated ("below" or "above").
    """

    def __init__(self, message: str, bound: str):
        super().__init__(message)
        self.bound = bound


class RegimeError(ValidationError):
    """Operation invoked for a model regime it does not apply to."""


class UntrackedReferenceError(ValidationError):
    """Requested reference label is not one of the tracked particles."""


class RuntimeFailure(PolykinError):
    """A run started but could not be completed."""


class StepSizeError(RuntimeFailure):
    """Requested time step violates the explicit stability bound."""


class BlowUpError(RuntimeFailure):
    """State left the physical regime (negative monomer pool or similar)."""


class NonFiniteError(RuntimeFailure):
    """NaN or infinity detected in an evolving field."""


class LeakOverflowError(RuntimeFailure):
    """Mass lost through the size-domain truncation exceeded its budget.

    Carries a suggested enlarged domain in ``x_max_suggested``.
    """

    def __init__(self, message: str, x_max_suggested: float):
        super().__init__(message)
        self.x_max_suggested = x_max_suggested


class AssemblyError(RuntimeFailure):
    """Discrete operator could not be assembled consistently."""


class ConvergenceError(RuntimeFailure):
    """Iterative solver exhausted its iteration budget."""


class PositivityError(RuntimeFailure):
    """Computed principal eigenvector changes sign beyond tolerance."""


class ExtensionConditionError(RuntimeFailure):
    """Leftward extension of the steady profile is not contractive.

    Raised when lambda <= d'(x0) - B(x0); the absorption at the stall
    size is then too weak for the marching construction to apply.
    """


class NoSignChangeError(RuntimeFailure):
    """Eigenvalue scan over the monomer level found no zero crossing.

    ``scan`` holds the sampled (V, lambda) pairs for the failure report.
    """

    def __init__(self, message: str, scan):
        super().__init__(message)
        self.scan = scan


class MassTooSmallError(ValidationError):
    """Requested total mass cannot support a polymerized steady state."""
