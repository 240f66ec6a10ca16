"""Exception types raised by phononet.

Each class also derives from the builtin a caller would expect (KeyError for
unknown labels, ValueError for bad input, RuntimeError for numerical failure),
so plain ``except ValueError`` handlers keep working.
"""
from __future__ import annotations


class PhononetError(Exception):
    """Base class for all phononet errors."""


class UnknownSubsystemError(PhononetError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown subsystem"


class SubsystemKindError(PhononetError, ValueError):
    pass


class SpaceMismatchError(PhononetError, ValueError):
    pass


class InvalidStateError(PhononetError, ValueError):
    pass


class ParameterError(PhononetError, ValueError):
    pass


class ConvergenceError(PhononetError, RuntimeError):
    """Integrator failure or Fock-cutoff non-convergence."""

    hint = "raise the Fock cutoffs ([run].cutoffs) or loosen [convergence].tolerance"


class ConfigError(PhononetError, ValueError):
    """Schema violation in a run/sweep configuration. ``path`` is the dotted key."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


class ScanPointError(PhononetError, RuntimeError):
    """A Bloch-sphere mesh point failed; carries the offending (theta, phi)."""

    def __init__(self, theta: float, phi: float, cause: BaseException) -> None:
        super().__init__(f"scan point theta={theta:.6f} phi={phi:.6f} failed: {cause}")
        self.theta = theta
        self.phi = phi
        self.cause = cause
