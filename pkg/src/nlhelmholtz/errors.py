"""Exception hierarchy shared by all modules."""


class HelmholtzError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HelmholtzError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class CapabilityError(HelmholtzError, ValueError):
    """A request is valid mathematically but outside the supported range."""


class AliasingError(DomainError):
    """Too few samples were supplied to resolve the requested harmonics."""


class ConfigurationError(HelmholtzError, ValueError):
    """Inconsistent parameters, e.g. a trace and a context disagreeing on R."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class MeshError(HelmholtzError, ValueError):
    """A mesh violates one of its structural invariants."""

    def __init__(self, message, invariant=None):
        super().__init__(message)
        self.invariant = invariant


class AssemblyError(HelmholtzError, RuntimeError):
    """Assembly or factorization failed (non-finite data, singular system)."""


class DivergenceError(HelmholtzError, RuntimeError):
    """The fixed-point iteration diverged even after damping.

    The partially converged :class:`~nlhelmholtz.solver.Solution` is kept on
    the ``solution`` attribute so callers can still write artifacts.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class SweepError(HelmholtzError, RuntimeError):
    """A solve inside a parameter sweep failed; ``N`` names the offending entry."""

    def __init__(self, message, N=None):
        super().__init__(message)
        self.N = N
