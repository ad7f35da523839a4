"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DepNetError(Exception):
    exit_code = 2


class DomainError(DepNetError, ValueError):
    """An argument is outside the operation's domain."""

    exit_code = 2


class ModelCorruptionError(DepNetError, ValueError):
    """A model (op log, table, or file) violates its invariants."""

    exit_code = 2


class CapacityError(DepNetError):
    """The dense state space would exceed the configured cap."""

    exit_code = 3


class ConvergenceError(DepNetError):
    """An iterative solver stopped before reaching its tolerance."""

    exit_code = 4

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegeneracyError(DepNetError):
    """The Markov chain has no unique stationary distribution."""

    exit_code = 4
