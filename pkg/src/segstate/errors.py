"""Exception types shared across the library."""


class SolverFailure(RuntimeError):
    """An iterative solver failed to converge.

    Carries diagnostic payload (last residual, iteration count) when the
    caller provides it.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NumericalInconsistency(RuntimeError):
    """Two independent routes to the same quantity disagree beyond tolerance."""


class NoRootError(RuntimeError):
    """A bracketing search exhausted its range without a sign change."""


class AssemblyError(RuntimeError):
    """Glued state failed a continuity check at a junction."""


class BlowUpError(RuntimeError):
    """A time integration produced non-finite values."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class SchemeViolation(RuntimeError):
    """A time integration violated a structural guarantee (e.g. positivity)."""


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""

    def __init__(self, message, line=None, key=None):
        super().__init__(message)
        self.line = line
        self.key = key
