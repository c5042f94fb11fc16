"""Error types shared across the package.

The CLI maps each class to a distinct exit code, so anything that should
be distinguishable by a caller gets its own type here.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class CapacityError(RuntimeError):
    """A dimension guard was exceeded (problem too large for the dense route)."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach the requested accuracy."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ImpossibleOutcomeError(ValueError):
    """A projective measurement outcome has (numerically) zero probability.

    In postselected protocols this signals a dead-end trajectory.
    """


class AmbiguousScarError(RuntimeError):
    """Scar selection found indistinguishable candidates in one energy window."""

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = list(candidates)
