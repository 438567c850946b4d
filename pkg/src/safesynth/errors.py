"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
NumericalBlowupError -> 2, PropertyViolationError -> 3.
"""


class ConfigError(ValueError):
    """Invalid configuration, grid geometry, or controller-file mismatch."""


class NumericalBlowupError(RuntimeError):
    """A trajectory or radius integration produced NaN/inf."""

    def __init__(self, message, bad_index=None):
        super().__init__(message)
        self.bad_index = bad_index


class PropertyViolationError(RuntimeError):
    """A guaranteed invariant failed at runtime (monotonicity, lazy/eager
    agreement, closed-loop soundness). Always a bug or a broken model, never
    an expected outcome."""


class DomainExitError(PropertyViolationError):
    """The closed loop left the controller domain: a soundness violation."""
