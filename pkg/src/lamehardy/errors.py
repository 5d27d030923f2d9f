"""Exception types shared across the package."""


class LameHardyError(Exception):
    """Base class for all errors raised by lamehardy."""


class DomainError(LameHardyError, ValueError):
    """An argument lies outside the domain of an operation."""


class SingularityError(LameHardyError, ArithmeticError):
    """Evaluation at a point where a kernel or inverse does not exist."""


class NearSingularError(LameHardyError, ValueError):
    """Target point too close to the quadrature support for the rule to be trusted."""


class DegeneracyError(LameHardyError, ValueError):
    """Jet recovery requested with c1 = +-c2, where the trace relation cannot determine the jet."""


class ConditioningError(LameHardyError, ArithmeticError):
    """A local linear system is rank deficient."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ConfigError(LameHardyError, ValueError):
    """Invalid run configuration (Lame parameters, dimension, level)."""
