"""
Error types raised by the detection services.

All of them derive from ValueError so callers (and the command routes) can keep
catching ValueError for anything caused by bad input or an ill-posed scenario.
"""


class InvalidInputError(ValueError):
    """Malformed arguments: out-of-range nodes, duplicate nodes, mismatched sizes."""


class InvalidCorrelationError(InvalidInputError):
    """A correlation coefficient with |rho| >= 1."""


class PreconditionError(ValueError):
    """An operation was called outside its domain (e.g. a cyclic graph where a tree is required)."""


class SingularityError(ValueError):
    """A covariance block that is singular or numerically degenerate."""


class InvalidStateError(ValueError):
    """A sampling state that cannot be advanced (e.g. no remaining nodes)."""


class ConfigurationError(ValueError):
    """
    Invalid experiment or detection configuration.

    :param errors: every problem found, not only the first one
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
