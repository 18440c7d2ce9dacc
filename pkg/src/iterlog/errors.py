"""Exception hierarchy shared by all iterlog modules."""


class IterlogError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(IterlogError, ValueError):
    pass


class ShapeError(IterlogError, ValueError):
    pass


class DomainError(IterlogError, ValueError):
    pass


class InvalidMeasureError(IterlogError, ValueError):
    pass


class ConfigError(IterlogError, ValueError):
    """Aggregated configuration failure; ``violations`` maps key -> message."""

    def __init__(self, violations):
        self.violations = dict(violations)
        lines = [f"{key}: {msg}" for key, msg in self.violations.items()]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class NumericalError(IterlogError, ArithmeticError):
    """Failures that map to exit status 2 on the command line."""


class KernelDivergenceError(NumericalError):
    pass


class ExcursionError(NumericalError):
    pass


class ResourceError(IterlogError, RuntimeError):
    pass
