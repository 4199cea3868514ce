"""Exception hierarchy shared by all solver modules."""


class KerrExactError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(KerrExactError, ValueError):
    """Invalid physical or numerical parameters."""


class PoleError(KerrExactError, ValueError):
    """A Gamma-function pole or a vanishing Pochhammer symbol was hit."""


class PrecisionCapError(KerrExactError, ArithmeticError):
    """Precision escalation would exceed ``PrecisionContext.max_bits``."""


class ConvergenceError(KerrExactError, ArithmeticError):
    """A series did not converge within the allowed number of terms."""


class CutoffError(ConvergenceError):
    """A kernel series is too short for the requested quantity."""


class TruncationError(KerrExactError):
    """A Fock-space truncation is too small for the requested accuracy."""


class SingularSolveError(KerrExactError, ArithmeticError):
    """The steady-state linear system could not be solved."""


class NotAFixedPointError(KerrExactError, ValueError):
    """The amplitude handed to a stability analysis is not a fixed point."""


class NoInteriorMaximumError(KerrExactError, ValueError):
    """A derivative has no strict interior extremum."""


class ConfigError(KerrExactError, ValueError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
