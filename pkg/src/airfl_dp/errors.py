"""Exception hierarchy.

CLI exit codes are attached to the classes so ``cli.main`` can map any
raised error to the documented process status.
"""


class AirFLError(Exception):
    exit_code = 1


class ParameterError(AirFLError, ValueError):
    """An argument is outside the domain of the operation."""

    exit_code = 2


class ConfigError(AirFLError, ValueError):
    """A configuration is inconsistent before any round has run."""

    exit_code = 2


class InfeasibleError(AirFLError):
    """A power or privacy constraint cannot be met."""

    exit_code = 3

    def __init__(self, message, device=None):
        super().__init__(message)
        self.device = device


class DegenerateChannelError(InfeasibleError):
    """Effective channel ``w^H h_i`` is zero for some device."""


class NumericalError(AirFLError, ArithmeticError):
    exit_code = 4


class SingularMatrixError(NumericalError):
    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class CDeltaError(ParameterError):
    """Slack constant ``c_delta`` too small for the requested conversion."""

    def __init__(self, message, min_c_delta):
        super().__init__(message)
        self.min_c_delta = min_c_delta
