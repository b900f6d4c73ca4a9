"""Differentially private federated learning over an analog multiple-access channel."""

from .config import SystemConfig, load_config
from .errors import (
    AirFLError,
    CDeltaError,
    ConfigError,
    DegenerateChannelError,
    InfeasibleError,
    NumericalError,
    ParameterError,
    SingularMatrixError,
)
from .experiment import RoundMetrics, emit_plotdata, run_experiment, sweep

__all__ = [
    "AirFLError",
    "CDeltaError",
    "ConfigError",
    "DegenerateChannelError",
    "InfeasibleError",
    "NumericalError",
    "ParameterError",
    "RoundMetrics",
    "SingularMatrixError",
    "SystemConfig",
    "emit_plotdata",
    "load_config",
    "run_experiment",
    "sweep",
]
