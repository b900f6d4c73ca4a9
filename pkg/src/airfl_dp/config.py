"""Experiment configuration: flat ``key = value`` files with CLI overrides.

Blank lines and ``#`` comments are ignored.  Unknown keys are an error.
``c`` left unset resolves to ``sqrt(0.012 d)``; ``c_delta`` unset resolves
to ``max(8, 2 eps / log(1/delta))``; ``alpha`` unset resolves to
``1 + 2 log(1/delta) / eps`` with ``eps = eps_tilde * sqrt(d)``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .aircomp import CONVENTIONS
from .errors import ConfigError
from .fl import TASK_KINDS, active_count

SCHEMES = ("vanilla", "clip", "airfl-zf", "airfl-dp")
ALLOCATIONS = ("offline", "online")


@dataclass(frozen=True)
class SystemConfig:
    n: int = 10
    m: int = 20
    r: float = 1.0
    T: int = 50
    Q: int = 5
    batch: int = 10
    samples_per_device: int = 50
    eta: float = 0.005
    c: float | None = None
    P: float = 2e-3  # W
    sigma2: float = 1e-13  # W, about -100 dBm
    delta: float = 1e-5
    eps_tilde: float = 0.1
    c_delta: float | None = None
    alpha: float | None = None
    D: float = math.inf
    d: int = 50
    task: str = "quadratic"
    scheme: str = "airfl-dp"
    allocation: str = "offline"
    trials: int = 10
    seed: int = 0
    complex_noise_convention: str = "half"
    carrier_freq: float = 2.4e9
    r_max: float = 1000.0
    L: float | None = None

    def __post_init__(self):
        for name in ("n", "m", "T", "Q", "batch", "samples_per_device", "d", "trials"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("eta", "P", "eps_tilde", "carrier_freq", "r_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be nonnegative")
        if self.c is not None and not self.c > 0:
            raise ConfigError("c must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not self.D > 0:
            raise ConfigError("D must be positive (inf disables the bounded domain)")
        if self.batch > self.samples_per_device - 1:
            # array_split may leave a device one sample short
            raise ConfigError("batch must be below samples_per_device")
        if self.task not in TASK_KINDS:
            raise ConfigError(f"task must be one of {TASK_KINDS}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.allocation not in ALLOCATIONS:
            raise ConfigError(f"allocation must be one of {ALLOCATIONS}")
        if self.complex_noise_convention not in CONVENTIONS:
            raise ConfigError(f"complex_noise_convention must be one of {CONVENTIONS}")
        rn = active_count(self.n, self.r)
        if self.scheme.startswith("airfl"):
            if self.m < rn:
                raise ConfigError(f"zero forcing needs m >= rn (m={self.m}, rn={rn})")
            if not self.sigma2 > 0 and self.scheme == "airfl-dp":
                raise ConfigError("airfl-dp needs sigma2 > 0")

    @property
    def rn(self):
        return active_count(self.n, self.r)

    @property
    def clip(self):
        return self.c if self.c is not None else math.sqrt(0.012 * self.d)

    @property
    def epsilon(self):
        return self.eps_tilde * math.sqrt(self.d)

    @property
    def c_delta_resolved(self):
        if self.c_delta is not None:
            return self.c_delta
        return max(8.0, 2.0 * self.epsilon / math.log(1.0 / self.delta))

    @property
    def alpha_resolved(self):
        if self.alpha is not None:
            return self.alpha
        return 1.0 + 2.0 * math.log(1.0 / self.delta) / self.epsilon

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_OPTIONAL_FLOATS = {"c", "c_delta", "alpha", "L"}


def _field_types():
    types = {}
    for f in fields(SystemConfig):
        default = f.default
        if f.name in _OPTIONAL_FLOATS:
            types[f.name] = float
        elif isinstance(default, bool):
            types[f.name] = bool
        else:
            types[f.name] = type(default)
    return types


FIELD_TYPES = _field_types()


def parse_value(key, text):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    text = text.strip()
    if key in _OPTIONAL_FLOATS and text.lower() in ("", "none", "auto"):
        return None
    kind = FIELD_TYPES[key]
    try:
        if kind is int:
            value = float(text)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None
    return text


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(key, value)
    return values


def load_config(path=None, overrides=None):
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    values.update(overrides or {})
    return SystemConfig(**values)


def dump_config(cfg):
    """Fully resolved configuration as ``key = value`` lines."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "c" and value is None:
            value = cfg.clip
        elif f.name == "c_delta" and value is None:
            value = cfg.c_delta_resolved
        elif f.name == "alpha" and value is None:
            value = cfg.alpha_resolved
        lines.append(f"{f.name} = {'none' if value is None else value!r}".replace("'", ""))
    return "\n".join(lines) + "\n"
