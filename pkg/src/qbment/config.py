"""Run configuration: defaults, a flat sectioned key = value file format, overrides.

Example file::

    temperature = 10

    [model]
    omega1 = 1.0
    omega2 = 1.0

    [initial]
    kind = two_mode_squeezed
    r = 3

Precedence is command line > file > defaults.  Defaults are the ohmic
parameter set Omega = 1, gamma0 = 0.15, cutoff = 20, m = 1, C12 = 0.
"""

import math
from dataclasses import dataclass, field, fields, replace

from .bath import SpectralDensity, SpectralKind, discretize
from .dynamics import ModelParams
from .errors import ConfigurationError
from .gaussian import InitialStateSpec, StateKind

FORMATS = ("csv", "json")


@dataclass(frozen=True)
class ModelSection:
    omega1: float = 1.0
    omega2: float = 1.0
    c12: float = 0.0
    mass: float = 1.0


@dataclass(frozen=True)
class BathSection:
    kind: str = "ohmic"
    gamma0: float = 0.15
    cutoff: float = 20.0
    s: float = 3.0
    n_modes: int = 2000


@dataclass(frozen=True)
class InitialSection:
    kind: str = "two_mode_squeezed"
    r: float = 1.0


@dataclass(frozen=True)
class RunSection:
    t_max: float = 50.0
    dt_out: float = 0.05
    window: float = 0.25


@dataclass(frozen=True)
class OutputSection:
    path: str = "qbment_out"
    format: str = "csv"


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    bath: BathSection = field(default_factory=BathSection)
    temperature: float = 0.0
    initial: InitialSection = field(default_factory=InitialSection)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)

    def model_params(self):
        J = SpectralDensity(
            kind=self.bath.kind,
            gamma0=self.bath.gamma0,
            cutoff=self.bath.cutoff,
            m=self.model.mass,
            s=self.bath.s,
        )
        return ModelParams(
            omega1=self.model.omega1,
            omega2=self.model.omega2,
            c12=self.model.c12,
            m=self.model.mass,
            spectral=J,
            n_modes=self.bath.n_modes,
        )

    def initial_spec(self, p=None):
        p = self.model_params() if p is None else p
        return InitialStateSpec(self.initial.kind, self.initial.r, p.m, p.state_frequency)

    def times(self):
        n = int(round(self.run.t_max / self.run.dt_out))
        return [i * self.run.dt_out for i in range(n + 1)]


_SECTIONS = ("model", "bath", "initial", "run", "output")
_TOP_LEVEL = ("temperature",)


def _coerce(value, like, key):
    if isinstance(like, str):
        return str(value)
    try:
        if isinstance(like, int) and not isinstance(like, bool):
            num = float(value)
            if num != int(num):
                raise ValueError
            return int(num)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: expected a number, got {value!r}") from None


def apply_overrides(cfg, values):
    """New config with dotted ``section.key`` (or top-level) entries replaced."""
    updates = {}
    top = {}
    for key, value in values.items():
        if key in _TOP_LEVEL:
            top[key] = _coerce(value, getattr(cfg, key), key)
            continue
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        sec = updates.get(section, getattr(cfg, section))
        if name not in {f.name for f in fields(sec)}:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        updates[section] = replace(sec, **{name: _coerce(value, getattr(sec, name), key)})
    return replace(cfg, **updates, **top)


def parse_config_text(text, base=None):
    values = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigurationError(f"line {lineno}: unknown section [{section}]")
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, value = key.strip(), value.strip().strip('"').strip("'")
        values[f"{section}.{key}" if section else key] = value
    return apply_overrides(RunConfig() if base is None else base, values)


def load_config(path, base=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base)


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def serialize_config(cfg):
    lines = [f"{k} = {_fmt(getattr(cfg, k))}" for k in _TOP_LEVEL]
    for name in _SECTIONS:
        sec = getattr(cfg, name)
        lines += ["", f"[{name}]"] + [f"{f.name} = {_fmt(getattr(sec, f.name))}" for f in fields(sec)]
    return "\n".join(lines) + "\n"


def validate_config(cfg, check_horizon=True):
    """Raise ConfigurationError (or RecurrenceError for the horizon) on a bad config.

    Jobs that never propagate in time pass ``check_horizon=False``.
    """
    for name in _SECTIONS:
        for f in fields(getattr(cfg, name)):
            v = getattr(getattr(cfg, name), f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigurationError(f"{name}.{f.name} must be finite")
    if not math.isfinite(cfg.temperature) or cfg.temperature < 0:
        raise ConfigurationError("temperature must be finite and >= 0")
    if cfg.output.format not in FORMATS:
        raise ConfigurationError(f"output.format must be one of {FORMATS}")
    try:
        SpectralKind(cfg.bath.kind)
        StateKind(cfg.initial.kind)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    if not (cfg.run.t_max > 0 and cfg.run.dt_out > 0):
        raise ConfigurationError("run.t_max and run.dt_out must be positive")
    if not 0 < cfg.run.window <= 1:
        raise ConfigurationError("run.window must be in (0, 1]")
    if cfg.initial.r < 0:
        raise ConfigurationError("initial.r must be >= 0")
    p = cfg.model_params()
    try:
        cfg.initial_spec(p)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    if check_horizon:
        discretize(p.spectral, p.n_modes).check_horizon(cfg.run.t_max)
    return p
