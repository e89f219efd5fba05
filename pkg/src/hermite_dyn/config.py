"""Scenario configuration for the command-line runner.

Configs are TOML files.  Every table maps onto a frozen dataclass and any key
that is not a field is rejected, so a typo never silently falls back to a
default.  All quantities are nondimensional: ``m = k = 1`` for the
oscillator and ``rho0 = E = A = L = 1`` for the bar unless overridden.
Simulated time is given in periods of the reference oscillation (``T0`` of
the oscillator or ``T0_an`` of the bar's first analytic mode).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .fe1d import ElementKind
from .integrators import Predictor, Scheme

__all__ = [
    "BarSection",
    "CflSection",
    "ConfigError",
    "ConvergeSection",
    "NewmarkSection",
    "NewtonSection",
    "OscillatorSection",
    "OutputSection",
    "ReferenceSection",
    "ScenarioConfig",
    "StabilitySection",
    "TimeSection",
    "config_hash",
    "load_config",
    "parse_config",
]

PROBLEMS = ("oscillator", "linear_bar", "neohooke_bar")
DEFAULT_U0 = {"oscillator": 1.0, "linear_bar": 0.05, "neohooke_bar": 0.05}


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class OscillatorSection:
    m: float = 1.0
    k: float = 1.0


@dataclass(frozen=True)
class BarSection:
    L: float = 1.0
    A: float = 1.0
    rho0: float = 1.0
    E: float = 1.0
    n_el: int = 4
    element: str = "hermite"


@dataclass(frozen=True)
class TimeSection:
    periods: float = 1.0
    steps_per_period: int = 10
    store_every: int = 1


@dataclass(frozen=True)
class QuadratureSection:
    time_points: int = 5


@dataclass(frozen=True)
class NewtonSection:
    tol_rel: float = 1e-12
    tol_abs: float = 1e-14
    max_iter: int = 25
    predictor: str = "constant_velocity"


@dataclass(frozen=True)
class NewmarkSection:
    beta: float = 0.25
    gamma: float = 0.5


@dataclass(frozen=True)
class OutputSection:
    path: str = "out"
    energy_limit: float = 10.0


@dataclass(frozen=True)
class ReferenceSection:
    # auto | analytic | discrete | none | path of a stored reference CSV
    source: str = "auto"
    n_el: int = 256
    steps_per_period: int = 8192
    sample_steps_per_period: int = 256


@dataclass(frozen=True)
class ConvergeSection:
    mode: str = "temporal"  # temporal | cfl
    schemes: tuple = ()
    levels: int = 6
    base_steps_per_period: int = 8
    cfl: float = 0.5
    base_ds: float = 0.125
    norm: str = "max"  # max | sigma


@dataclass(frozen=True)
class StabilitySection:
    gamma_max: float = 12.0
    sweep_points: int = 1201


@dataclass(frozen=True)
class CflSection:
    schemes: tuple = ("l1", "p2")
    elements: tuple = ("linear", "hermite")
    n_el: int = 16
    horizon: float = 200.0
    lo: float = 0.3
    hi: float = 1.5
    tol: float = 5e-3
    growth: float = 2.0


_SECTIONS = {
    "oscillator": OscillatorSection,
    "bar": BarSection,
    "time": TimeSection,
    "quadrature": QuadratureSection,
    "newton": NewtonSection,
    "newmark": NewmarkSection,
    "output": OutputSection,
    "reference": ReferenceSection,
    "converge": ConvergeSection,
    "stability": StabilitySection,
    "cfl": CflSection,
}


@dataclass(frozen=True)
class ScenarioConfig:
    problem: str = "oscillator"
    scheme: str = "p2"
    u0: float | None = None
    oscillator: OscillatorSection = field(default_factory=OscillatorSection)
    bar: BarSection = field(default_factory=BarSection)
    time: TimeSection = field(default_factory=TimeSection)
    quadrature: QuadratureSection = field(default_factory=QuadratureSection)
    newton: NewtonSection = field(default_factory=NewtonSection)
    newmark: NewmarkSection = field(default_factory=NewmarkSection)
    output: OutputSection = field(default_factory=OutputSection)
    reference: ReferenceSection = field(default_factory=ReferenceSection)
    converge: ConvergeSection = field(default_factory=ConvergeSection)
    stability: StabilitySection = field(default_factory=StabilitySection)
    cfl: CflSection = field(default_factory=CflSection)

    @property
    def amplitude(self) -> float:
        return DEFAULT_U0[self.problem] if self.u0 is None else self.u0

    @property
    def is_bar(self) -> bool:
        return self.problem != "oscillator"

    @property
    def n_steps(self) -> int:
        return steps_for(self.time.periods, self.time.steps_per_period)

    def replace(self, **changes) -> "ScenarioConfig":
        return validate(dataclasses.replace(self, **changes))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def steps_for(periods, steps_per_period) -> int:
    n = periods * steps_per_period
    if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
        raise ConfigError(f"{periods} periods at {steps_per_period} steps per period is not a whole number of steps")
    return int(round(n))


def _check_type(where, name, value, expected):
    if expected in ("float", float, "float | None"):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if expected == "float | None":
            ok = ok or value is None
    elif expected in ("int", int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected in ("str", str):
        ok = isinstance(value, str)
    elif expected in ("tuple", tuple):
        ok = isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where}{name}: expected {expected}, got {value!r}")
    if expected in ("tuple", tuple):
        return tuple(value)
    if expected in ("float", float) or (expected == "float | None" and value is not None):
        return float(value)
    return value


def _build(cls, mapping, where=""):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where or 'config'} must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where.rstrip('.') or 'top level'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in mapping.items():
        if name in _SECTIONS and cls is ScenarioConfig:
            kwargs[name] = _build(_SECTIONS[name], value, f"{name}.")
        else:
            kwargs[name] = _check_type(where, name, value, fields[name].type)
    return cls(**kwargs)


def _positive(where, value, integer=False):
    if integer and (int(value) != value or value < 1):
        raise ConfigError(f"{where} must be a positive integer")
    if not value > 0:
        raise ConfigError(f"{where} must be positive")


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    """Check value ranges and cross-field consistency; return ``cfg``."""
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}, got {cfg.problem!r}")
    try:
        Scheme.parse(cfg.scheme)
        for s in cfg.converge.schemes + cfg.cfl.schemes:
            Scheme.parse(s)
        ElementKind(cfg.bar.element)
        for e in cfg.cfl.elements:
            ElementKind(e)
        Predictor(cfg.newton.predictor)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.u0 is not None and cfg.u0 == 0:
        raise ConfigError("u0 must be nonzero")
    for name in ("m", "k"):
        _positive(f"oscillator.{name}", getattr(cfg.oscillator, name))
    for name in ("L", "A", "rho0", "E"):
        _positive(f"bar.{name}", getattr(cfg.bar, name))
    _positive("bar.n_el", cfg.bar.n_el, integer=True)
    if cfg.time.periods < 0:
        raise ConfigError("time.periods must be non-negative")
    _positive("time.steps_per_period", cfg.time.steps_per_period, integer=True)
    _positive("time.store_every", cfg.time.store_every, integer=True)
    steps_for(cfg.time.periods, cfg.time.steps_per_period)
    if not 1 <= cfg.quadrature.time_points <= 16:
        raise ConfigError("quadrature.time_points must lie in 1..16")
    _positive("newton.tol_rel", cfg.newton.tol_rel)
    _positive("newton.tol_abs", cfg.newton.tol_abs)
    _positive("newton.max_iter", cfg.newton.max_iter, integer=True)
    _positive("output.energy_limit", cfg.output.energy_limit)
    for name in ("n_el", "steps_per_period", "sample_steps_per_period"):
        _positive(f"reference.{name}", getattr(cfg.reference, name), integer=True)
    if cfg.reference.steps_per_period % cfg.reference.sample_steps_per_period:
        raise ConfigError("reference.sample_steps_per_period must divide reference.steps_per_period")
    if cfg.converge.mode not in ("temporal", "cfl"):
        raise ConfigError("converge.mode must be 'temporal' or 'cfl'")
    if cfg.converge.norm not in ("max", "sigma"):
        raise ConfigError("converge.norm must be 'max' or 'sigma'")
    _positive("converge.levels", cfg.converge.levels, integer=True)
    _positive("converge.base_steps_per_period", cfg.converge.base_steps_per_period, integer=True)
    _positive("converge.cfl", cfg.converge.cfl)
    _positive("converge.base_ds", cfg.converge.base_ds)
    _positive("stability.gamma_max", cfg.stability.gamma_max)
    _positive("stability.sweep_points", cfg.stability.sweep_points, integer=True)
    _positive("cfl.n_el", cfg.cfl.n_el, integer=True)
    for name in ("horizon", "lo", "hi", "tol", "growth"):
        _positive(f"cfl.{name}", getattr(cfg.cfl, name))
    if not cfg.cfl.lo < cfg.cfl.hi:
        raise ConfigError("cfl.lo must be smaller than cfl.hi")
    return cfg


def parse_config(data: dict) -> ScenarioConfig:
    return validate(_build(ScenarioConfig, data))


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)


def config_hash(cfg: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form; the output path is excluded."""
    data = cfg.to_dict()
    data["output"].pop("path")
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
