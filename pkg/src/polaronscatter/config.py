"""Experiment configuration: YAML documents validated into dataclasses.

Only the ``model`` section is required; the others fall back to defaults.
Unknown keys are rejected with the offending dotted path in the message.
See ``docs/config.md`` in the repository for the full schema.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field, fields
from typing import Any

import yaml

from .errors import ParameterError
from .polaron import ALPHA_MAX


class ConfigError(ParameterError):
    """Schema violation in an experiment configuration."""


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads 1e-3 style floats (YAML 1.2 behaviour)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][-+]?[0-9]+)?$|^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$"),
    list("-+0123456789."),
)


def _err(path: str, msg: str) -> ConfigError:
    return ConfigError(f"{path}: {msg}")


def _positive(path, v):
    if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 and math.isfinite(v)):
        raise _err(path, f"must be a positive number (got {v!r})")


def _real(path, v):
    if not (isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)):
        raise _err(path, f"must be a finite number (got {v!r})")


def _count(path, v, lo=1):
    if not (isinstance(v, int) and not isinstance(v, bool) and v >= lo):
        raise _err(path, f"must be an integer >= {lo} (got {v!r})")


def _choice(path, v, options):
    if v not in options:
        raise _err(path, f"must be one of {list(options)} (got {v!r})")


@dataclass
class DispersionConfig:
    kind: str = "linear"
    c: float = 1.0
    band_top: float | None = None

    def validate(self, path):
        _choice(f"{path}.kind", self.kind, ("linear", "sine"))
        _positive(f"{path}.c", self.c)
        if self.band_top is not None:
            _positive(f"{path}.band_top", self.band_top)


@dataclass
class CutoffConfig:
    kind: str = "hard"
    omega_c: float = 4.0

    def validate(self, path):
        _choice(f"{path}.kind", self.kind, ("hard", "exponential"))
        _positive(f"{path}.omega_c", self.omega_c)


@dataclass
class ModelConfig:
    n_modes: int = 128
    length: float | None = None
    alpha: float = 0.12
    delta: float = 1.0
    dispersion: DispersionConfig = field(default_factory=DispersionConfig)
    cutoff: CutoffConfig = field(default_factory=CutoffConfig)

    def validate(self, path):
        _count(f"{path}.n_modes", self.n_modes)
        if self.length is not None:
            _positive(f"{path}.length", self.length)
        _real(f"{path}.alpha", self.alpha)
        if not 0 <= self.alpha <= ALPHA_MAX:
            raise _err(f"{path}.alpha", f"alpha must be in [0, {ALPHA_MAX}] (got {self.alpha})")
        if self.delta != 1.0:
            raise _err(f"{path}.delta", "energies are in units of the bare gap; delta must be 1")
        self.dispersion.validate(f"{path}.dispersion")
        self.cutoff.validate(f"{path}.cutoff")

    def resolve(self):
        if self.length is None:
            # top mode on the cutoff for a linear band
            self.length = 2 * math.pi * self.n_modes * self.dispersion.c / self.cutoff.omega_c


@dataclass
class PolaronConfig:
    tol: float = 1e-12
    max_iter: int = 10_000
    damping: float = 0.5

    def validate(self, path):
        _positive(f"{path}.tol", self.tol)
        _count(f"{path}.max_iter", self.max_iter)
        _positive(f"{path}.damping", self.damping)
        if self.damping > 1:
            raise _err(f"{path}.damping", "must lie in (0, 1]")


@dataclass
class Scatter1Config:
    source: str = "continuum"
    eta: float | None = None

    def validate(self, path):
        _choice(f"{path}.source", self.source, ("closed", "continuum", "discrete"))
        if self.eta is not None:
            _positive(f"{path}.eta", self.eta)


@dataclass
class QuadConfig:
    epsabs: float = 1e-11
    epsrel: float = 1e-10
    limit: int = 2000
    eta: float = 1e-7

    def validate(self, path):
        _positive(f"{path}.epsabs", self.epsabs)
        _positive(f"{path}.epsrel", self.epsrel)
        _count(f"{path}.limit", self.limit, 10)
        _positive(f"{path}.eta", self.eta)


@dataclass
class Scatter2Config:
    source: str = "continuum"
    k1: int | None = None
    k2: int | None = None
    quad: QuadConfig = field(default_factory=QuadConfig)

    def validate(self, path):
        _choice(f"{path}.source", self.source, ("closed", "continuum", "discrete"))
        for name in ("k1", "k2"):
            v = getattr(self, name)
            if v is not None:
                _count(f"{path}.{name}", v, 0)
        self.quad.validate(f"{path}.quad")


@dataclass
class PacketConfig:
    mu: float | None = None
    s: float = 0.01
    x: float = -15.0

    def validate(self, path):
        if self.mu is not None:
            _real(f"{path}.mu", self.mu)
        _positive(f"{path}.s", self.s)
        _real(f"{path}.x", self.x)


@dataclass
class DynamicsConfig:
    packets: list[PacketConfig] = field(default_factory=lambda: [PacketConfig()])
    t_final: float = 40.0
    dt_report: float = 0.25
    tol: float = 1e-10
    method: str = "auto"

    def validate(self, path):
        if not 1 <= len(self.packets) <= 2:
            raise _err(f"{path}.packets", "must list one or two wavepackets")
        for i, p in enumerate(self.packets):
            p.validate(f"{path}.packets[{i}]")
        _real(f"{path}.t_final", self.t_final)
        if self.t_final < 0:
            raise _err(f"{path}.t_final", "must be nonnegative")
        _positive(f"{path}.dt_report", self.dt_report)
        _positive(f"{path}.tol", self.tol)
        _choice(f"{path}.method", self.method, ("auto", "chebyshev", "expm"))


@dataclass
class OracleConfig:
    n_max: int = 4
    budget: int = 4096
    t_final: float = 20.0
    dt_report: float = 0.25
    packet: PacketConfig = field(default_factory=lambda: PacketConfig(s=0.1, x=0.0))

    def validate(self, path):
        _count(f"{path}.n_max", self.n_max)
        _count(f"{path}.budget", self.budget)
        _real(f"{path}.t_final", self.t_final)
        if self.t_final < 0:
            raise _err(f"{path}.t_final", "must be nonnegative")
        _positive(f"{path}.dt_report", self.dt_report)
        self.packet.validate(f"{path}.packet")


@dataclass
class SweepConfig:
    alpha: list[float] = field(default_factory=list)

    def validate(self, path):
        for i, a in enumerate(self.alpha):
            _real(f"{path}.alpha[{i}]", a)
            if not 0 <= a <= ALPHA_MAX:
                raise _err(f"{path}.alpha[{i}]", f"alpha must be in [0, {ALPHA_MAX}] (got {a})")


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv", "json"])

    def validate(self, path):
        if not isinstance(self.directory, str) or not self.directory:
            raise _err(f"{path}.directory", "must be a nonempty string")
        for i, f in enumerate(self.formats):
            _choice(f"{path}.formats[{i}]", f, ("csv", "json"))


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    polaron: PolaronConfig = field(default_factory=PolaronConfig)
    scatter1: Scatter1Config = field(default_factory=Scatter1Config)
    scatter2: Scatter2Config = field(default_factory=Scatter2Config)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self):
        for f in fields(self):
            getattr(self, f.name).validate(f.name)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _build(cls, data: Any, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise _err(path, f"expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise _err(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        default = cls.__dataclass_fields__[name]
        proto = default.default_factory() if default.default_factory is not dataclasses.MISSING else default.default
        if dataclasses.is_dataclass(proto):
            kwargs[name] = _build(type(proto), value, sub)
        elif isinstance(proto, list) and proto and dataclasses.is_dataclass(proto[0]):
            if not isinstance(value, list):
                raise _err(sub, "expected a list")
            kwargs[name] = [_build(type(proto[0]), v, f"{sub}[{i}]") for i, v in enumerate(value)]
        elif isinstance(proto, list) or (name in ("alpha", "formats") and isinstance(value, list)):
            if not isinstance(value, list):
                raise _err(sub, "expected a list")
            kwargs[name] = list(value)
        else:
            if isinstance(value, (dict, list)):
                raise _err(sub, "expected a scalar")
            if isinstance(proto, float) and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            kwargs[name] = value
    return cls(**kwargs)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML document; defaults are filled and resolved.

    Only the ``model`` section is required.

    Raises:
        ConfigError: malformed YAML, unknown keys or constraint violations.
    """
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    if not isinstance(data, dict) or "model" not in data:
        raise ConfigError("model: missing required section")
    cfg = _build(ExperimentConfig, data, "")
    cfg.validate()
    cfg.model.resolve()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text)
