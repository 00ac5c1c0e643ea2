"""Line-oriented ``key=value`` run configuration.

Precedence is command-line flag, then config file, then the defaults below.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .rbf import RbfConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # augmentation
    replicas: int = 10
    q_lo: float = 0.0
    q_hi: float = 4.0
    scheme: str = "grid"
    seed: int = 0
    # training
    mode: str = "rbf"
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    shuffle: bool = True
    qmin: float = 0.5
    # head
    p_max: float = 0.6
    p_min: float = 0.3
    a: float = 0.0
    b: float = 4.0
    peak: float = 6.0
    sigma_rbf: float = 0.7
    num_classes: int = 10
    # statistics
    error_free_denominator: str = "all"
    population: str = "all"
    tau: float = 0.5
    breakpoints: str = "0,0.5,1,1.5,2,2.5,3,3.5,4"
    bin_width: float = 0.25
    min_points: int = 10

    def __post_init__(self):
        if self.scheme not in ("grid", "random"):
            raise ConfigError(f"scheme must be grid or random, got {self.scheme!r}")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if not self.q_lo < self.q_hi:
            raise ConfigError("q_lo must be < q_hi")
        for key in ("error_free_denominator", "population"):
            if getattr(self, key) not in ("all", "correct"):
                raise ConfigError(f"{key} must be all or correct")
        if not 0 < self.tau < 1:
            raise ConfigError("tau must lie in (0, 1)")
        if not self.bin_width > 0:
            raise ConfigError("bin_width must be > 0")
        edges = self.breakpoint_list()
        if len(edges) < 2 or any(lo >= hi for lo, hi in zip(edges, edges[1:])):
            raise ConfigError("breakpoints must be increasing with at least two entries")
        # construct to validate
        self.train_config()
        self.rbf_config()

    def breakpoint_list(self) -> list[float]:
        try:
            return [float(v) for v in self.breakpoints.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad breakpoints {self.breakpoints!r}") from exc

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.mode, self.epochs, self.batch_size, self.learning_rate,
                           self.momentum, self.seed, self.shuffle)

    def rbf_config(self) -> RbfConfig:
        return RbfConfig(self.p_max, self.p_min, self.a, self.b, self.peak, self.sigma_rbf, self.num_classes)

    def to_text(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in asdict(self).items())


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _convert(name: str, kind, text: str):
    text = text.strip()
    try:
        if kind is bool or kind == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int or kind == "int":
            return int(text)
        if kind is float or kind == "float":
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{origin}:{lineno}: expected key=value, got {raw!r}")
        if key not in _FIELDS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, _FIELDS[key], value)
    return values


def resolve(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then ``path`` (if given), then non-``None`` ``overrides``."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(), str(p)))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, _FIELDS[key], value) if isinstance(value, str) else value
    return replace(RunConfig(), **values)
