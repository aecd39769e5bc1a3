"""Run configuration: nested dataclasses read from ``section.key = value`` text.

Precedence is command line > config file > defaults; both of the first two
arrive here as ``key=value`` strings and are applied in that order by
:func:`load_config`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

from .exceptions import ConfigError


@dataclass
class ModelSection:
    n_layers: int = 2
    channels: Optional[Tuple[int, ...]] = None
    k: int = 32
    temperature: float = 0.03
    combine_mode: str = "product"
    map_mode: str = "soft"
    conf_width: int = 64
    conf_blocks: int = 9
    conf_k: int = 32
    input_features: str = "ones"


@dataclass
class LossSection:
    terms: str = "ca+cc+gc"
    kappa: float = 0.05


@dataclass
class OptimSection:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class TrainSection:
    epochs: int = 10
    lr_decay_epochs: Tuple[int, ...] = (6, 8)
    lr_decay_factor: float = 10.0
    seed: int = 0
    n_train: int = 200
    n_val: int = 50
    val_every: int = 1
    augment_rotation_deg: float = 0.0


@dataclass
class DataSection:
    n_points: int = 256
    overlap_target: float = 0.5
    rotation_max_deg: float = 45.0
    translation_max: float = 0.5
    noise_sigma: float = 0.005
    shape_kind: str = "box-room"
    seed: int = 0
    n_test: int = 50
    directory: Optional[str] = None


@dataclass
class EvalSection:
    te_max: float = 0.3
    re_max_deg: float = 15.0
    tau: Optional[float] = None
    tau_grid: Tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(20))
    icp: bool = False
    icp_max_iters: int = 50
    icp_max_pair_dist: float = 0.05


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    optim: OptimSection = field(default_factory=OptimSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def validate(self):
        decay = list(self.train.lr_decay_epochs)
        if any(b <= a for a, b in zip(decay, decay[1:])):
            raise ConfigError("train.lr_decay_epochs must be strictly increasing")
        if not (self.eval.te_max > 0 and self.eval.re_max_deg > 0):
            raise ConfigError("eval thresholds must be positive")
        if self.train.epochs < 0 or self.train.n_train < 1:
            raise ConfigError("train.epochs must be >= 0 and train.n_train >= 1")
        if self.loss.kappa <= 0:
            raise ConfigError("loss.kappa must be positive")
        if self.eval.tau is not None and not 0 <= self.eval.tau <= 1:
            raise ConfigError("eval.tau must lie in [0, 1]")
        return self

    @property
    def re_max(self):
        return math.radians(self.eval.re_max_deg)

    def items(self):
        """Flat ``(dotted key, value)`` pairs in declaration order."""
        for section in dataclasses.fields(self):
            sec = getattr(self, section.name)
            for f in dataclasses.fields(sec):
                yield f"{section.name}.{f.name}", getattr(sec, f.name)

    def to_text(self):
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.items())

    def copy(self):
        return parse_config_text(self.to_text())


def format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def _convert(raw, ftype, key):
    raw = raw.strip()
    optional = "Optional" in str(ftype)
    if optional and raw.lower() in ("none", ""):
        return None
    text = str(ftype)
    try:
        if "Tuple" in text or "tuple" in text:
            elem = int if "int" in text else float
            return tuple(elem(x) for x in raw.split(",") if x.strip())
        if "bool" in text:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "int" in text:
            return int(raw)
        if "float" in text:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def set_value(config, key, raw):
    if "." not in key:
        raise ConfigError(f"config key {key!r} needs a section prefix")
    section, name = key.split(".", 1)
    sec = getattr(config, section, None)
    if sec is None or not dataclasses.is_dataclass(sec):
        raise ConfigError(f"unknown config section {section!r}")
    fields = {f.name: f for f in dataclasses.fields(sec)}
    if name not in fields:
        raise ConfigError(f"unknown config key {key!r}")
    setattr(sec, name, _convert(raw, fields[name].type, key))


def apply_overrides(config, lines):
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = text.split("=", 1)
        set_value(config, key.strip(), value)
    return config


def parse_config_text(text):
    return apply_overrides(RunConfig(), text.splitlines()).validate()


def load_config(path=None, overrides=()):
    config = RunConfig()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                apply_overrides(config, fh.read().splitlines())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    apply_overrides(config, overrides)
    return config.validate()
