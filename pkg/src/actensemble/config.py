"""Run configuration: a flat ``key = value`` text file plus overrides.

Lines starting with ``#`` are comments. Dotted keys (``adadelta.lr``) map to
underscored attributes (``adadelta_lr``). Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .network import MODES


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str = "mnist"
    mnist_dir: str = "data/mnist"
    # comma-separated; several files are concatenated
    isolet_path: str = "data/isolet/isolet.data"
    spec: str = "400f-400f-400f-10f"
    mode: str = "relu"
    bn: bool = True
    padding: str = "same"
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    split_seed: int = 0
    val_fraction: float = 0.1
    test_fraction: float = 0.3
    # 0 keeps everything; otherwise the first N samples of the source split
    train_limit: int = 0
    test_limit: int = 0
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    adadelta_lr: float = 1.0
    eta_delta_init: str = "swapped"
    ensemble_eps: float = 1e-5
    ensemble_momentum: float = 0.1
    out_dir: str = "runs/default"

    def validate(self) -> "RunConfig":
        if self.dataset not in ("mnist", "isolet"):
            raise ConfigError(f"dataset must be mnist or isolet, got {self.dataset!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.eta_delta_init not in ("paper", "swapped"):
            raise ConfigError("eta_delta_init must be paper or swapped")
        if self.padding not in ("same", "valid"):
            raise ConfigError("padding must be same or valid")
        for name in ("batch_size", "max_epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("patience", "train_limit", "test_limit"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 < self.val_fraction < 1.0 or not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("val_fraction and test_fraction must lie in (0, 1)")
        if not 0.0 < self.adadelta_rho < 1.0:
            raise ConfigError("adadelta.rho must lie in (0, 1)")
        if self.adadelta_eps <= 0 or self.adadelta_lr <= 0 or self.ensemble_eps <= 0:
            raise ConfigError("adadelta.eps, adadelta.lr and ensemble.eps must be positive")
        if not 0.0 < self.ensemble_momentum < 1.0:
            raise ConfigError("ensemble.momentum must lie in (0, 1)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{_dotted(f.name)} = {value}")
        return "\n".join(lines) + "\n"


_DOTTED_PREFIXES = ("adadelta_", "ensemble_", "mnist_", "isolet_")


def _dotted(attr: str) -> str:
    for prefix in _DOTTED_PREFIXES:
        if attr.startswith(prefix):
            return prefix[:-1] + "." + attr[len(prefix):]
    return attr


def _coerce(name: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind}") from None
    return raw


def apply(cfg: RunConfig, values: dict[str, str]) -> RunConfig:
    types = {f.name: f.type for f in fields(cfg)}
    for key, raw in values.items():
        attr = key.strip().replace(".", "_").replace("-", "_")
        if attr not in types:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, attr, _coerce(key, str(raw), types[attr]))
    return cfg


def parse_lines(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        apply(cfg, parse_lines(Path(path).read_text()))
    if overrides:
        apply(cfg, overrides)
    return cfg.validate()
