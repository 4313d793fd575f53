"""Plain-text ``key = value`` run configuration.

Every key is optional except ``data_dir`` for MNIST runs (which may also come
from the ``LTC_DATA_DIR`` environment variable). Unset exponent ranges and
the excess-loss strength fall back to the preset selected by ``preset``:

    preset           small | large            (default small)
    dataset          mnist | blobs | moons    (default mnist)
    data_dir         directory with the four MNIST IDX files
    architecture     e.g. F100-F10, 784-100-10, 12C5-P2-64C5-P2-F10
    input_range      e.g. -7..0
    hidden_range     e.g. -3..0
    output_range     e.g. -3..4
    la_variant       multi | single           (hidden layers)
    mode             relu_la | relu
    lambda_excess    float >= 0
    learning_rate, lr_decay, momentum, epochs, batch_size, seed
    train_size, val_size, test_size           (0 = everything available)
    downsample       integer pooling factor for images
    normalization_percentile, rate_steps      (rate-coded baseline)
    backend          float | fixed

Lines starting with ``#`` or ``;`` are comments. An optional ``[run]``
section header is accepted.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from .coding import ExponentRange, LaVariant
from .data import DATA_DIR_ENV
from .errors import ConfigError, DomainError

PRESETS = {
    "small": {"input_range": "-7..0", "hidden_range": "-3..0", "output_range": "-3..4",
              "lambda_excess": 0.1},
    "large": {"input_range": "-7..0", "hidden_range": "-7..-4", "output_range": "-3..4",
              "lambda_excess": 0.01},
}


@dataclass
class RunConfig:
    preset: str = "small"
    dataset: str = "mnist"
    data_dir: Optional[str] = None
    architecture: str = "F100-F10"
    input_range: Optional[str] = None
    hidden_range: Optional[str] = None
    output_range: Optional[str] = None
    la_variant: str = "multi"
    mode: str = "relu_la"
    lambda_excess: Optional[float] = None
    learning_rate: float = 0.05
    lr_decay: float = 1.0
    momentum: float = 0.0
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    train_size: int = 10000
    val_size: int = 0
    test_size: int = 1000
    downsample: int = 1
    normalization_percentile: float = 99.9
    rate_steps: int = 500
    backend: str = "float"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {self.preset!r}")
        for key, value in PRESETS[self.preset].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.dataset not in ("mnist", "blobs", "moons"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.dataset == "mnist" and not self.data_dir:
            env = os.environ.get(DATA_DIR_ENV)
            if not env:
                raise ConfigError(f"data_dir is required for mnist (or set {DATA_DIR_ENV})")
            self.data_dir = env
        try:
            for key in ("input_range", "hidden_range", "output_range"):
                ExponentRange.parse(str(getattr(self, key)))
            LaVariant.parse(self.la_variant)
        except (DomainError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.mode not in ("relu_la", "relu"):
            raise ConfigError(f"mode must be relu_la or relu, got {self.mode!r}")
        if self.backend not in ("float", "fixed"):
            raise ConfigError(f"backend must be float or fixed, got {self.backend!r}")
        if self.lambda_excess < 0 or self.learning_rate <= 0 or not 0 < self.lr_decay <= 1:
            raise ConfigError("need lambda_excess >= 0, learning_rate > 0 and 0 < lr_decay <= 1")
        if min(self.epochs, self.train_size, self.val_size, self.test_size) < 0 or self.batch_size < 1:
            raise ConfigError("sizes and epochs must be nonnegative, batch_size positive")
        if self.downsample < 1 or self.rate_steps < 1:
            raise ConfigError("downsample and rate_steps must be >= 1")
        if not 0 < self.normalization_percentile <= 100:
            raise ConfigError("normalization_percentile must lie in (0, 100]")

    def range(self, which: str) -> ExponentRange:
        return ExponentRange.parse(getattr(self, which + "_range"))

    def to_dict(self):
        return asdict(self)

    def digest(self) -> str:
        """Short hash of every resolved setting except the data location."""
        d = self.to_dict()
        d.pop("data_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


_FIELDS = {f.name: f for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float}


def _cast(name, raw):
    ftype = str(_FIELDS[name].type).replace("Optional[", "").rstrip("]")
    try:
        return _CASTS.get(ftype, str)(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {ftype}") from None


def parse_config(text: str, **overrides) -> RunConfig:
    cp = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    body = text if text.lstrip().startswith("[") else "[run]\n" + text
    try:
        cp.read_string(body)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            key = key.strip().replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _cast(key, raw.strip())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def load_config(path, **overrides) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} not found")
    return parse_config(p.read_text(), **overrides)
