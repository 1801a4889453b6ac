"""Run configuration: one flat JSON object whose keys mirror ``RunConfig``.

Every key can be overridden on the command line as ``--key value``; values
are parsed as JSON first (so ``--lstm_hidden [64,32]`` and ``--lr 1e-4``
work) and fall back to plain strings.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .breathmask import MASK_MODES
from .errors import ConfigError
from .losses import LossWeights
from .model import VARIANTS, ModelDims
from .synth import RAWBOOST_MODES


@dataclass
class RunConfig:
    # model
    n_layers: int = 4
    dim: int = 64
    n_filters: int = 16
    kernel_size: int = 65
    stride: int = 160
    heads: int = 4
    film_hidden: int = 64
    lstm_hidden: list = field(default_factory=lambda: [64, 32])
    pre_emphasis: float = 0.97
    min_band_hz: float = 50.0
    variant: str = "full"
    # losses
    lam: float = 0.5
    alpha: float = 1.0
    beta: float = 1.0
    tau: float = 0.1
    delta: float = 0.1
    aug_count: int = 3
    w_bona: float = 0.9
    w_spoof: float = 0.1
    momentum: float = 0.9
    # optimizer
    lr: float = 1e-5
    encoder_lr: float = 1e-6
    weight_decay: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 10
    max_epochs: int = 50
    patience: int = 2
    average_last: int = 3
    rawboost: str = "off"
    seed: int = 0
    # data and outputs
    train_dir: str = ""
    eval_dir: str = ""
    out_dir: str = "run"
    mask_mode: str = "normal"
    # metrics
    c_miss: float = 1.0
    c_fa: float = 10.0
    prior: float = 0.05

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("lr", "encoder_lr", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("Adam moment coefficients must lie in [0, 1)")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1 or self.max_epochs < 0 or self.average_last < 1:
            raise ConfigError("batch_size and average_last must be >= 1, max_epochs >= 0")
        if self.mask_mode not in MASK_MODES:
            raise ConfigError(f"mask_mode must be one of {MASK_MODES}, got {self.mask_mode!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {sorted(VARIANTS)}, got {self.variant!r}")
        if self.rawboost != "off" and self.rawboost not in RAWBOOST_MODES:
            raise ConfigError(f"rawboost must be 'off' or one of {RAWBOOST_MODES}, got {self.rawboost!r}")
        self.model_dims()
        self.loss_weights()

    def model_dims(self):
        return ModelDims(
            n_layers=self.n_layers, dim=self.dim, n_filters=self.n_filters,
            kernel_size=self.kernel_size, stride=self.stride, heads=self.heads,
            film_hidden=self.film_hidden, lstm_hidden=tuple(self.lstm_hidden),
            min_band_hz=self.min_band_hz, pre_emphasis=self.pre_emphasis,
        )

    def loss_weights(self):
        return LossWeights(self.lam, self.alpha, self.beta, self.tau, self.delta,
                           self.aug_count, self.w_bona, self.w_spoof, self.momentum)

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return from_dict(d)


KEYS = tuple(f.name for f in fields(RunConfig))
_DEFAULTS = RunConfig()


def _coerce(name, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list, got {value!r}")
        return [int(v) for v in value]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return json.dumps(value)  # e.g. a directory literally named "2"
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string, got {value!r}")
    return value


def from_dict(d):
    unknown = sorted(set(d) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    defaults = _DEFAULTS.to_dict()
    return RunConfig(**{k: _coerce(k, v, defaults[k]) for k, v in d.items()})


def load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return from_dict(data)


def parse_overrides(tokens):
    """``["--lr", "1e-4", "--variant", "no_film"]`` -> ``{"lr": 1e-4, ...}``."""
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"--{key} needs a value")
            raw = tokens[i + 1]
            i += 2
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"unknown config key --{key}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def build_config(path=None, overrides=()):
    d = load_config(path).to_dict() if path else RunConfig().to_dict()
    d.update(parse_overrides(list(overrides)))
    return from_dict(d)


def dump_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
