"""Run configuration shared by the command-line entry points.

A config file is a single JSON object whose keys are ``RunConfig`` field
names. Unknown keys and wrongly typed values are rejected with the key name.
"""

from __future__ import annotations

import json
from dataclasses import MISSING, asdict, dataclass, fields

from .diffusion import DenoiserConfig, TrainConfig
from .iprior import IpNetConfig, PretrainConfig, ShiftNetConfig
from .sampler import SamplerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # schedule
    T: int = 1000
    beta_interpretation: str = "cumulative"
    # denoiser and training
    hidden_dim: int = 64
    message_dim: int = 64
    n_layers: int = 3
    cutoff: float = 5.0
    time_dim: int = 8
    coord_scale: float = 1.0
    coord_norm: float = 10.0
    n_rbf: int = 0
    parameterization: str = "eps"
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    clip_norm: float = 10.0
    lr_decay: str = "none"
    repr_dropout: float = 0.0
    repr_noise: float = 0.0
    # interaction prior
    shift_head: str = "equivariant"
    shift_hidden_dim: int = 32
    ipnet_hidden_dim: int = 64
    ipnet_layers: int = 3
    ipnet_attention_dim: int = 32
    ipnet_cutoff: float = 5.0
    pretrain_steps: int = 500
    pretrain_lr: float = 1e-3
    # sampling and evaluation
    n_samples: int = 100
    r0_shift_correction: bool = False
    clip_r0: bool = True
    conserved_threshold: float = 0.4
    # plumbing
    seed: int = 0
    threads: int = 1
    data: str = None
    iprior: str = None
    model: str = None
    out: str = None

    def __post_init__(self):
        if self.beta_interpretation not in ("literal", "cumulative"):
            raise ConfigError(f"beta_interpretation: expected 'literal' or 'cumulative', got {self.beta_interpretation!r}")
        if self.shift_head not in ("equivariant", "literal"):
            raise ConfigError(f"shift_head: expected 'equivariant' or 'literal', got {self.shift_head!r}")
        for name in ("T", "steps", "batch_size", "n_samples", "threads", "n_layers", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if not 0.0 <= self.repr_dropout <= 1.0:
            raise ConfigError("repr_dropout: must lie in [0, 1]")
        if self.repr_noise < 0:
            raise ConfigError("repr_noise: must be >= 0")
        if self.lr_decay not in ("none", "cosine"):
            raise ConfigError(f"lr_decay: expected 'none' or 'cosine', got {self.lr_decay!r}")
        if self.parameterization not in ("eps", "v", "x0"):
            raise ConfigError(f"parameterization: expected 'eps', 'v' or 'x0', got {self.parameterization!r}")

    # builders for the module-level configs

    def denoiser(self):
        return DenoiserConfig(self.hidden_dim, self.message_dim, self.n_layers, self.cutoff,
                              self.time_dim, self.coord_scale, self.coord_norm, self.n_rbf,
                              self.parameterization)

    def shiftnet(self):
        return ShiftNetConfig(self.shift_hidden_dim, self.time_dim, self.cutoff, self.shift_head)

    def ipnet(self):
        return IpNetConfig(self.ipnet_hidden_dim, self.ipnet_hidden_dim, self.ipnet_layers,
                           self.ipnet_attention_dim, self.ipnet_cutoff)

    def pretrain(self):
        return PretrainConfig(self.pretrain_steps, self.pretrain_lr, self.batch_size, self.seed, self.ipnet())

    def train(self):
        return TrainConfig(T=self.T, steps=self.steps, batch_size=self.batch_size, lr=self.lr,
                           clip_norm=self.clip_norm, seed=self.seed,
                           beta_interpretation=self.beta_interpretation, repr_dropout=self.repr_dropout,
                           repr_noise=self.repr_noise, lr_decay=self.lr_decay,
                           denoiser=self.denoiser(), shift=self.shiftnet())

    def sampler(self, n_atoms=None):
        return SamplerConfig(self.n_samples, n_atoms, self.seed, self.r0_shift_correction,
                             self.clip_r0, self.threads)

    def to_dict(self):
        return asdict(self)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _field_type(name):
    f = _FIELDS[name]
    default = f.default if f.default is not MISSING else None
    if default is None:
        return str
    return type(default)


def _coerce(name, value):
    kind = _field_type(name)
    if value is None:
        if _FIELDS[name].default is None:
            return None
        raise ConfigError(f"{name}: null is not allowed")
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def config_from_dict(d, base=None):
    """``base`` (default ``RunConfig()``) updated with the entries of ``d``."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(d) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]}")
    values = (base or RunConfig()).to_dict()
    for k, v in d.items():
        values[k] = _coerce(k, v)
    return RunConfig(**values)


def load_config(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return config_from_dict(d)


def field_help():
    """One ``name=default`` entry per field, for ``--help`` text."""
    return ", ".join(f"{f.name}={f.default!r}" for f in fields(RunConfig))
