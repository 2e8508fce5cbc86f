"""Training configuration and the flat ``key = value`` config file format.

Keys are dotted (``optim.lr = 2e-4``); unknown keys are rejected with the
full list of accepted keys.  CLI flags override file values.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace

import numpy as np

from .dsp import MelParams


class ConfigError(ValueError):
    """Bad config key or value."""


def _int_tuple(s):
    if isinstance(s, (tuple, list)):
        return tuple(int(v) for v in s)
    return tuple(int(v) for v in str(s).split(","))


@dataclass(frozen=True)
class TrainConfig:
    # audio analysis
    sample_rate: int = 24000
    n_fft: int = 1024
    win_length: int = 1024
    hop: int = 256
    n_mels: int = 100
    fmin: float = 0.0
    fmax: float = 12000.0
    # adversarial setup
    family: str = "ls-san"
    objective: str = "san"
    fm_weight: float = 2.0
    mel_weight: float = 45.0
    # generator
    gen_factors: tuple = (8, 8, 4)
    gen_channels: int = 32
    activation: str = "snake"
    # discriminator bank
    disc_scales: int = 2
    disc_channels: tuple = (16, 32, 64, 64)
    disc_kernel: int = 15
    disc_stride: int = 4
    leaky_slope: float = 0.1
    # optimizer
    lr: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    lr_decay: float = 0.999
    # training loop
    steps: int = 5000
    batch: int = 4
    segment: int = 8192
    seed: int = 0
    log_interval: int = 1
    checkpoint_interval: int = 1000
    # synthetic dataset
    num_clips: int = 16
    clip_seconds: float = 1.0
    f0_min: float = 100.0
    f0_max: float = 300.0
    min_harmonics: int = 1
    max_harmonics: int = 8
    noise_level: float = 0.003

    def mel_params(self) -> MelParams:
        return MelParams(self.sample_rate, self.n_fft, self.win_length,
                         self.hop, self.n_mels, self.fmin, self.fmax)

    def validate(self):
        self.mel_params().validate()
        if self.segment % self.hop:
            raise ConfigError(f"train.segment {self.segment} not divisible by hop {self.hop}")
        if self.batch < 1:
            raise ConfigError(f"train.batch must be >= 1, got {self.batch}")
        if self.family not in ("ls-gan", "ls-san", "hinge", "hinge-san", "ns", "ns-san"):
            raise ConfigError(f"gan.family {self.family!r} not recognized")
        if self.objective not in ("san", "gan"):
            raise ConfigError(f"gan.objective must be san or gan, got {self.objective!r}")
        nyq = self.sample_rate / 2
        if not (0.0 < self.f0_min < self.f0_max <= nyq / 8):
            raise ConfigError(f"data f0 range ({self.f0_min}, {self.f0_max}) must lie in (0, {nyq / 8})")
        if not (1 <= self.min_harmonics <= self.max_harmonics):
            raise ConfigError("data harmonic range invalid")
        clip_len = int(self.clip_seconds * self.sample_rate)
        if clip_len < self.segment:
            raise ConfigError(f"clip length {clip_len} shorter than segment {self.segment}")
        if self.num_clips < self.batch:
            raise ConfigError(f"data.num_clips {self.num_clips} smaller than batch {self.batch}")
        if int(np.prod(self.gen_factors)) != self.hop:
            raise ConfigError(f"gen.factors {self.gen_factors} must multiply to hop {self.hop}")


# dotted config key -> (dataclass field, parser)
KEYS = {
    "audio.sample_rate": ("sample_rate", int),
    "audio.n_fft": ("n_fft", int),
    "audio.win_length": ("win_length", int),
    "audio.hop": ("hop", int),
    "audio.n_mels": ("n_mels", int),
    "audio.fmin": ("fmin", float),
    "audio.fmax": ("fmax", float),
    "gan.family": ("family", str),
    "gan.objective": ("objective", str),
    "loss.fm_weight": ("fm_weight", float),
    "loss.mel_weight": ("mel_weight", float),
    "gen.factors": ("gen_factors", _int_tuple),
    "gen.channels": ("gen_channels", int),
    "gen.activation": ("activation", str),
    "disc.scales": ("disc_scales", int),
    "disc.channels": ("disc_channels", _int_tuple),
    "disc.kernel": ("disc_kernel", int),
    "disc.stride": ("disc_stride", int),
    "disc.leaky_slope": ("leaky_slope", float),
    "optim.lr": ("lr", float),
    "optim.beta1": ("beta1", float),
    "optim.beta2": ("beta2", float),
    "optim.lr_decay": ("lr_decay", float),
    "train.steps": ("steps", int),
    "train.batch": ("batch", int),
    "train.segment": ("segment", int),
    "train.seed": ("seed", int),
    "train.log_interval": ("log_interval", int),
    "train.checkpoint_interval": ("checkpoint_interval", int),
    "data.num_clips": ("num_clips", int),
    "data.clip_seconds": ("clip_seconds", float),
    "data.f0_min": ("f0_min", float),
    "data.f0_max": ("f0_max", float),
    "data.min_harmonics": ("min_harmonics", int),
    "data.max_harmonics": ("max_harmonics", int),
    "data.noise_level": ("noise_level", float),
}

_FIELD_TO_KEY = {field: key for key, (field, _) in KEYS.items()}


def apply_overrides(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    """Apply {dotted key: string value} overrides onto a config."""
    updates = {}
    for key, raw in overrides.items():
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}; accepted keys: {', '.join(sorted(KEYS))}")
        field, parse = KEYS[key]
        try:
            updates[field] = parse(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {key}: {raw!r}") from e
    return replace(cfg, **updates)


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        overrides[key] = val
    return apply_overrides(base or TrainConfig(), overrides)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)


def config_text(cfg: TrainConfig) -> str:
    """Render a config as the flat key = value format (lossless round-trip)."""
    vals = asdict(cfg)
    lines = []
    for key in sorted(KEYS):
        field, parse = KEYS[key]
        v = vals[field]
        if parse is _int_tuple:
            v = ",".join(str(i) for i in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"
