"""Synthetic harmonic dataset: deterministic stand-in for recorded speech.

Each clip is a sum of harmonics with 1/h amplitudes, random phases, a
slow amplitude envelope, and additive noise, peak-normalized to 0.95 and
paired with its log-mel spectrogram.
"""

from __future__ import annotations

import numpy as np

from .config import TrainConfig
from .dsp import MelSpec, Waveform, log_mel

PEAK = 0.95


def synth_dataset(cfg: TrainConfig, seed: int) -> list[tuple[Waveform, MelSpec]]:
    """Deterministic per (config, seed) list of (Waveform, MelSpec) pairs."""
    nyq = cfg.sample_rate / 2
    if not (0.0 < cfg.f0_min < cfg.f0_max <= nyq / 8):
        raise ValueError(f"f0 range ({cfg.f0_min}, {cfg.f0_max}) must lie in (0, {nyq / 8})")
    rng = np.random.default_rng([seed, 0])
    clip_len = int(cfg.clip_seconds * cfg.sample_rate)
    t = np.arange(clip_len) / cfg.sample_rate
    mel_params = cfg.mel_params()
    out = []
    for _ in range(cfg.num_clips):
        f0 = rng.uniform(cfg.f0_min, cfg.f0_max)
        n_harm = int(rng.integers(cfg.min_harmonics, cfg.max_harmonics + 1))
        x = np.zeros(clip_len)
        for h in range(1, n_harm + 1):
            if h * f0 >= 0.95 * nyq:
                break
            phase = rng.uniform(0.0, 2.0 * np.pi)
            x += np.sin(2.0 * np.pi * h * f0 * t + phase) / h
        env_rate = rng.uniform(0.5, 2.0)
        env_phase = rng.uniform(0.0, 2.0 * np.pi)
        x *= 0.3 + 0.7 * (0.5 + 0.5 * np.sin(2.0 * np.pi * env_rate * t + env_phase))
        if cfg.noise_level > 0:
            x += cfg.noise_level * rng.standard_normal(clip_len)
        peak = np.max(np.abs(x))
        if peak > 0:
            x *= PEAK / peak
        wave = Waveform(x, cfg.sample_rate)
        out.append((wave, log_mel(wave, mel_params)))
    return out
