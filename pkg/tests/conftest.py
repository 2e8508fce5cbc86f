"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from sanvoc.config import TrainConfig, apply_overrides, load_config
from sanvoc.dsp import Waveform

TOY_CFG = "configs/toy.cfg"


def sine(freq, sr=24000, seconds=1.0, amp=0.5, phase=0.0):
    t = np.arange(int(seconds * sr)) / sr
    return Waveform(amp * np.sin(2.0 * np.pi * freq * t + phase), sr)


def harmonic(freq, sr=24000, seconds=1.0, n_harm=4, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    x = sum(np.sin(2.0 * np.pi * h * freq * t + 0.7 * h) / h
            for h in range(1, n_harm + 1))
    return Waveform(amp * x / np.max(np.abs(x)), sr)


@pytest.fixture(scope="session")
def toy_cfg(request) -> TrainConfig:
    path = request.config.rootpath / TOY_CFG
    return load_config(str(path))


@pytest.fixture
def fast_cfg(toy_cfg) -> TrainConfig:
    """Toy config trimmed for single-digit-second unit tests."""
    return apply_overrides(toy_cfg, {
        "train.steps": "5",
        "data.num_clips": "4",
        "train.checkpoint_interval": "0",
    })
