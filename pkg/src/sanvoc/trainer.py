"""Alternating adversarial training loop.

Per step: sample a batch of (mel window, waveform segment) pairs, update
the discriminator bank on the negated max objective with the fake batch
detached, then update the generator on the composite loss.  Everything
is single-threaded and deterministic given (config, seed); checkpoints
capture parameters, optimizer moments, RNG state, and a config snapshot,
so a resumed run is bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import objectives
from .autodiff import Tensor, stop_gradient
from .checkpoint import (load_tensors, rng_from_state_array, rng_state_array,
                         save_tensors)
from .config import TrainConfig, config_text, parse_config_text
from .data import synth_dataset
from .nets import DiscriminatorBank, Generator
from .objectives import LossWeights, get_family
from .optim import Adam

LOG_FIELDS = ("step", "d_loss", "g_loss", "mel", "fm", "real_logit_mean", "fake_logit_mean")


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes NaN/Inf; carries the failing step."""

    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class TrainState:
    config: TrainConfig
    generator: Generator
    bank: DiscriminatorBank
    opt_g: Adam
    opt_d: Adam
    rng: np.random.Generator
    step: int = 0
    log_rows: list = field(default_factory=list)


def build_state(cfg: TrainConfig) -> TrainState:
    cfg.validate()
    init_rng = np.random.default_rng([cfg.seed, 1])
    gen = Generator(cfg.n_mels, cfg.hop, cfg.gen_factors, cfg.gen_channels,
                    cfg.activation, init_rng)
    bank = DiscriminatorBank(cfg.disc_scales, cfg.disc_channels, cfg.disc_kernel,
                             cfg.disc_stride, cfg.leaky_slope, init_rng)
    opt_g = Adam(gen.parameters(), cfg.lr, cfg.beta1, cfg.beta2)
    opt_d = Adam(bank.parameters(), cfg.lr, cfg.beta1, cfg.beta2)
    return TrainState(cfg, gen, bank, opt_g, opt_d, np.random.default_rng([cfg.seed, 2]))


def params_digest(params: dict) -> bytes:
    """Order-independent fingerprint of a parameter dict (for invariants)."""
    import hashlib

    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data).tobytes())
    return h.digest()


def save_state(state: TrainState, path) -> None:
    tensors = {}
    for name, p in state.generator.parameters().items():
        tensors[f"gen.{name}"] = p.data
    for name, p in state.bank.parameters().items():
        tensors[f"bank.{name}"] = p.data
    for prefix, opt in (("adam_g", state.opt_g), ("adam_d", state.opt_d)):
        for name, (m, v) in opt.moments.items():
            tensors[f"{prefix}.m.{name}"] = m
            tensors[f"{prefix}.v.{name}"] = v
        tensors[f"{prefix}.t"] = np.asarray([float(opt.t)])
    tensors["meta.step"] = np.asarray([float(state.step)])
    tensors["meta.rng"] = rng_state_array(state.rng)
    cfg_bytes = config_text(state.config).encode("utf-8")
    tensors["meta.config"] = np.frombuffer(cfg_bytes, dtype=np.uint8).astype(np.float64)
    save_tensors(path, tensors)


def load_state(path) -> TrainState:
    tensors = load_tensors(path)
    cfg_txt = bytes(tensors["meta.config"].astype(np.uint8)).decode("utf-8")
    cfg = parse_config_text(cfg_txt)
    state = build_state(cfg)
    for name, p in state.generator.parameters().items():
        p.data = tensors[f"gen.{name}"].reshape(p.data.shape)
    for name, p in state.bank.parameters().items():
        p.data = tensors[f"bank.{name}"].reshape(p.data.shape)
    for prefix, opt in (("adam_g", state.opt_g), ("adam_d", state.opt_d)):
        for name in opt.moments:
            m = tensors[f"{prefix}.m.{name}"].reshape(opt.moments[name][0].shape)
            v = tensors[f"{prefix}.v.{name}"].reshape(opt.moments[name][1].shape)
            opt.moments[name] = (m, v)
        opt.t = int(tensors[f"{prefix}.t"][0])
    state.step = int(tensors["meta.step"][0])
    state.rng = rng_from_state_array(tensors["meta.rng"])
    return state


def _sample_batch(cfg, dataset, rng):
    seg_frames = cfg.segment // cfg.hop
    clip_len = int(cfg.clip_seconds * cfg.sample_rate)
    max_off = (clip_len - cfg.segment) // cfg.hop
    idx = rng.integers(0, len(dataset), size=cfg.batch)
    offs = rng.integers(0, max_off + 1, size=cfg.batch)
    reals = np.stack([dataset[i][0].samples[o * cfg.hop : o * cfg.hop + cfg.segment]
                      for i, o in zip(idx, offs)])
    mels = np.stack([dataset[i][1].frames[:, o : o + seg_frames]
                     for i, o in zip(idx, offs)])
    return reals, mels


def _write_log(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_FIELDS)
        for row in rows:
            writer.writerow([row[k] for k in LOG_FIELDS])


def train(cfg: TrainConfig, out_dir=None, state: TrainState | None = None,
          steps: int | None = None):
    """Run (or continue) training; returns (TrainState, log rows).

    ``out_dir`` receives log.csv, periodic checkpoints plus a sample WAV,
    and a final checkpoint.  On divergence the last checkpoint is kept
    and TrainingDiverged is raised.
    """
    if state is None:
        state = build_state(cfg)
    else:
        cfg = state.config
    total_steps = cfg.steps if steps is None else steps
    family = get_family(cfg.family)
    weights = LossWeights(cfg.fm_weight, cfg.mel_weight)
    mel_params = cfg.mel_params()
    dataset = synth_dataset(cfg, cfg.seed)
    steps_per_epoch = max(1, cfg.num_clips // cfg.batch)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    gen, bank, rng = state.generator, state.bank, state.rng

    def checkpoint(tag):
        if out_dir:
            save_state(state, os.path.join(out_dir, f"checkpoint_{tag}.svck"))
            _write_log(os.path.join(out_dir, "log.csv"), state.log_rows)

    def sample_wav(step):
        if not out_dir:
            return
        from .dsp import Waveform
        from .wavio import wav_write
        mel = dataset[0][1]
        out = gen.forward(Tensor(mel.frames)).data
        wav_write(os.path.join(out_dir, f"sample_{step:06d}.wav"),
                  Waveform(np.clip(out, -1.0, 1.0), cfg.sample_rate))

    while state.step < total_steps:
        step = state.step + 1
        epoch = (step - 1) // steps_per_epoch
        lr = cfg.lr * (cfg.lr_decay ** epoch)
        state.opt_g.lr = lr
        state.opt_d.lr = lr

        reals, mels = _sample_batch(cfg, dataset, rng)
        real_t = Tensor(reals)
        mel_t = Tensor(mels)

        # D-step: fresh fake batch, detached from the generator graph
        fake_det = stop_gradient(gen.forward(mel_t))
        state.opt_d.zero_grad()
        d_loss, r_stats, f_stats = objectives.d_step_loss(
            bank, real_t, fake_det, family, cfg.objective)
        if not np.isfinite(d_loss.data):
            checkpoint("abort")
            raise TrainingDiverged(step, "non-finite discriminator loss")
        d_loss.backward()
        state.opt_d.step()

        # G-step: same batch, graph attached through the fake waveform
        fake = gen.forward(mel_t)
        state.opt_g.zero_grad()
        if cfg.objective == "san":
            adv = objectives.j_san(bank, fake, family)
        else:
            adv = objectives.j_gan(bank, fake, family)
        fm = objectives.feature_matching(bank, real_t, fake)
        mel_l = objectives.mel_loss(real_t, fake, mel_params)
        g_loss = adv + weights.fm * fm + weights.mel * mel_l
        if not np.isfinite(g_loss.data):
            checkpoint("abort")
            raise TrainingDiverged(step, "non-finite generator loss")
        g_loss.backward()
        state.opt_g.step()

        state.step = step
        if step % cfg.log_interval == 0 or step == total_steps:
            omega_norms = [float(np.linalg.norm(d.direction.data / np.linalg.norm(d.direction.data)))
                           for d in bank.discs]
            state.log_rows.append({
                "step": step,
                "d_loss": float(d_loss.data),
                "g_loss": float(g_loss.data),
                "mel": float(mel_l.data),
                "fm": float(fm.data),
                "real_logit_mean": float(np.mean(r_stats)),
                "fake_logit_mean": float(np.mean(f_stats)),
                "omega_norms": omega_norms,
            })
        if cfg.checkpoint_interval and step % cfg.checkpoint_interval == 0 and step != total_steps:
            checkpoint(f"{step:06d}")
            sample_wav(step)

    checkpoint(f"{state.step:06d}")
    sample_wav(state.step)
    return state, state.log_rows
