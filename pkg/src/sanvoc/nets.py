"""Generator and sliced discriminators.

The discriminator is decomposed into a non-linear feature extractor (a
strided conv stack) and a single direction vector ``w``; its logits are
the features projected onto ``omega = w / ||w||``.  Stop-gradient views
of that projection implement the split objectives: ``omega-frozen``
routes gradients to the conv stack only, ``phi-frozen`` routes them to
``w`` only (through the normalization, so they stay tangent to the
sphere).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, stop_gradient
from .dsp import MelSpec

DISC_MODES = ("plain", "omega-frozen", "phi-frozen")


def snake(x, log_alpha):
    """x + sin^2(alpha x) / alpha with alpha = exp(log_alpha) (kept positive)."""
    alpha = ad.exp(log_alpha)
    return x + ad.square(ad.sin(x * alpha)) / alpha


def snakebeta(x, alpha, beta):
    """x + e^-beta sin^2(e^alpha x); alpha, beta are unconstrained (log scale)."""
    return x + ad.exp(-beta) * ad.square(ad.sin(x * ad.exp(alpha)))


def _conv_init(rng, shape, std=0.01):
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


class Generator:
    """Upsampling mel-to-waveform generator with snake-family activations.

    The product of the upsample factors must equal the conditioning hop
    length, so the output has exactly T_frames * hop samples.
    """

    def __init__(self, n_mels, hop, factors=(8, 8, 4), base_channels=32,
                 activation="snake", rng=None):
        if int(np.prod(factors)) != hop:
            raise ValueError(f"upsample factors {tuple(factors)} multiply to "
                             f"{int(np.prod(factors))}, need hop {hop}")
        if any(u % 2 for u in factors):
            raise ValueError(f"upsample factors must be even, got {tuple(factors)}")
        if activation not in ("snake", "snakebeta"):
            raise ValueError(f"unknown activation {activation!r} (snake|snakebeta)")
        rng = rng or np.random.default_rng(0)
        self.n_mels = n_mels
        self.hop = hop
        self.factors = tuple(factors)
        self.activation = activation
        chans = [base_channels]
        for i in range(len(factors)):
            chans.append(max(base_channels // (2 ** (i + 1)), 4))
        self.channels = chans
        p = {}
        p["in.w"] = _conv_init(rng, (chans[0], n_mels, 7))
        p["in.b"] = Tensor(np.zeros((chans[0], 1)), requires_grad=True)
        for i, u in enumerate(factors):
            p[f"up{i}.w"] = _conv_init(rng, (chans[i], chans[i + 1], 2 * u))
            p[f"up{i}.b"] = Tensor(np.zeros((chans[i + 1], 1)), requires_grad=True)
            p[f"up{i}.alpha"] = Tensor(np.zeros((chans[i + 1], 1)), requires_grad=True)
            if activation == "snakebeta":
                p[f"up{i}.beta"] = Tensor(np.zeros((chans[i + 1], 1)), requires_grad=True)
        p["out.w"] = _conv_init(rng, (1, chans[-1], 7))
        p["out.b"] = Tensor(np.zeros((1, 1)), requires_grad=True)
        self.params = p

    def parameters(self):
        return self.params

    def forward(self, mel):
        """mel: Tensor [n_mels, F] or [B, n_mels, F] (or a MelSpec) -> waveform
        Tensor [F * hop] / [B, F * hop] in (-1, 1)."""
        if isinstance(mel, MelSpec):
            mel = Tensor(mel.frames)
        mel = ad.ensure_tensor(mel)
        if mel.data.shape[-2] != self.n_mels:
            raise ValueError(f"mel has {mel.data.shape[-2]} bands, generator expects {self.n_mels}")
        p = self.params
        h = ad.conv1d(mel, p["in.w"], stride=1, padding=3) + p["in.b"]
        for i, u in enumerate(self.factors):
            h = ad.conv_transpose1d(h, p[f"up{i}.w"], stride=u, padding=u // 2) + p[f"up{i}.b"]
            if self.activation == "snake":
                h = snake(h, p[f"up{i}.alpha"])
            else:
                h = snakebeta(h, p[f"up{i}.alpha"], p[f"up{i}.beta"])
        y = ad.conv1d(h, p["out.w"], stride=1, padding=3) + p["out.b"]
        y = ad.tanh(y)
        # drop the singleton channel axis
        shape = y.data.shape[:-2] + (y.data.shape[-1],)
        return ad.reshape(y, shape)

    __call__ = forward


class SlicedDiscriminator:
    """Conv feature extractor plus one direction vector over its channels."""

    def __init__(self, channels=(16, 32, 64, 64), kernel=15, stride=4,
                 leaky_slope=0.1, rng=None):
        if len(channels) < 1 or channels[-1] < 2:
            raise ValueError(f"need final feature width >= 2, got {channels}")
        rng = rng or np.random.default_rng(0)
        self.channels = tuple(channels)
        self.kernel = kernel
        self.stride = stride
        self.leaky_slope = leaky_slope
        p = {}
        ins = (1,) + tuple(channels[:-1])
        for i, (ci, co) in enumerate(zip(ins, channels)):
            p[f"conv{i}.w"] = _conv_init(rng, (co, ci, kernel))
            p[f"conv{i}.b"] = Tensor(np.zeros((co, 1)), requires_grad=True)
        w = rng.normal(size=channels[-1])
        p["w"] = Tensor(w / np.linalg.norm(w), requires_grad=True)
        self.params = p

    def parameters(self):
        return self.params

    def phi_parameters(self):
        """Feature-extractor parameters (everything except the direction)."""
        return {k: v for k, v in self.params.items() if k != "w"}

    @property
    def direction(self):
        return self.params["w"]

    def min_input_length(self):
        # smallest T for which every conv layer output is non-empty
        need = 1
        for _ in self.channels:
            need = (need - 1) * self.stride + self.kernel - 2 * (self.kernel // 2)
        return need

    def features(self, x, detach_params=False):
        """Post-activation feature maps of every conv layer; x: [B, T] or [B, 1, T]."""
        x = ad.ensure_tensor(x)
        if x.data.ndim == 2:
            x = ad.reshape(x, (x.data.shape[0], 1, x.data.shape[1]))
        if x.data.shape[-1] < self.min_input_length():
            raise ValueError(f"input length {x.data.shape[-1]} below receptive "
                             f"minimum {self.min_input_length()}")
        feats = []
        h = x
        for i in range(len(self.channels)):
            w, b = self.params[f"conv{i}.w"], self.params[f"conv{i}.b"]
            if detach_params:
                w, b = stop_gradient(w), stop_gradient(b)
            h = ad.conv1d(h, w, stride=self.stride, padding=self.kernel // 2) + b
            h = ad.leaky_relu(h, self.leaky_slope)
            feats.append(h)
        return feats

    def _omega(self, detach_params=False):
        w = self.params["w"]
        if detach_params:
            w = stop_gradient(w)
        norm = ad.sqrt(ad.tsum(ad.square(w)))
        return w / norm

    def _project(self, h, omega):
        d = h.data.shape[1]
        return ad.tsum(h * ad.reshape(omega, (d, 1)), axis=1)

    def forward(self, x, mode="plain", detach_params=False):
        """Returns (logits [B, T_loc], features).

        plain: nothing detached; omega-frozen: stop-gradient on the
        normalized direction (gradients reach the conv stack only);
        phi-frozen: stop-gradient on the features (gradients reach w only,
        through the normalization).
        """
        if mode not in DISC_MODES:
            raise ValueError(f"unknown mode {mode!r}, expected one of {DISC_MODES}")
        feats = self.features(x, detach_params=detach_params)
        h = feats[-1]
        omega = self._omega(detach_params=detach_params)
        if mode == "omega-frozen":
            logits = self._project(h, stop_gradient(omega))
        elif mode == "phi-frozen":
            logits = self._project(stop_gradient(h), omega)
        else:
            logits = self._project(h, omega)
        return logits, feats

    def forward_san(self, x):
        """One feature pass, both stop-gradient views of the logits."""
        feats = self.features(x)
        h = feats[-1]
        omega = self._omega()
        logits_fun = self._project(h, stop_gradient(omega))
        logits_dir = self._project(stop_gradient(h), omega)
        return logits_fun, logits_dir, feats

    __call__ = forward


class DiscriminatorBank:
    """K sliced discriminators over progressively average-pooled inputs."""

    def __init__(self, num_scales=2, channels=(16, 32, 64, 64), kernel=15,
                 stride=4, leaky_slope=0.1, rng=None):
        if num_scales < 1:
            raise ValueError(f"need at least one scale, got {num_scales}")
        rng = rng or np.random.default_rng(0)
        self.discs = [SlicedDiscriminator(channels, kernel, stride, leaky_slope, rng)
                      for _ in range(num_scales)]

    @property
    def num_scales(self):
        return len(self.discs)

    def parameters(self):
        out = {}
        for k, d in enumerate(self.discs):
            for name, t in d.parameters().items():
                out[f"disc{k}.{name}"] = t
        return out

    def phi_parameters(self):
        out = {}
        for k, d in enumerate(self.discs):
            for name, t in d.phi_parameters().items():
                out[f"disc{k}.{name}"] = t
        return out

    def directions(self):
        return {f"disc{k}.w": d.direction for k, d in enumerate(self.discs)}

    def scale_input(self, x, k):
        x = ad.ensure_tensor(x)
        return ad.avg_pool1d(x, 2 ** k) if k else x

    def forward(self, x, mode="plain", detach_params=False):
        return [d.forward(self.scale_input(x, k), mode, detach_params)
                for k, d in enumerate(self.discs)]

    def forward_san(self, x):
        return [d.forward_san(self.scale_input(x, k)) for k, d in enumerate(self.discs)]

    __call__ = forward
