"""Deterministic DSP stack: Hann window, STFT magnitudes, mel filterbank,
log-mel spectrograms.

Every operation here has two faces: fed a plain ndarray it runs a fast
numpy path, fed an autodiff ``Tensor`` it builds a differentiable graph
(matmul against precomputed DFT bases), so the same code backs both the
mel loss and the offline metrics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MEL_LOG_FLOOR = 1e-5


@dataclass(frozen=True)
class MelParams:
    """Analysis parameters for log-mel spectrograms."""

    sample_rate: int = 24000
    n_fft: int = 1024
    win_length: int = 1024
    hop: int = 256
    n_mels: int = 100
    fmin: float = 0.0
    fmax: float = 12000.0

    def validate(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.n_fft & (self.n_fft - 1) or self.n_fft < 2:
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if self.win_length > self.n_fft:
            raise ValueError(f"win_length {self.win_length} exceeds n_fft {self.n_fft}")
        if self.hop < 1:
            raise ValueError(f"hop must be >= 1, got {self.hop}")
        if not (0.0 <= self.fmin < self.fmax):
            raise ValueError(f"need 0 <= fmin < fmax, got fmin={self.fmin} fmax={self.fmax}")
        if self.fmax > self.sample_rate / 2:
            raise ValueError(f"fmax {self.fmax} exceeds Nyquist {self.sample_rate / 2}")


@dataclass
class Waveform:
    """Time-domain audio. Samples nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.isfinite(self.samples).all():
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)


@dataclass
class MelSpec:
    """Log-mel frame matrix [n_mels x T_frames] with its analysis parameters."""

    frames: np.ndarray
    params: MelParams


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window w[k] = 0.5 * (1 - cos(2 pi k / n))."""
    if n <= 0:
        raise ValueError(f"window length must be positive, got {n}")
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


def _dft_bases(n_fft):
    k = np.arange(n_fft)[:, None]
    b = np.arange(n_fft // 2 + 1)[None, :]
    ang = 2.0 * np.pi * k * b / n_fft
    return np.cos(ang), -np.sin(ang)  # real / imag parts of exp(-i ang)


def stft_magnitude(x, n_fft, hop, win_length=None, center=True, window="hann"):
    """Magnitude STFT, [(n_fft/2 + 1) x T] for 1-d input, [B, bins, T] batched.

    The window (zero-padded to n_fft if shorter) is periodic Hann by
    default; ``window=None`` selects a rectangular window.  With
    ``center=True`` the signal is reflect-padded by n_fft/2 on both sides,
    so T = floor(len(x) / hop) + 1.  Accepts ndarrays (fast rfft path) or
    Tensors (differentiable path).
    """
    win_length = win_length or n_fft
    if win_length > n_fft:
        raise ValueError(f"win_length {win_length} exceeds n_fft {n_fft}")
    if hop < 1:
        raise ValueError(f"hop must be >= 1, got {hop}")
    w = hann_window(win_length) if window == "hann" else np.ones(win_length)
    if win_length < n_fft:
        pad = (n_fft - win_length) // 2
        w = np.pad(w, (pad, n_fft - win_length - pad))

    if isinstance(x, Tensor):
        if x.data.shape[-1] < 1:
            raise ValueError("signal must have at least 1 sample")
        xt = x
        if center:
            xt = ad.pad1d(xt, n_fft // 2, n_fft // 2, mode="reflect")
        frames = ad.frame(xt, n_fft, hop)  # [..., T, n_fft]
        frames = frames * Tensor(w)
        cos_b, sin_b = _dft_bases(n_fft)
        re = ad.matmul(frames, Tensor(cos_b))
        im = ad.matmul(frames, Tensor(sin_b))
        mag = ad.sqrt(ad.square(re) + ad.square(im) + 1e-24)
        # [..., T, bins] -> [..., bins, T]
        axes = tuple(range(mag.data.ndim - 2)) + (mag.data.ndim - 1, mag.data.ndim - 2)
        return _transpose(mag, axes)

    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ValueError("signal must have at least 1 sample")
    if center:
        width = [(0, 0)] * (x.ndim - 1) + [(n_fft // 2, n_fft // 2)]
        x = np.pad(x, width, mode="reflect")
    T = (x.shape[-1] - n_fft) // hop + 1
    idx = hop * np.arange(T)[:, None] + np.arange(n_fft)[None, :]
    frames = x[..., idx] * w
    spec = np.abs(np.fft.rfft(frames, n=n_fft, axis=-1))
    return np.swapaxes(spec, -1, -2)


def _transpose(t: Tensor, axes):
    data = np.transpose(t.data, axes)
    inv = np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inv),)

    return Tensor._from_op(data, (t,), backward, "transpose")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels, n_fft, sample_rate, fmin=0.0, fmax=None):
    """Area-normalized triangular mel filters, [n_mels x (n_fft/2 + 1)]."""
    fmax = sample_rate / 2 if fmax is None else fmax
    if not (0.0 <= fmin < fmax):
        raise ValueError(f"need 0 <= fmin < fmax, got fmin={fmin} fmax={fmax}")
    if fmax > sample_rate / 2:
        raise ValueError(f"fmax {fmax} exceeds Nyquist {sample_rate / 2}")
    n_bins = n_fft // 2 + 1
    bin_freqs = np.arange(n_bins) * sample_rate / n_fft
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (bin_freqs - lo) / max(ctr - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - ctr, 1e-12)
        tri = np.maximum(0.0, np.minimum(up, down))
        fb[m] = tri * 2.0 / (hi - lo)
    empty = np.where(fb.sum(axis=1) == 0.0)[0]
    if empty.size:
        warnings.warn(f"{empty.size} mel filters have no FFT bin support (n_mels too large for n_fft)")
    return fb


def log_mel(x, params: MelParams):
    """log(max(melFB @ |STFT|, floor)).  Ndarray in -> MelSpec; Tensor in -> Tensor."""
    params.validate()
    fb = mel_filterbank(params.n_mels, params.n_fft, params.sample_rate, params.fmin, params.fmax)
    if isinstance(x, Tensor):
        mag = stft_magnitude(x, params.n_fft, params.hop, params.win_length)
        mel = ad.matmul(Tensor(fb), mag) if mag.data.ndim == 2 else ad.matmul(Tensor(fb[None]), mag)
        return ad.log(_clamp_min(mel, MEL_LOG_FLOOR))
    samples = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
    if isinstance(x, Waveform) and x.sample_rate != params.sample_rate:
        raise ValueError(f"waveform sample rate {x.sample_rate} != params sample rate {params.sample_rate}")
    mag = stft_magnitude(samples, params.n_fft, params.hop, params.win_length)
    mel = fb @ mag
    return MelSpec(np.log(np.maximum(mel, MEL_LOG_FLOOR)), params)


def _clamp_min(t: Tensor, floor):
    def backward(g):
        return (g * (t.data > floor),)

    return Tensor._from_op(np.maximum(t.data, floor), (t,), backward, "clamp_min")
