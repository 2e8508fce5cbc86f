"""Objective evaluation suite: multi-resolution STFT distance, mel-cepstral
distortion with dynamic time warping, and pitch-based periodicity /
voiced-unvoiced scores, all computed from a self-contained
autocorrelation pitch estimator.

All metrics are deterministic and pure; ``evaluate_pairs`` walks two
directories of WAVs matched by filename and macro-averages per file.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .dsp import Waveform, mel_filterbank, stft_magnitude
from .wavio import wav_read

# (n_fft, hop, win) triples from the multi-resolution STFT-loss convention
DEFAULT_RESOLUTIONS = ((512, 50, 240), (1024, 120, 600), (2048, 240, 1200))
MAG_FLOOR = 1e-7
MCD_CONST = 10.0 * np.sqrt(2.0) / np.log(10.0)


@dataclass
class PitchTrack:
    """Per-frame f0 (0 when unvoiced), voicing flags, and periodicity in [0, 1]."""

    f0: np.ndarray
    voiced: np.ndarray
    periodicity: np.ndarray


@dataclass
class MetricReport:
    per_file: dict = field(default_factory=dict)  # name -> {metric: value}
    skipped: list = field(default_factory=list)
    metrics: tuple = ("mstft", "mcd", "periodicity", "vuv_f1")

    @property
    def file_count(self):
        return len(self.per_file)

    def macro_average(self):
        out = {}
        for m in self.metrics:
            vals = [row[m] for row in self.per_file.values()]
            out[m] = float(np.mean(vals)) if vals else float("nan")
        return out


def _align(x: Waveform, y: Waveform):
    if x.sample_rate != y.sample_rate:
        raise ValueError(f"sample rate mismatch: {x.sample_rate} vs {y.sample_rate}")
    n = min(len(x), len(y))
    return x.samples[:n], y.samples[:n]


def mstft(x: Waveform, y: Waveform, resolutions=DEFAULT_RESOLUTIONS) -> float:
    """Spectral convergence + log-magnitude L1, averaged over resolutions.

    ``x`` is the reference (it supplies the convergence denominator).
    """
    xs, ys = _align(x, y)
    total = 0.0
    for n_fft, hop, win in resolutions:
        X = np.maximum(stft_magnitude(xs, n_fft, hop, win), MAG_FLOOR)
        Y = np.maximum(stft_magnitude(ys, n_fft, hop, win), MAG_FLOOR)
        sc = np.linalg.norm(X - Y) / np.linalg.norm(X)
        mag = np.mean(np.abs(np.log(X) - np.log(Y)))
        total += sc + mag
    return total / len(resolutions)


def _mel_cepstra(samples, sample_rate, n_mfcc, n_fft=1024, hop=256, n_mels=40):
    mag = stft_magnitude(samples, n_fft, hop, n_fft)
    fb = mel_filterbank(n_mels, n_fft, sample_rate, 0.0, sample_rate / 2)
    logmel = np.log(np.maximum(fb @ mag, 1e-10))
    cep = dct(logmel, type=2, axis=0, norm="ortho")
    # drop the gain term (0th coefficient)
    return cep[1:n_mfcc].T  # [frames, n_mfcc - 1]


def dtw_path(cost: np.ndarray):
    """Monotone, contiguous minimal-cost alignment through a cost matrix."""
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row = cost[i - 1]
        for j in range(1, m + 1):
            acc[i, j] = row[j - 1] + min(acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
    path = []
    i, j = n, m
    while i > 0 or j > 0:
        path.append((i - 1, j - 1))
        moves = [(acc[i - 1, j - 1], i - 1, j - 1), (acc[i - 1, j], i - 1, j),
                 (acc[i, j - 1], i, j - 1)]
        _, i, j = min(moves)
    path.reverse()
    return path


def mcd_dtw(x: Waveform, y: Waveform, n_mfcc=13) -> float:
    """Mel-cepstral distortion in dB over the DTW-aligned frame pairs."""
    xs, ys = _align(x, y)
    cx = _mel_cepstra(xs, x.sample_rate, n_mfcc)
    cy = _mel_cepstra(ys, y.sample_rate, n_mfcc)
    if len(cx) < 2 or len(cy) < 2:
        raise ValueError(f"need at least 2 frames, got {len(cx)} and {len(cy)}")
    diff = cx[:, None, :] - cy[None, :, :]
    cost = np.sqrt(np.sum(diff * diff, axis=-1))
    path = dtw_path(cost)
    return MCD_CONST * float(np.mean([cost[i, j] for i, j in path]))


def pitch_voicing(x: Waveform, frame=1024, hop=256, f0_min=60.0, f0_max=500.0,
                  vthresh=0.5) -> PitchTrack:
    """Normalized-autocorrelation pitch track with an RMS voicing gate."""
    if f0_min < 50.0:
        raise ValueError(f"f0_min must be >= 50 Hz, got {f0_min}")
    if f0_max > x.sample_rate / 4:
        raise ValueError(f"f0_max must be <= sample_rate/4, got {f0_max}")
    s = x.samples
    if frame > len(s):
        raise ValueError(f"frame {frame} longer than signal {len(s)}")
    sr = x.sample_rate
    tau_min = max(1, int(np.floor(sr / f0_max)))
    tau_max = min(frame - 2, int(np.ceil(sr / f0_min)))
    n_frames = (len(s) - frame) // hop + 1
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    periodicity = np.zeros(n_frames)
    rms_gate = 10.0 ** (-60.0 / 20.0)
    for n in range(n_frames):
        fr = s[n * hop : n * hop + frame]
        fr = fr - fr.mean()
        rms = np.sqrt(np.mean(fr * fr))
        # full autocorrelation via FFT, normalized per lag
        nfft = int(2 ** np.ceil(np.log2(2 * frame)))
        spec = np.fft.rfft(fr, nfft)
        ac = np.fft.irfft(spec * np.conj(spec), nfft)[: frame]
        csum = np.cumsum(fr * fr)
        e_head = csum[frame - 1 - np.arange(frame)]          # sum x[t]^2, t < frame - tau
        e_tail = csum[-1] - np.concatenate(([0.0], csum[:-1]))  # sum x[t]^2, t >= tau
        r = ac / np.sqrt(e_head * e_tail + 1e-12)
        lag_r = r[tau_min : tau_max + 1]
        if lag_r.size == 0:
            continue
        k = int(np.argmax(lag_r))
        tau = tau_min + k
        peak = float(np.clip(lag_r[k], 0.0, 1.0))
        periodicity[n] = peak
        if peak >= vthresh and rms >= rms_gate:
            # parabolic interpolation around the peak lag
            if 0 < tau < frame - 1:
                a, b, c = r[tau - 1], r[tau], r[tau + 1]
                denom = a - 2 * b + c
                delta = 0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0
                tau = tau + float(np.clip(delta, -1.0, 1.0))
            cand = sr / tau
            if f0_min <= cand <= f0_max:
                voiced[n] = True
                f0[n] = cand
    return PitchTrack(f0, voiced, periodicity)


def periodicity_error(ref: PitchTrack, deg: PitchTrack) -> float:
    """RMSE of the frame-wise periodicity values."""
    if len(ref.periodicity) != len(deg.periodicity):
        raise ValueError(f"frame count mismatch: {len(ref.periodicity)} vs {len(deg.periodicity)}")
    d = ref.periodicity - deg.periodicity
    return float(np.sqrt(np.mean(d * d)))


def vuv_f1(ref: PitchTrack, deg: PitchTrack) -> float:
    """F1 of the degraded track's voiced flags against the reference."""
    if len(ref.voiced) != len(deg.voiced):
        raise ValueError(f"frame count mismatch: {len(ref.voiced)} vs {len(deg.voiced)}")
    tp = np.sum(ref.voiced & deg.voiced)
    fp = np.sum(~ref.voiced & deg.voiced)
    fn = np.sum(ref.voiced & ~deg.voiced)
    if tp == 0:
        return 0.0 if (fp or fn) else 1.0
    return float(2 * tp / (2 * tp + fp + fn))


def evaluate_pair(ref: Waveform, deg: Waveform, metrics=("mstft", "mcd", "periodicity", "vuv_f1")):
    out = {}
    if "mstft" in metrics:
        out["mstft"] = mstft(ref, deg)
    if "mcd" in metrics:
        out["mcd"] = mcd_dtw(ref, deg)
    if "periodicity" in metrics or "vuv_f1" in metrics:
        n = min(len(ref), len(deg))
        rt = pitch_voicing(Waveform(ref.samples[:n], ref.sample_rate))
        dt = pitch_voicing(Waveform(deg.samples[:n], deg.sample_rate))
        if "periodicity" in metrics:
            out["periodicity"] = periodicity_error(rt, dt)
        if "vuv_f1" in metrics:
            out["vuv_f1"] = vuv_f1(rt, dt)
    return out


def evaluate_pairs(ref_dir, deg_dir, metrics=("mstft", "mcd", "periodicity", "vuv_f1"),
                   csv_path=None) -> MetricReport:
    """Evaluate WAV pairs matched by filename; macro-average per file."""
    ref_files = {f for f in os.listdir(ref_dir) if f.lower().endswith(".wav")}
    deg_files = {f for f in os.listdir(deg_dir) if f.lower().endswith(".wav")}
    report = MetricReport(metrics=tuple(metrics))
    for name in sorted(ref_files ^ deg_files):
        warnings.warn(f"unmatched file {name!r}, skipping")
        report.skipped.append(name)
    matched = sorted(ref_files & deg_files)
    for name in matched:
        try:
            ref = wav_read(os.path.join(ref_dir, name))
            deg = wav_read(os.path.join(deg_dir, name))
            report.per_file[name] = evaluate_pair(ref, deg, metrics)
        except (ValueError, OSError) as e:
            warnings.warn(f"skipping {name!r}: {e}")
            report.skipped.append(name)
    if not report.per_file:
        raise ValueError(f"no evaluable WAV pairs between {ref_dir} and {deg_dir}")
    if csv_path:
        write_report_csv(report, csv_path)
    return report


def write_report_csv(report: MetricReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", *report.metrics])
        for name in sorted(report.per_file):
            row = report.per_file[name]
            writer.writerow([name, *[f"{row[m]:.6f}" for m in report.metrics]])
        avg = report.macro_average()
        writer.writerow(["MACRO_AVG", *[f"{avg[m]:.6f}" for m in report.metrics]])
