"""RIFF/WAVE reader and writer for 16-bit PCM mono files.

Parsed by hand rather than via the stdlib ``wave`` module so that format
errors can name the offending header field, and so zero-length data
chunks round-trip without complaint.
"""

from __future__ import annotations

import struct

import numpy as np

from .dsp import Waveform


class WavFormatError(ValueError):
    """Raised for files that are not 16-bit PCM mono RIFF/WAVE."""


def wav_read(path) -> Waveform:
    """Read a PCM 16-bit mono WAV; samples scaled to [-1, 1] by 1/32768."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != b"RIFF":
        raise WavFormatError(f"{path}: bad chunk id, expected 'RIFF'")
    if raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: bad format field, expected 'WAVE'")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f"{path}: missing 'fmt ' chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing 'data' chunk")
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: truncated 'fmt ' chunk")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format != 1:
        raise WavFormatError(f"{path}: unsupported audio format tag {audio_format} (PCM=1 required)")
    if channels != 1:
        raise WavFormatError(f"{path}: unsupported channel count {channels}")
    if bits != 16:
        raise WavFormatError(f"{path}: unsupported bits per sample {bits}")
    pcm = np.frombuffer(data[: len(data) - (len(data) % 2)], dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, sample_rate)


def wav_write(path, wave: Waveform) -> None:
    """Write a PCM 16-bit mono WAV (little-endian), clipping to [-1, 1]."""
    x = np.clip(wave.samples, -1.0, 1.0)
    # symmetric 1/32768 scaling keeps the round-trip error within one LSB
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    hdr = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    hdr += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, wave.sample_rate,
                                 wave.sample_rate * 2, 2, 16)
    hdr += b"data" + struct.pack("<I", len(data))
    with open(path, "wb") as fh:
        fh.write(hdr + data)
