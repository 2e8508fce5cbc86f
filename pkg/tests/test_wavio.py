"""16-bit PCM mono WAV reader/writer."""

import struct

import numpy as np
import pytest

from sanvoc.dsp import Waveform
from sanvoc.wavio import WavFormatError, wav_read, wav_write

from conftest import sine


def write_raw_wav(path, channels=1, bits=16, fmt_tag=1, data=b"\x00\x00", sr=8000):
    hdr = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    hdr += b"fmt " + struct.pack("<IHHIIHH", 16, fmt_tag, channels, sr,
                                 sr * channels * bits // 8, channels * bits // 8, bits)
    hdr += b"data" + struct.pack("<I", len(data))
    path.write_bytes(hdr + data)


class TestRoundTrip:
    def test_sine_round_trip_within_one_quantization_step(self, tmp_path):
        wave = sine(1000.0, sr=24000, seconds=0.1, amp=0.8)
        p = tmp_path / "t.wav"
        wav_write(p, wave)
        back = wav_read(p)
        assert back.sample_rate == 24000
        assert len(back) == len(wave)
        assert np.max(np.abs(back.samples - wave.samples)) <= 1.0 / 32768

    def test_full_scale_values_survive_clipping(self, tmp_path):
        p = tmp_path / "t.wav"
        wav_write(p, Waveform(np.array([1.0, -1.0, 2.0, -2.0]), 8000))
        back = wav_read(p)
        assert np.max(back.samples) <= 1.0
        assert np.min(back.samples) >= -1.0

    def test_zero_length_data_chunk_reads_as_empty(self, tmp_path):
        p = tmp_path / "empty.wav"
        write_raw_wav(p, data=b"")
        wave = wav_read(p)
        assert len(wave) == 0
        assert wave.sample_rate == 8000


class TestFormatErrors:
    def test_stereo_rejected_naming_channel_count(self, tmp_path):
        p = tmp_path / "stereo.wav"
        write_raw_wav(p, channels=2, data=b"\x00" * 8)
        with pytest.raises(WavFormatError, match="unsupported channel count 2"):
            wav_read(p)

    def test_wrong_bit_depth_rejected(self, tmp_path):
        p = tmp_path / "b8.wav"
        write_raw_wav(p, bits=8)
        with pytest.raises(WavFormatError, match="bits per sample 8"):
            wav_read(p)

    def test_non_pcm_format_tag_rejected(self, tmp_path):
        p = tmp_path / "float.wav"
        write_raw_wav(p, fmt_tag=3)
        with pytest.raises(WavFormatError, match="format tag 3"):
            wav_read(p)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.wav"
        p.write_bytes(b"JUNK" + b"\x00" * 40)
        with pytest.raises(WavFormatError, match="RIFF"):
            wav_read(p)

    def test_missing_data_chunk_rejected(self, tmp_path):
        p = tmp_path / "nodata.wav"
        body = b"RIFF" + struct.pack("<I", 4 + 24) + b"WAVE"
        body += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 8000, 16000, 2, 16)
        p.write_bytes(body)
        with pytest.raises(WavFormatError, match="data"):
            wav_read(p)
