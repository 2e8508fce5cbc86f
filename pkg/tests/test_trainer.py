"""Dataset synthesis, Adam, checkpoints, and the alternating training loop."""

import numpy as np
import pytest

from sanvoc.autodiff import Tensor, stop_gradient
from sanvoc import objectives
from sanvoc.checkpoint import (CheckpointError, load_tensors, rng_from_state_array,
                               rng_state_array, save_tensors)
from sanvoc.config import apply_overrides
from sanvoc.data import synth_dataset
from sanvoc.metrics import pitch_voicing
from sanvoc.optim import Adam, NanGradientError, adam_step
from sanvoc.trainer import (TrainingDiverged, build_state, load_state,
                            params_digest, save_state, train)


class TestSynthDataset:
    def test_same_seed_is_bit_identical(self, fast_cfg):
        a = synth_dataset(fast_cfg, 3)
        b = synth_dataset(fast_cfg, 3)
        for (wa, ma), (wb, mb) in zip(a, b):
            assert np.array_equal(wa.samples, wb.samples)
            assert np.array_equal(ma.frames, mb.frames)

    def test_different_seeds_differ(self, fast_cfg):
        a = synth_dataset(fast_cfg, 0)
        b = synth_dataset(fast_cfg, 1)
        assert not np.array_equal(a[0][0].samples, b[0][0].samples)

    def test_peak_normalization(self, fast_cfg):
        for wave, _ in synth_dataset(fast_cfg, 0):
            assert np.max(np.abs(wave.samples)) == pytest.approx(0.95, abs=1e-6)

    def test_clean_single_harmonic_has_recoverable_pitch(self, fast_cfg):
        cfg = apply_overrides(fast_cfg, {
            "data.noise_level": "0", "data.min_harmonics": "1",
            "data.max_harmonics": "1", "data.num_clips": "4",
        })
        for wave, _ in synth_dataset(cfg, 0):
            track = pitch_voicing(wave, frame=512, hop=128, f0_min=80, f0_max=400)
            f0s = track.f0[track.voiced]
            assert len(f0s) > 0
            med = np.median(f0s)
            assert cfg.f0_min * 0.97 <= med <= cfg.f0_max * 1.03
            rel = np.abs(f0s - med) / med
            assert np.mean(rel <= 0.03) >= 0.95

    def test_invalid_f0_range_rejected(self, fast_cfg):
        cfg = apply_overrides(fast_cfg, {"data.f0_max": "3000"})
        with pytest.raises(ValueError, match="f0 range"):
            synth_dataset(cfg, 0)

    def test_mel_pairing_matches_waveform(self, fast_cfg):
        from sanvoc.dsp import log_mel
        wave, mel = synth_dataset(fast_cfg, 0)[0]
        assert np.array_equal(mel.frames, log_mel(wave, fast_cfg.mel_params()).frames)


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = {"x": np.array([1.0, 2.0])}
        moments = {"x": (np.zeros(2), np.zeros(2))}
        adam_step(p, {"x": np.zeros(2)}, moments, lr=0.1, t=1)
        np.testing.assert_array_equal(p["x"], [1.0, 2.0])

    def test_first_step_moves_by_learning_rate(self):
        p = {"x": np.array([0.0])}
        moments = {"x": (np.zeros(1), np.zeros(1))}
        adam_step(p, {"x": np.ones(1)}, moments, lr=0.1, t=1)
        assert p["x"][0] == pytest.approx(-0.1, abs=1e-8)

    def test_constant_gradient_update_magnitude_approaches_lr(self):
        p = {"x": np.array([0.0])}
        moments = {"x": (np.zeros(1), np.zeros(1))}
        lr, g = 0.01, np.array([3.0])
        prev = p["x"].copy()
        for t in range(1, 501):
            adam_step(p, {"x": g}, moments, lr=lr, t=t)
            delta = abs(p["x"][0] - prev[0])
            prev = p["x"].copy()
        assert delta / lr == pytest.approx(1.0, rel=1e-2)

    def test_nan_gradient_names_tensor(self):
        p = {"layer.bias": np.zeros(2)}
        moments = {"layer.bias": (np.zeros(2), np.zeros(2))}
        with pytest.raises(NanGradientError, match="layer.bias"):
            adam_step(p, {"layer.bias": np.array([np.nan, 0.0])}, moments, lr=0.1, t=1)

    def test_stateful_wrapper_tracks_missing_grads_as_zero(self):
        x = Tensor(np.ones(3), requires_grad=True)
        opt = Adam({"x": x}, lr=0.1)
        opt.step()  # no backward ran; parameters must not move
        np.testing.assert_array_equal(x.data, np.ones(3))


class TestCheckpointContainer:
    def sample_tensors(self):
        rng = np.random.default_rng(0)
        return {"a.w": rng.normal(size=(3, 4)), "b": rng.normal(size=5).astype(np.float32),
                "scalar": np.asarray(2.5)}

    def test_round_trip_bit_exact(self, tmp_path):
        p = tmp_path / "t.svck"
        tensors = self.sample_tensors()
        save_tensors(p, tensors)
        back = load_tensors(p)
        assert set(back) == set(tensors)
        for k in tensors:
            assert back[k].dtype == np.asarray(tensors[k]).dtype
            assert np.array_equal(back[k], tensors[k])

    def test_save_load_save_is_byte_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.svck", tmp_path / "b.svck"
        save_tensors(p1, self.sample_tensors())
        save_tensors(p2, load_tensors(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_tampered_magic_rejected(self, tmp_path):
        p = tmp_path / "t.svck"
        save_tensors(p, self.sample_tensors())
        raw = bytearray(p.read_bytes())
        raw[:4] = b"XXXX"
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="bad checkpoint header"):
            load_tensors(p)

    def test_truncation_detected_by_checksum(self, tmp_path):
        p = tmp_path / "t.svck"
        save_tensors(p, self.sample_tensors())
        p.write_bytes(p.read_bytes()[:-9])
        with pytest.raises(CheckpointError, match="CRC"):
            load_tensors(p)

    def test_flipped_payload_byte_detected(self, tmp_path):
        p = tmp_path / "t.svck"
        save_tensors(p, self.sample_tensors())
        raw = bytearray(p.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_tensors(p)

    def test_version_mismatch_rejected(self, tmp_path):
        import struct
        import zlib
        p = tmp_path / "t.svck"
        body = b"SVCK" + struct.pack("<I", 99)
        p.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
        with pytest.raises(CheckpointError, match="version"):
            load_tensors(p)

    def test_rng_state_round_trip_continues_sequence(self):
        rng = np.random.default_rng(42)
        rng.normal(size=100)
        arr = rng_state_array(rng)
        clone = rng_from_state_array(arr)
        np.testing.assert_array_equal(rng.normal(size=50), clone.normal(size=50))


class TestTrainingLoop:
    def test_short_run_logs_finite_values(self, fast_cfg, tmp_path):
        state, rows = train(fast_cfg, out_dir=str(tmp_path), steps=10)
        assert state.step == 10
        assert len(rows) == 10
        for row in rows:
            for key in ("d_loss", "g_loss", "mel", "fm", "real_logit_mean", "fake_logit_mean"):
                assert np.isfinite(row[key])
            for norm in row["omega_norms"]:
                assert norm == pytest.approx(1.0, abs=1e-6)

    def test_log_csv_layout(self, fast_cfg, tmp_path):
        import csv
        train(fast_cfg, out_dir=str(tmp_path), steps=4)
        with open(tmp_path / "log.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "d_loss", "g_loss", "mel", "fm",
                           "real_logit_mean", "fake_logit_mean"]
        assert len(rows) == 5
        assert all(len(r) == 7 for r in rows[1:])

    def test_alternation_updates_disjoint_parameter_sets(self, fast_cfg):
        state = build_state(fast_cfg)
        dataset = synth_dataset(fast_cfg, fast_cfg.seed)
        fam = objectives.get_family(fast_cfg.family)
        reals = np.stack([w.samples[: fast_cfg.segment] for w, _ in dataset[:2]])
        mels = np.stack([m.frames[:, : fast_cfg.segment // fast_cfg.hop]
                         for _, m in dataset[:2]])
        real_t, mel_t = Tensor(reals), Tensor(mels)

        theta_before = params_digest(state.generator.parameters())
        fake_det = stop_gradient(state.generator.forward(mel_t))
        d_loss, _, _ = objectives.d_step_loss(state.bank, real_t, fake_det, fam)
        state.opt_d.zero_grad()
        d_loss.backward()
        state.opt_d.step()
        assert params_digest(state.generator.parameters()) == theta_before

        phi_before = params_digest(state.bank.parameters())
        fake = state.generator.forward(mel_t)
        g_loss = objectives.g_total(state.bank, real_t, fake, fam,
                                    objectives.LossWeights(), fast_cfg.mel_params())
        state.opt_g.zero_grad()
        g_loss.backward()
        state.opt_g.step()
        assert params_digest(state.bank.parameters()) == phi_before
        assert params_digest(state.generator.parameters()) != theta_before

    def test_repeated_runs_are_bit_identical(self, fast_cfg, tmp_path):
        s1, r1 = train(fast_cfg, out_dir=str(tmp_path / "a"), steps=8)
        s2, r2 = train(fast_cfg, out_dir=str(tmp_path / "b"), steps=8)
        assert params_digest(s1.generator.parameters()) == params_digest(s2.generator.parameters())
        assert params_digest(s1.bank.parameters()) == params_digest(s2.bank.parameters())
        assert r1 == r2

    def test_resume_matches_uninterrupted_run(self, fast_cfg, tmp_path):
        full, _ = train(fast_cfg, steps=8)

        half, _ = train(fast_cfg, steps=4)
        ckpt = tmp_path / "half.svck"
        save_state(half, ckpt)
        resumed = load_state(ckpt)
        resumed, _ = train(resumed.config, state=resumed, steps=8)

        for name, p in full.generator.parameters().items():
            assert np.array_equal(p.data, resumed.generator.parameters()[name].data)
        for name, p in full.bank.parameters().items():
            assert np.array_equal(p.data, resumed.bank.parameters()[name].data)
        assert np.array_equal(rng_state_array(full.rng), rng_state_array(resumed.rng))

    def test_state_round_trip_preserves_config_and_moments(self, fast_cfg, tmp_path):
        state, _ = train(fast_cfg, steps=3)
        ckpt = tmp_path / "s.svck"
        save_state(state, ckpt)
        back = load_state(ckpt)
        assert back.config == fast_cfg
        assert back.step == 3
        assert back.opt_g.t == state.opt_g.t
        for name, (m, v) in state.opt_g.moments.items():
            assert np.array_equal(m, back.opt_g.moments[name][0])
            assert np.array_equal(v, back.opt_g.moments[name][1])

    def test_divergence_aborts_and_keeps_checkpoint(self, fast_cfg, tmp_path):
        state = build_state(fast_cfg)
        state.generator.params["out.w"].data[:] = np.nan
        with pytest.raises(TrainingDiverged, match="step 1"):
            train(fast_cfg, out_dir=str(tmp_path), state=state, steps=5)
        assert (tmp_path / "checkpoint_abort.svck").exists()

    def test_checkpoint_interval_emits_periodic_files(self, fast_cfg, tmp_path):
        cfg = apply_overrides(fast_cfg, {"train.checkpoint_interval": "2"})
        train(cfg, out_dir=str(tmp_path), steps=5)
        names = sorted(p.name for p in tmp_path.glob("checkpoint_*.svck"))
        assert names == ["checkpoint_000002.svck", "checkpoint_000004.svck",
                         "checkpoint_000005.svck"]
        assert (tmp_path / "sample_000005.wav").exists()
