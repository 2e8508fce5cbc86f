"""Adversarial R-families, split objectives, feature-matching and mel losses."""

import numpy as np
import pytest

from sanvoc import autodiff as ad
from sanvoc import objectives as obj
from sanvoc.autodiff import Tensor
from sanvoc.dsp import MelParams
from sanvoc.nets import DiscriminatorBank
from sanvoc.objectives import (LossWeights, feature_matching, get_family,
                               j_gan, j_san, mel_loss, r_eval, v_gan, v_san)

LN2 = np.log(2.0)


def rval(family, which, z):
    return float(r_eval(get_family(family), which, Tensor(float(z))).data)


class StubBank:
    """Bank stand-in emitting fixed logits (and optional fixed features)."""

    def __init__(self, logit_fn, feats_fn=None, scales=1):
        self.logit_fn = logit_fn
        self.feats_fn = feats_fn or (lambda x: [])
        self.scales = scales

    def forward(self, x, mode="plain", detach_params=False):
        return [(self.logit_fn(x), self.feats_fn(x)) for _ in range(self.scales)]

    def forward_san(self, x):
        return [(self.logit_fn(x), self.logit_fn(x), self.feats_fn(x))
                for _ in range(self.scales)]

    __call__ = forward


class TestRFamilies:
    def test_least_squares_spot_values_and_non_monotone_witness(self):
        assert rval("ls-gan", "R3", 1.0) == 0.0
        assert rval("ls-gan", "R3", 0.0) == 1.0
        assert rval("ls-gan", "R3", 2.0) == 1.0
        assert rval("ls-gan", "R3", 2.0) > rval("ls-gan", "R3", 1.0)

    def test_softened_family_spot_values(self):
        assert rval("ls-san", "R3", 1.0) == pytest.approx(LN2 ** 2, abs=1e-9)
        assert rval("ls-san", "r3", 1.0) == pytest.approx(-LN2, abs=1e-9)
        assert rval("ls-san", "R3", 0.0) == pytest.approx(np.log1p(np.e) ** 2, abs=1e-9)
        assert rval("ls-san", "R3", 0.0) == pytest.approx(1.724657, abs=1e-6)

    def test_softened_r3_is_strictly_decreasing_with_negative_slope(self):
        z = np.linspace(-50.0, 50.0, 10001)
        fam = get_family("ls-san")
        slope = r_eval(fam, "r3", Tensor(z)).data
        vals = r_eval(fam, "R3", Tensor(z)).data
        assert np.all(slope < 0.0)
        assert np.all(np.diff(vals) < 0.0)

    def test_softened_family_keeps_least_squares_shape_for_negative_arguments(self):
        fam_soft, fam_ls = get_family("ls-san"), get_family("ls-gan")
        ratios = []
        for z in (-2.0, -5.0, -10.0, -20.0):
            soft = float(r_eval(fam_soft, "R3", Tensor(z)).data)
            hard = float(r_eval(fam_ls, "R3", Tensor(z)).data)
            ratios.append(abs(soft / hard - 1.0))
        assert all(a > b for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] < 1e-8

    def test_alternate_families_have_negative_r3_slope(self):
        z = Tensor(np.linspace(-10, 10, 101))
        for name in ("hinge", "hinge-san", "ns", "ns-san"):
            fam = get_family(name)
            assert fam.san_valid
            assert np.all(r_eval(fam, "r3", z).data < 0.0)

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError, match="unknown family"):
            get_family("wgan")

    def test_r3_derivative_matches_finite_differences(self):
        z = np.linspace(-4, 4, 41)
        eps = 1e-6
        for name in ("ls-san", "ns"):
            fam = get_family(name)
            num = (r_eval(fam, "R3", Tensor(z + eps)).data
                   - r_eval(fam, "R3", Tensor(z - eps)).data) / (2 * eps)
            np.testing.assert_allclose(r_eval(fam, "r3", Tensor(z)).data, num, atol=1e-8)


class TestGanObjectives:
    def test_perfect_discriminator_fixed_point(self):
        bank = StubBank(lambda x: ad.ensure_tensor(x))
        v = v_gan(bank, Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 3))),
                  get_family("ls-gan"))
        assert float(v.data) == 0.0

    def test_uninformative_logits_value(self):
        bank = StubBank(lambda x: ad.ensure_tensor(x), scales=2)
        v = v_gan(bank, Tensor(np.full((2, 3), 0.5)), Tensor(np.full((2, 3), 0.5)),
                  get_family("ls-gan"))
        assert float(v.data) == pytest.approx(-0.5 * 2, abs=1e-12)

    def test_generator_objective_at_unit_logits(self):
        bank = StubBank(lambda x: ad.ensure_tensor(x))
        fake = Tensor(np.ones((2, 3)))
        assert float(j_gan(bank, fake, get_family("ls-gan")).data) == 0.0
        assert float(j_gan(bank, fake, get_family("ls-san")).data) == pytest.approx(
            LN2 ** 2, abs=1e-9)

    def test_generator_objective_decreases_as_logits_grow(self):
        bank = StubBank(lambda x: ad.ensure_tensor(x))
        fam = get_family("ls-san")
        vals = [float(j_gan(bank, Tensor(np.full((1, 4), z)), fam).data)
                for z in np.linspace(-3, 3, 13)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_empty_batch_rejected(self):
        bank = StubBank(lambda x: ad.ensure_tensor(x))
        with pytest.raises(ValueError, match="empty"):
            j_gan(bank, Tensor(np.zeros((0, 4))), get_family("ls-san"))


def tiny_bank(seed=0):
    return DiscriminatorBank(2, (4, 6), 5, 2, rng=np.random.default_rng(seed))


def tiny_batches(seed=1, batch=2, length=64):
    rng = np.random.default_rng(seed)
    return (Tensor(rng.normal(size=(batch, length))),
            Tensor(rng.normal(size=(batch, length)), requires_grad=True))


class TestSplitObjective:
    def test_value_transparency(self):
        bank = tiny_bank()
        real, fake = tiny_batches()
        fam = get_family("ls-san")
        split = v_san(bank, real, fake, fam)
        plain = Tensor(0.0)
        for (lr, _), (lf, _) in zip(bank(real), bank(fake)):
            plain = (plain + ad.tmean(fam.r1(lr)) + ad.tmean(fam.r2(lf))
                     - ad.tmean(fam.r3fn(lr)) + ad.tmean(fam.r3fn(lf)))
        assert float(split.data) == pytest.approx(float(plain.data), abs=1e-13)

    def test_gradient_partition_is_exact(self):
        fam = get_family("ls-san")
        real, fake = tiny_batches()

        bank = tiny_bank()
        v_san(bank, real, fake, fam).backward()
        full_phi = {k: p.grad.copy() for k, p in bank.phi_parameters().items()}
        full_w = {k: p.grad.copy() for k, p in bank.directions().items()}

        # R1 + R2 terms alone (direction frozen)
        bank_a = tiny_bank()
        ra = Tensor(0.0)
        for lr, _ in bank_a(real, mode="omega-frozen"):
            ra = ra + ad.tmean(fam.r1(lr))
        for lf, _ in bank_a(fake, mode="omega-frozen"):
            ra = ra + ad.tmean(fam.r2(lf))
        ra.backward()
        for k, p in bank_a.phi_parameters().items():
            assert np.array_equal(full_phi[k], p.grad)
        assert all(p.grad is None for p in bank_a.directions().values())

        # R3 terms alone (features frozen)
        bank_b = tiny_bank()
        rb = Tensor(0.0)
        for lr, _ in bank_b(real, mode="phi-frozen"):
            rb = rb - ad.tmean(fam.r3fn(lr))
        for lf, _ in bank_b(fake, mode="phi-frozen"):
            rb = rb + ad.tmean(fam.r3fn(lf))
        rb.backward()
        for k, p in bank_b.directions().items():
            assert np.array_equal(full_w[k], p.grad)
        assert all(p.grad is None for p in bank_b.phi_parameters().values())

    def test_non_monotone_family_rejected(self):
        bank = tiny_bank()
        real, fake = tiny_batches()
        with pytest.raises(ValueError, match="R3 not monotonically decreasing"):
            v_san(bank, real, fake, get_family("ls-gan"))
        with pytest.raises(ValueError, match="R3 not monotonically decreasing"):
            j_san(bank, fake, get_family("ls-gan"))

    def test_value_invariant_to_direction_scale(self):
        fam = get_family("ls-san")
        real, fake = tiny_batches()
        base = float(v_san(tiny_bank(), real, fake, fam).data)
        for c in (0.1, 10.0):
            bank = tiny_bank()
            for p in bank.directions().values():
                p.data = p.data * c
            assert float(v_san(bank, real, fake, fam).data) == pytest.approx(
                base, rel=1e-12)


class TestFeatureMatching:
    def test_identical_inputs_give_zero(self):
        bank = tiny_bank()
        real, _ = tiny_batches()
        assert float(feature_matching(bank, real, real).data) == 0.0

    def test_constant_feature_offset_counts_layers_times_scales(self):
        feats = lambda x: [ad.ensure_tensor(x) + 0.0 for _ in range(3)]
        bank = StubBank(lambda x: ad.ensure_tensor(x), feats_fn=feats, scales=2)
        real = Tensor(np.zeros((2, 4)))
        fake = Tensor(np.ones((2, 4)))
        assert float(feature_matching(bank, real, fake).data) == pytest.approx(
            3 * 2 * 1.0, abs=1e-12)

    def test_gradient_reaches_generator_side_only(self):
        bank = tiny_bank()
        real, fake = tiny_batches()
        feature_matching(bank, real, fake).backward()
        assert fake.grad is not None and np.any(fake.grad != 0.0)
        for p in bank.parameters().values():
            assert p.grad is None or not np.any(p.grad)

    def test_layer_count_mismatch_rejected(self):
        calls = []

        def feats(x):
            calls.append(x)
            return [ad.ensure_tensor(x)] * (1 if len(calls) == 1 else 2)

        bank = StubBank(lambda x: ad.ensure_tensor(x), feats_fn=feats)
        with pytest.raises(ValueError, match="layer count"):
            feature_matching(bank, Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 4))))


TOY_MEL = MelParams(8000, 256, 256, 64, 32, 0.0, 4000.0)


class TestMelLoss:
    def test_identical_waveforms_give_zero(self):
        x = Tensor(0.3 * np.random.default_rng(0).normal(size=(2, 2048)))
        assert float(mel_loss(x, x, TOY_MEL).data) == 0.0

    def test_amplitude_doubling_gives_log2(self):
        # broadband noise keeps every mel band above the clamp floor
        x = Tensor(0.25 * np.random.default_rng(1).normal(size=(1, 2048)))
        y = Tensor(2.0 * x.data)
        assert float(mel_loss(x, y, TOY_MEL).data) == pytest.approx(LN2, abs=1e-10)

    def test_silence_vs_tone_strictly_positive(self):
        t = np.arange(2048) / 8000
        tone = Tensor(0.5 * np.sin(2 * np.pi * 220 * t)[None])
        silence = Tensor(np.zeros((1, 2048)))
        val = float(mel_loss(tone, silence, TOY_MEL).data)
        assert np.isfinite(val) and val > 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length mismatch"):
            mel_loss(Tensor(np.zeros((1, 256))), Tensor(np.zeros((1, 512))), TOY_MEL)

    def test_gradient_flows_to_generated_side_only(self):
        rng = np.random.default_rng(2)
        real = Tensor(0.3 * rng.normal(size=(1, 256)), requires_grad=True)
        fake = Tensor(0.3 * rng.normal(size=(1, 256)), requires_grad=True)
        mel_loss(real, fake, MelParams(8000, 64, 64, 16, 8, 0.0, 4000.0)).backward()
        assert real.grad is None
        assert fake.grad is not None and np.any(fake.grad)


class TestCompositeLosses:
    def test_weights_validated(self):
        with pytest.raises(ValueError):
            LossWeights(fm=-1.0)
        with pytest.raises(ValueError):
            LossWeights(mel=float("nan"))

    def test_generator_total_is_weighted_sum_of_components(self):
        bank = tiny_bank()
        rng = np.random.default_rng(3)
        real = Tensor(0.3 * rng.normal(size=(2, 2048)))
        fake = Tensor(0.3 * rng.normal(size=(2, 2048)))
        fam = get_family("ls-san")
        weights = LossWeights(fm=2.0, mel=45.0)
        total = obj.g_total(bank, real, fake, fam, weights, TOY_MEL)
        expect = (float(j_san(bank, fake, fam).data)
                  + 2.0 * float(feature_matching(bank, real, fake).data)
                  + 45.0 * float(mel_loss(real, fake, TOY_MEL).data))
        assert float(total.data) == pytest.approx(expect, rel=1e-12)

    def test_zero_weights_reduce_to_adversarial_term(self):
        bank = tiny_bank()
        real, fake = tiny_batches()
        fam = get_family("ls-san")
        total = obj.g_total(bank, real, fake, fam, LossWeights(0.0, 0.0), TOY_MEL)
        assert float(total.data) == float(j_san(bank, fake, fam).data)

    def test_discriminator_total_negates_value(self):
        bank = tiny_bank()
        real, fake = tiny_batches()
        fam = get_family("ls-san")
        assert float(obj.d_total(bank, real, fake, fam).data) == pytest.approx(
            -float(v_san(bank, real, fake, fam).data), rel=1e-12)

    def test_one_alternating_step_stays_finite(self):
        from sanvoc.optim import Adam
        bank = tiny_bank()
        rng = np.random.default_rng(4)
        real = Tensor(0.3 * rng.normal(size=(2, 2048)))
        fake_det = Tensor(0.3 * rng.normal(size=(2, 2048)))
        fam = get_family("ls-san")
        opt_d = Adam(bank.parameters(), 2e-4)
        d_loss = obj.d_total(bank, real, fake_det, fam)
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()
        fake = Tensor(fake_det.data.copy(), requires_grad=True)
        g_loss = obj.g_total(bank, real, fake, fam, LossWeights(), TOY_MEL)
        g_loss.backward()
        assert np.isfinite(float(d_loss.data)) and np.isfinite(float(g_loss.data))
