"""Adversarial objectives and auxiliary losses.

An ``RFamily`` packages the scalar functions (R1, R2, R3) of a GAN
variant plus the derivative r3.  The least-squares family is not usable
with the split (SAN) objectives because its R3 is not monotonically
decreasing; soft monotonization replaces each squared term with a
squared softplus, which restores monotonicity while keeping the
least-squares shape for negative arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import dsp
from .autodiff import Tensor, stop_gradient


@dataclass(frozen=True)
class RFamily:
    """The (R1, R2, R3) triple and r3 = R3' for one adversarial variant."""

    name: str
    r1: Callable
    r2: Callable
    r3fn: Callable
    r3deriv: Callable
    san_valid: bool  # true iff r3(z) < 0 for all z


def _one_minus(z):
    return 1.0 - ad.ensure_tensor(z)


_FAMILIES = {}


def _register(fam):
    _FAMILIES[fam.name] = fam
    return fam


LS_GAN = _register(RFamily(
    "ls-gan",
    r1=lambda z: -ad.square(_one_minus(z)),
    r2=lambda z: -ad.square(ad.ensure_tensor(z)),
    r3fn=lambda z: ad.square(_one_minus(z)),
    r3deriv=lambda z: -2.0 * _one_minus(z),
    san_valid=False,
))

LS_SAN = _register(RFamily(
    "ls-san",
    r1=lambda z: -ad.square(ad.softplus(_one_minus(z))),
    r2=lambda z: -ad.square(ad.softplus(ad.ensure_tensor(z))),
    r3fn=lambda z: ad.square(ad.softplus(_one_minus(z))),
    r3deriv=lambda z: -2.0 * ad.softplus(_one_minus(z)) * ad.sigmoid(_one_minus(z)),
    san_valid=True,
))

_HINGE = dict(
    r1=lambda z: -ad.relu(_one_minus(z)),
    r2=lambda z: -ad.relu(1.0 + ad.ensure_tensor(z)),
    r3fn=lambda z: -ad.ensure_tensor(z),
    r3deriv=lambda z: ad.ensure_tensor(z) * 0.0 - 1.0,
)
HINGE = _register(RFamily("hinge", san_valid=True, **_HINGE))
HINGE_SAN = _register(RFamily("hinge-san", san_valid=True, **_HINGE))

_NS = dict(
    r1=lambda z: -ad.softplus(-ad.ensure_tensor(z)),
    r2=lambda z: -ad.softplus(ad.ensure_tensor(z)),
    r3fn=lambda z: ad.softplus(-ad.ensure_tensor(z)),
    r3deriv=lambda z: -ad.sigmoid(-ad.ensure_tensor(z)),
)
NS = _register(RFamily("ns", san_valid=True, **_NS))
NS_SAN = _register(RFamily("ns-san", san_valid=True, **_NS))


def get_family(name: str) -> RFamily:
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}, expected one of {sorted(_FAMILIES)}") from None


def r_eval(family: RFamily, which: str, z):
    """Elementwise evaluation of R1 | R2 | R3 | r3 as a differentiable tensor."""
    fns = {"R1": family.r1, "R2": family.r2, "R3": family.r3fn, "r3": family.r3deriv}
    if which not in fns:
        raise ValueError(f"which must be one of {sorted(fns)}, got {which!r}")
    return fns[which](ad.ensure_tensor(z))


def _require_san(family: RFamily):
    if not family.san_valid:
        raise ValueError(f"family {family.name!r}: R3 not monotonically decreasing")


def _require_batch(x):
    x = ad.ensure_tensor(x)
    if x.data.size == 0:
        raise ValueError("empty batch")
    return x


@dataclass(frozen=True)
class LossWeights:
    """Balance between adversarial, feature-matching, and mel terms."""

    fm: float = 2.0
    mel: float = 45.0

    def __post_init__(self):
        if not (np.isfinite(self.fm) and np.isfinite(self.mel)):
            raise ValueError("loss weights must be finite")
        if self.fm < 0 or self.mel < 0:
            raise ValueError("loss weights must be non-negative")


def _gan_value(bank, real, fake, family):
    total = Tensor(0.0)
    rstats, fstats = [], []
    for (lr, _), (lf, _) in zip(bank(real), bank(fake)):
        total = total + ad.tmean(family.r1(lr)) + ad.tmean(family.r2(lf))
        rstats.append(float(lr.data.mean()))
        fstats.append(float(lf.data.mean()))
    return total, rstats, fstats


def _san_value(bank, real, fake, family):
    total = Tensor(0.0)
    rstats, fstats = [], []
    for (lr_fun, lr_dir, _), (lf_fun, lf_dir, _) in zip(bank.forward_san(real), bank.forward_san(fake)):
        total = (total
                 + ad.tmean(family.r1(lr_fun)) + ad.tmean(family.r2(lf_fun))
                 - ad.tmean(family.r3fn(lr_dir)) + ad.tmean(family.r3fn(lf_dir)))
        rstats.append(float(lr_fun.data.mean()))
        fstats.append(float(lf_fun.data.mean()))
    return total, rstats, fstats


def v_gan(bank, real, fake, family: RFamily):
    """Discriminator maximization objective, summed over scales:
    mean R1(logits(real)) + mean R2(logits(fake))."""
    real, fake = _require_batch(real), _require_batch(fake)
    return _gan_value(bank, real, fake, family)[0]


def j_gan(bank, fake, family: RFamily):
    """Generator minimization objective: mean R3(logits(fake)) per scale."""
    fake = _require_batch(fake)
    total = Tensor(0.0)
    for lf, _ in bank(fake):
        total = total + ad.tmean(family.r3fn(lf))
    return total


def v_san(bank, real, fake, family: RFamily):
    """Split discriminator objective: the R1/R2 terms see the direction
    frozen, the +-R3 terms see the feature stack frozen, so gradients
    partition exactly between the conv parameters and w."""
    _require_san(family)
    real, fake = _require_batch(real), _require_batch(fake)
    return _san_value(bank, real, fake, family)[0]


def d_step_loss(bank, real, fake_detached, family: RFamily, objective="san"):
    """(loss to minimize, per-scale real logit means, fake logit means)."""
    real, fake_detached = _require_batch(real), _require_batch(fake_detached)
    if objective == "san":
        _require_san(family)
        value, rs, fs = _san_value(bank, real, fake_detached, family)
    elif objective == "gan":
        value, rs, fs = _gan_value(bank, real, fake_detached, family)
    else:
        raise ValueError(f"objective must be 'san' or 'gan', got {objective!r}")
    return -value, rs, fs


def j_san(bank, fake, family: RFamily):
    """Generator objective under the split scheme; same form as j_gan with
    nothing detached (the discriminator is simply not stepped)."""
    _require_san(family)
    return j_gan(bank, fake, family)


def feature_matching(bank, real, fake):
    """Sum over scales and layers of mean |feat(fake) - feat(real)|.

    The real-side features are detached and the fake pass runs with the
    discriminator parameters detached, so the gradient reaches the
    generator only.
    """
    real, fake = _require_batch(real), _require_batch(fake)
    outs_r = bank(real, mode="plain", detach_params=True)
    outs_f = bank(fake, mode="plain", detach_params=True)
    total = Tensor(0.0)
    for (_, fr), (_, ff) in zip(outs_r, outs_f):
        if len(fr) != len(ff):
            raise ValueError(f"feature layer count mismatch: {len(fr)} vs {len(ff)}")
        for a, b in zip(fr, ff):
            total = total + ad.tmean(ad.tabs(b - stop_gradient(a)))
    return total


def mel_loss(x_real, x_fake, params: dsp.MelParams):
    """Mean L1 between log-mels of fake and (detached) real waveforms."""
    x_real, x_fake = ad.ensure_tensor(x_real), ad.ensure_tensor(x_fake)
    if x_real.data.shape != x_fake.data.shape:
        raise ValueError(f"waveform length mismatch: {x_real.data.shape} vs {x_fake.data.shape}")
    mr = dsp.log_mel(stop_gradient(x_real), params)
    mf = dsp.log_mel(x_fake, params)
    return ad.tmean(ad.tabs(mf - mr))


def d_total(bank, real, fake_detached, family: RFamily, objective="san"):
    """Discriminator loss to *minimize*: the negated max objective."""
    if objective == "san":
        return -v_san(bank, real, fake_detached, family)
    if objective == "gan":
        return -v_gan(bank, real, fake_detached, family)
    raise ValueError(f"objective must be 'san' or 'gan', got {objective!r}")


def g_total(bank, x_real, x_fake, family: RFamily, weights: LossWeights,
            mel_params: dsp.MelParams, objective="san"):
    """Generator loss: adversarial + fm * feature matching + mel * mel loss."""
    if objective == "san":
        adv = j_san(bank, x_fake, family)
    elif objective == "gan":
        adv = j_gan(bank, x_fake, family)
    else:
        raise ValueError(f"objective must be 'san' or 'gan', got {objective!r}")
    loss = adv
    if weights.fm:
        loss = loss + weights.fm * feature_matching(bank, x_real, x_fake)
    if weights.mel:
        loss = loss + weights.mel * mel_loss(x_real, x_fake, mel_params)
    return loss
