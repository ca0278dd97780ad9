"""Least-squares adversarial, feature-matching and STFT-magnitude losses."""
from __future__ import annotations

import numpy as np

from .. import nn
from ..errors import ContractError
from ..nn import Tensor
from ..signal import StftConfig


def _msq(x: Tensor, target: float) -> Tensor:
    d = x - target
    return nn.mean(d * d)


def adversarial_generator_loss(fake_outputs) -> Tensor:
    """Sum over banks of mean (D(fake) - 1)^2."""
    total = None
    for score, _ in fake_outputs:
        term = _msq(score, 1.0)
        total = term if total is None else total + term
    return total


def discriminator_loss(real_outputs, fake_outputs) -> Tensor:
    """Sum over banks of mean (D(real) - 1)^2 + mean D(fake)^2."""
    if len(real_outputs) != len(fake_outputs):
        raise ContractError("real and fake bank lists differ in length")
    total = None
    for (real, _), (fake, _) in zip(real_outputs, fake_outputs):
        term = _msq(real, 1.0) + _msq(fake, 0.0)
        total = term if total is None else total + term
    return total


def feature_matching_loss(real_feats, fake_feats) -> Tensor:
    """Per bank, sum over layers of mean |real - fake|; averaged over banks.

    Accepts either one bank (a list of layer tensors) or a list of banks.
    """
    if real_feats and not isinstance(real_feats[0], (list, tuple)):
        real_feats, fake_feats = [real_feats], [fake_feats]
    if len(real_feats) != len(fake_feats):
        raise ContractError(f"bank counts differ: {len(real_feats)} vs {len(fake_feats)}")
    total = None
    for rb, fb in zip(real_feats, fake_feats):
        if len(rb) != len(fb):
            raise ContractError(f"layer counts differ: {len(rb)} vs {len(fb)}")
        for r, f in zip(rb, fb):
            r_data = r.data if isinstance(r, Tensor) else np.asarray(r)
            term = nn.mean(nn.tabs(nn.as_tensor(f) - r_data))
            total = term if total is None else total + term
    return total * (1.0 / len(real_feats))


def stft_loss(real, fake, cfg: StftConfig | None = None) -> Tensor:
    """Mean absolute difference of linear STFT magnitudes."""
    fake = nn.as_tensor(fake)
    real_data = real.data if isinstance(real, Tensor) else np.asarray(real, dtype=fake.dtype)
    if real_data.shape != fake.shape:
        raise ContractError(f"length mismatch: real {real_data.shape}, fake {fake.shape}")
    cfg = cfg or StftConfig()
    with nn.no_grad():
        target = nn.stft_magnitude(Tensor(real_data, dtype=fake.dtype), cfg).data
    return nn.mean(nn.tabs(nn.stft_magnitude(fake, cfg) - target))


def generator_loss(fake_outputs, real_outputs, real_wave, fake_wave, lambda_fm: float = 2.0,
                   lambda_stft: float = 45.0, stft_cfg: StftConfig | None = None):
    """Total generator objective and its parts ``(total, adv, fm, stft)``."""
    adv = adversarial_generator_loss(fake_outputs)
    fm = feature_matching_loss([f for _, f in real_outputs], [f for _, f in fake_outputs])
    spec = stft_loss(real_wave, fake_wave, stft_cfg)
    return adv + fm * lambda_fm + spec * lambda_stft, adv, fm, spec
