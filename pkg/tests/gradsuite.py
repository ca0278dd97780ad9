"""Finite-difference gradient cases for every layer and loss of the learned models.

Discriminator features of the real waveform enter the generator-side losses
as constants, exactly as in training.

Each case builder takes an rng and returns ``(fn, leaves)``; see
:func:`synth.directional_check`. Shapes are drawn at random per instance.
"""
from __future__ import annotations

import numpy as np

from karatune import nn
from karatune.predictor import FFTBlock, PitchPredictorNet, PredictorConfig, mse_pitch_loss
from karatune.signal import StftConfig
from karatune.vocoder import (DiscriminatorBanks, PeriodDiscriminator, RCGenerator, ScaleDiscriminator,
                              SFBlock, VocoderConfig, discriminator_loss, feature_matching_loss,
                              generator_loss, stft_loss)
from karatune.vocoder.sf_block import PitchBinning

from synth import leaf

TINY_STFT = StftConfig(n_fft=32, hop=8)


def _int(rng, lo, hi):
    return int(rng.integers(lo, hi + 1))


def case_linear(rng):
    layer = nn.Linear(_int(rng, 1, 6), _int(rng, 1, 6), rng)
    x = leaf(rng, (_int(rng, 1, 5), layer.weight.shape[0]))
    return (lambda *_: layer(x)), [x, layer.weight, layer.bias]


def case_embedding(rng):
    layer = nn.Embedding(_int(rng, 2, 9), _int(rng, 1, 5), rng, std=1.0)
    ids = rng.integers(0, layer.weight.shape[0], size=_int(rng, 1, 12))
    return (lambda *_: layer(ids)), [layer.weight]


def case_conv1d(rng):
    c_in, c_out, k = _int(rng, 1, 4), _int(rng, 1, 4), _int(rng, 1, 5)
    stride, dilation = _int(rng, 1, 3), _int(rng, 1, 3)
    pad = _int(rng, 0, 3)
    t = dilation * (k - 1) + 1 + _int(rng, 0, 12)
    x, w, b = leaf(rng, (c_in, t)), leaf(rng, (c_out, c_in, k)), leaf(rng, (c_out,))
    return (lambda *_: nn.conv1d(x, w, b, stride=stride, dilation=dilation, padding=pad)), [x, w, b]


def case_conv1d_same(rng):
    c, k, dilation = _int(rng, 1, 4), _int(rng, 1, 7), _int(rng, 1, 7)
    x, w = leaf(rng, (_int(rng, 1, 3), c, _int(rng, 1, 16))), leaf(rng, (c, c, k))
    return (lambda *_: nn.conv1d(x, w, padding="same", dilation=dilation)), [x, w]


def case_conv_transpose1d(rng):
    stride = int(rng.choice([2, 4, 8]))
    k = 2 * stride
    c_in, c_out = _int(rng, 1, 4), _int(rng, 1, 4)
    x, w, b = leaf(rng, (c_in, _int(rng, 1, 6))), leaf(rng, (c_in, c_out, k)), leaf(rng, (c_out,))
    return (lambda *_: nn.conv_transpose1d(x, w, b, stride=stride, padding=(k - stride) // 2)), [x, w, b]


def case_layer_norm(rng):
    d = _int(rng, 2, 8)
    layer = nn.LayerNorm(d)
    x = leaf(rng, (_int(rng, 1, 5), d))
    g, b = leaf(rng, (d,)), leaf(rng, (d,))
    layer.gamma, layer.beta = g, b
    return (lambda *_: layer(x)), [x, g, b]


def case_attention(rng):
    heads = _int(rng, 1, 3)
    d = heads * _int(rng, 1, 3)
    t = _int(rng, 1, 6)
    q, k, v = leaf(rng, (t, d)), leaf(rng, (_int(rng, 1, 6), d)), None
    v = leaf(rng, (k.shape[0], d))
    return (lambda *_: nn.attention(q, k, v, heads)), [q, k, v]


def case_mha(rng):
    heads = _int(rng, 1, 3)
    layer = nn.MultiHeadAttention(heads * _int(rng, 1, 3), heads, rng)
    x = leaf(rng, (_int(rng, 1, 6), layer.q.weight.shape[0]))
    return (lambda *_: layer(x)), [x] + layer.parameters()


def case_activations(rng):
    x = leaf(rng, (_int(rng, 1, 4), _int(rng, 1, 6)))

    def fn(*_):
        return (nn.leaky_relu(x) * nn.sigmoid(x) + nn.tanh(x) - nn.relu(x) * 0.5
                + nn.softmax(x, axis=-1) + nn.exp(x * 0.3) / (nn.sqrt(x * x + 1.0) + nn.log(x * x + 2.0)))
    return fn, [x]


def case_stft_magnitude(rng):
    x = leaf(rng, (_int(rng, 17, 80),))
    return (lambda *_: nn.stft_magnitude(x, TINY_STFT)), [x]


def case_haar_split(rng):
    x = leaf(rng, (_int(rng, 1, 3), 2 * _int(rng, 1, 8)))
    return (lambda *_: nn.haar_split(nn.haar_split(x) if x.shape[-1] % 4 == 0 else x)), [x]


def case_fft_block(rng):
    heads = _int(rng, 1, 2)
    cfg = PredictorConfig(model_dim=4 * heads, n_heads=heads, ff_dim=_int(rng, 2, 6), conv_kernel=3)
    block = FFTBlock(cfg, rng)
    x = leaf(rng, (_int(rng, 1, 7), cfg.model_dim))
    return (lambda *_: block(x)), [x] + block.parameters()


def case_predictor(rng):
    cfg = PredictorConfig(note_embed_dim=3, env_in_bins=5, env_proj_dim=3, model_dim=4, n_fft_blocks=1,
                          n_heads=2, ff_dim=4)
    model = PitchPredictorNet(cfg, rng)
    model.note_embed.weight.data = rng.normal(size=model.note_embed.weight.shape)
    t = _int(rng, 2, 8)
    notes = rng.integers(0, cfg.note_vocab, size=t)
    env = leaf(rng, (t, cfg.env_in_bins))
    return (lambda *_: model(notes, env)), [env] + model.parameters()


def _tiny_binning():
    return PitchBinning(midi_min=60, midi_max=61, cents_per_bin=25.0)


def case_sf_block(rng):
    n_bins = _int(rng, 2, 5)
    block = SFBlock(n_bins, rng, binning=_tiny_binning(), sample_rate=16)
    t = _int(rng, 1, 9)
    ids = rng.integers(0, block.binning.n_rows, size=t)
    sp = leaf(rng, (t, n_bins))
    return (lambda *_: block(ids, sp)), [sp] + block.parameters()


def toy_vocoder_config(**kw):
    base = dict(n_env_bins=3, upsample_rates=(2, 2), upsample_kernels=(4, 4), resblock_kernels=(3,),
                resblock_dilations=((1, 1), (2, 1)), base_channels=4, min_channels=2, top_k=2)
    base.update(kw)
    return VocoderConfig(**base)


def case_generator(rng):
    cfg = toy_vocoder_config(top_k=_int(rng, 1, 2))
    gen = RCGenerator(cfg, rng)
    for p in gen.parameters():
        p.data = p.data * 0.5
    r = leaf(rng, (cfg.n_env_bins, _int(rng, 1, 4)))
    return (lambda *_: gen(r)), [r] + gen.parameters()


def _tiny_period(rng):
    return PeriodDiscriminator(_int(rng, 2, 3), rng, channels=(2, 3), kernel=3, stride=2)


def _tiny_scale(rng):
    return ScaleDiscriminator(_int(rng, 0, 2), rng, channels=(2, 3), kernels=(3, 3), strides=(1, 2))


def case_period_discriminator(rng):
    disc = _tiny_period(rng)
    w = leaf(rng, (_int(rng, 6, 20),))
    return (lambda *_: nn.concat([f.reshape(f.size) for f in disc(w)[1]])), [w] + disc.parameters()


def case_scale_discriminator(rng):
    disc = _tiny_scale(rng)
    w = leaf(rng, (4 * _int(rng, 2, 6),))
    return (lambda *_: nn.concat([f.reshape(f.size) for f in disc(w)[1]])), [w] + disc.parameters()


def _tiny_banks(rng):
    banks = DiscriminatorBanks(rng, periods=(2, 3), levels=(0, 1))
    banks.rpd = [PeriodDiscriminator(p, rng, channels=(2, 3), kernel=3, stride=2) for p in (2, 3)]
    banks.rsd = [ScaleDiscriminator(m, rng, channels=(2, 3), kernels=(3, 3), strides=(1, 2)) for m in (0, 1)]
    return banks


def case_mse_pitch_loss(rng):
    t = _int(rng, 1, 12)
    pred = leaf(rng, (t,))
    target = rng.normal(size=t)
    mask = rng.random(t) < 0.7
    mask[rng.integers(t)] = True
    return (lambda *_: mse_pitch_loss(pred, target, mask)), [pred]


def case_discriminator_loss(rng):
    banks = _tiny_banks(rng)
    n = 4 * _int(rng, 3, 8)
    real, fake = rng.normal(size=n), leaf(rng, (n,))
    return (lambda *_: discriminator_loss(banks(real), banks(fake))), [fake] + banks.parameters()


def case_feature_matching_loss(rng):
    banks = _tiny_banks(rng)
    n = 4 * _int(rng, 3, 8)
    real, fake = rng.normal(size=n), leaf(rng, (n,))

    with nn.no_grad():
        real_feats = [[f.detach() for f in feats] for _, feats in banks(real)]
    return (lambda *_: feature_matching_loss(real_feats, [f for _, f in banks(fake)])), [fake] + banks.parameters()


def case_stft_loss(rng):
    n = _int(rng, 17, 80)
    real, fake = rng.normal(size=n), leaf(rng, (n,))
    return (lambda *_: stft_loss(real, fake, TINY_STFT)), [fake]


def case_generator_loss(rng):
    banks = _tiny_banks(rng)
    n = 4 * _int(rng, 5, 10)
    real, fake = rng.normal(size=n), leaf(rng, (n,))

    with nn.no_grad():
        real_out = [(s.detach(), [f.detach() for f in feats]) for s, feats in banks(real)]
    return ((lambda *_: generator_loss(banks(fake), real_out, real, fake, 2.0, 45.0, TINY_STFT)[0]),
            [fake] + banks.parameters())


LAYER_CASES = {
    "linear": case_linear, "embedding": case_embedding, "conv1d": case_conv1d,
    "conv1d_same": case_conv1d_same, "conv_transpose1d": case_conv_transpose1d,
    "layer_norm": case_layer_norm, "attention": case_attention, "multi_head_attention": case_mha,
    "activations": case_activations, "stft_magnitude": case_stft_magnitude, "haar_split": case_haar_split,
    "fft_block": case_fft_block, "pitch_predictor": case_predictor, "sf_block": case_sf_block,
    "rcg_generator": case_generator, "period_discriminator": case_period_discriminator,
    "scale_discriminator": case_scale_discriminator,
}

LOSS_CASES = {
    "mse_pitch_loss": case_mse_pitch_loss, "generator_loss": case_generator_loss,
    "discriminator_loss": case_discriminator_loss, "feature_matching_loss": case_feature_matching_loss,
    "stft_loss": case_stft_loss,
}

ALL_CASES = {**LAYER_CASES, **LOSS_CASES}


def run_case(name, n_instances, seed=0):
    """Worst relative error of ``name`` over ``n_instances`` random instances."""
    from synth import directional_check

    rng = np.random.default_rng([seed, sorted(ALL_CASES).index(name)])
    worst = 0.0
    with nn.default_dtype(np.float64):
        for _ in range(n_instances):
            fn, leaves = ALL_CASES[name](rng)
            worst = max(worst, directional_check(fn, leaves, rng))
    return worst
