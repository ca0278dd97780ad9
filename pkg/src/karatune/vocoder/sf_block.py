"""Source-filter block: pitch embedding gated against the spectral envelope."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from ..analysis import MIDI_MAX, MIDI_MIN, PitchCurve, SpectralEnvelope, midi_to_hz
from ..errors import ContractError
from ..nn import Tensor


@dataclass(frozen=True)
class PitchBinning:
    """10-cent bins over MIDI 33..84 plus one trailing unvoiced bin."""

    midi_min: float = MIDI_MIN
    midi_max: float = MIDI_MAX
    cents_per_bin: float = 10.0

    @property
    def n_pitch_bins(self) -> int:
        return int(round((self.midi_max - self.midi_min) * 100 / self.cents_per_bin)) + 1

    @property
    def unvoiced_bin(self) -> int:
        return self.n_pitch_bins

    @property
    def n_rows(self) -> int:
        return self.n_pitch_bins + 1

    def __call__(self, f0_midi, voiced=None) -> np.ndarray:
        f0 = np.asarray(f0_midi, dtype=np.float64)
        steps = np.rint((f0 - self.midi_min) * 100 / self.cents_per_bin)
        ids = np.clip(np.nan_to_num(steps, nan=0.0), 0, self.n_pitch_bins - 1).astype(np.int64)
        unvoiced = ~np.isfinite(f0)
        if voiced is not None:
            unvoiced |= ~np.asarray(voiced, dtype=bool)
        ids[unvoiced] = self.unvoiced_bin
        return ids

    def centre_midi(self, ids) -> np.ndarray:
        ids = np.asarray(ids)
        out = self.midi_min + ids * self.cents_per_bin / 100.0
        return np.where(ids == self.unvoiced_bin, np.nan, out)


def harmonic_comb(binning: PitchBinning, n_env_bins: int, sample_rate: int, floor: float = 0.1,
                  width_bins: float = 1.0) -> np.ndarray:
    """Initial embedding table: Gaussian peaks at each bin's harmonics, flat for unvoiced."""
    hz_per_bin = sample_rate / 2 / (n_env_bins - 1)
    k = np.arange(n_env_bins) * hz_per_bin
    f0 = midi_to_hz(binning.centre_midi(np.arange(binning.n_pitch_bins)))[:, None]
    offset = (k + f0 / 2) % f0 - f0 / 2
    voiced = floor + (1 - floor) * np.exp(-0.5 * (offset / (width_bins * hz_per_bin)) ** 2)
    return np.vstack([voiced, np.full((1, n_env_bins), 0.5)])


class SFResBlock(nn.Module):
    """Dilated residual conv stack over frames, then a per-bin affine read-out.

    Channels are envelope bins. A zero read-out makes the block output zero.
    """

    def __init__(self, channels: int, rng: np.random.Generator, kernel: int = 3, dilations=(1, 2, 1, 2),
                 out_scale: float = 1.0, init_scale: float = 0.1):
        self.convs = [nn.Conv1d(channels, channels, kernel, rng, dilation=d, init_scale=init_scale)
                      for d in dilations]
        self.out_scale = nn.parameter(np.full((channels, 1), out_scale))
        self.out_bias = nn.parameter(np.zeros((channels, 1)))

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = x + conv(nn.leaky_relu(x))
        return x * self.out_scale + self.out_bias


class SFBlock(nn.Module):
    """``r = sigmoid(f1(sp)) * emb(pitch) * sp + f2(sp)``, element-wise over frames x bins."""

    def __init__(self, n_env_bins: int, rng: np.random.Generator, binning: PitchBinning | None = None,
                 sample_rate: int = 32000, kernel: int = 3, dilations=(1, 2, 1, 2)):
        self.binning = binning or PitchBinning()
        self.n_env_bins = n_env_bins
        self.embedding = nn.parameter(harmonic_comb(self.binning, n_env_bins, sample_rate))
        self.f1 = SFResBlock(n_env_bins, rng, kernel, dilations)
        self.f2 = SFResBlock(n_env_bins, rng, kernel, dilations, out_scale=0.1)

    def forward(self, pitch_ids, sp) -> Tensor:
        """``pitch_ids`` (frames,), ``sp`` (frames, bins) already scaled; returns (bins, frames)."""
        sp = nn.as_tensor(sp)
        pitch_ids = np.asarray(pitch_ids, dtype=np.int64)
        if sp.ndim != 2 or sp.shape[0] != len(pitch_ids) or sp.shape[1] != self.n_env_bins:
            raise ContractError(f"pitch ({len(pitch_ids)} frames) and envelope {sp.shape} misaligned "
                                f"(expected {self.n_env_bins} bins)")
        spc = sp.T
        gate = nn.sigmoid(self.f1(spc))
        emb = nn.embedding(self.embedding, pitch_ids).T
        return gate * emb * spc + self.f2(spc)


def sf_block(pitch: PitchCurve, sp: SpectralEnvelope, block: SFBlock, sp_scale: float = 1.0,
             voiced=None) -> Tensor:
    """Frame-aligned wrapper; ``voiced`` (default ``pitch.voiced``) forces unvoiced frames to their bin."""
    if len(pitch) != len(sp):
        raise ContractError(f"pitch has {len(pitch)} frames but envelope has {len(sp)}")
    mask = pitch.voiced if voiced is None else np.asarray(voiced, dtype=bool)
    ids = block.binning(pitch.f0_midi, mask)
    env = (sp.env * sp_scale).astype(nn.get_default_dtype())
    return block(ids, env).T
