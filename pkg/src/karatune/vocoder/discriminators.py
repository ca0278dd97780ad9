"""Period-wise (RPD) and Haar-subband scale-wise (RSD) discriminator banks.

Every discriminator returns ``(score, features)``; features are the
activations after each hidden conv plus the final score map.
"""
from __future__ import annotations

import logging

import numpy as np

from .. import nn
from ..errors import ContractError
from ..nn import Tensor

log = logging.getLogger(__name__)


class PeriodDiscriminator(nn.Module):
    """Folds the waveform into ``period`` columns and runs 1-D convs down each column."""

    def __init__(self, period: int, rng: np.random.Generator, channels=(8, 16, 32, 32), kernel: int = 5,
                 stride: int = 3):
        self.period = period
        c_in = (1,) + tuple(channels[:-1])
        strides = [stride] * (len(channels) - 1) + [1]
        pad = (kernel - 1) // 2
        self.convs = [nn.Conv1d(ci, co, kernel, rng, stride=s, padding=pad)
                      for ci, co, s in zip(c_in, channels, strides)]
        self.post = nn.Conv1d(channels[-1], 1, 3, rng, padding=1)

    def fold(self, w: Tensor) -> Tensor:
        """(T,) -> (period, 1, ceil(T / period)) with zero padding at the end."""
        n = w.shape[-1]
        pad = (-n) % self.period
        if pad:
            w = nn.pad_last(w, 0, pad)
        cols = w.reshape((n + pad) // self.period, self.period).T
        return cols.reshape(self.period, 1, (n + pad) // self.period)

    def forward(self, w: Tensor):
        x = self.fold(w)
        feats = []
        for conv in self.convs:
            x = nn.leaky_relu(conv(x))
            feats.append(x)
        x = self.post(x)
        feats.append(x)
        return x, feats


class ScaleDiscriminator(nn.Module):
    """Conv stack applied to the ``level``-deep Haar packet of the waveform."""

    def __init__(self, level: int, rng: np.random.Generator, channels=(16, 32, 32, 32),
                 kernels=(15, 11, 11, 5), strides=(1, 4, 4, 1)):
        self.level = level
        c_in = (2 ** level,) + tuple(channels[:-1])
        self.convs = [nn.Conv1d(ci, co, k, rng, stride=s, padding=(k - 1) // 2)
                      for ci, co, k, s in zip(c_in, channels, kernels, strides)]
        self.post = nn.Conv1d(channels[-1], 1, 3, rng, padding=1)

    def subbands(self, w: Tensor) -> Tensor:
        """(T,) -> (2**level, T / 2**level); T must be divisible by 2**level."""
        x = w.reshape(1, w.shape[-1])
        for _ in range(self.level):
            x = nn.haar_split(x)
        return x

    def forward(self, w: Tensor):
        x = self.subbands(w)
        feats = []
        for conv in self.convs:
            x = nn.leaky_relu(conv(x))
            feats.append(x)
        x = self.post(x)
        feats.append(x)
        return x, feats


class DiscriminatorBanks(nn.Module):
    def __init__(self, rng: np.random.Generator, periods=(2, 3, 5, 7, 11), levels=(0, 1, 2)):
        self.rpd = [PeriodDiscriminator(p, rng) for p in periods]
        self.rsd = [ScaleDiscriminator(m, rng) for m in levels]
        self.min_length = max(max(periods, default=1), 2 ** max(levels, default=0))

    @property
    def banks(self) -> list:
        return self.rpd + self.rsd

    def prepare(self, w) -> Tensor:
        """Zero-pad to the minimum length and to a multiple of the deepest Haar level."""
        w = nn.as_tensor(w)
        if w.ndim != 1:
            raise ContractError(f"discriminators take a 1-D waveform, got {w.shape}")
        n = w.shape[0]
        target = max(n, self.min_length)
        block = 2 ** max((d.level for d in self.rsd), default=0)
        target += (-target) % block
        if target != n:
            if n < self.min_length:
                log.warning("waveform of %d samples zero-padded to %d for the discriminators", n, target)
            w = nn.pad_last(w, 0, target - n)
        return w

    def forward(self, w, banks=None):
        """List of ``(score, features)`` for every bank (or the selected subset)."""
        w = self.prepare(w)
        return [d(w) for d in (banks if banks is not None else self.banks)]


def discriminate(w, discs: DiscriminatorBanks):
    return discs(w)
