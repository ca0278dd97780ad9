"""Resolution-connected generator: transposed-conv upsampling with MRF and top-K output skips."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..errors import ContractError, InvalidInputError
from ..nn import Tensor


@dataclass(frozen=True)
class VocoderConfig:
    n_env_bins: int = 1025
    sample_rate: int = 32000
    upsample_rates: tuple = (8, 4, 4, 2, 2)
    upsample_kernels: tuple = (16, 8, 8, 4, 4)
    resblock_kernels: tuple = (3, 7, 11)
    resblock_dilations: tuple = ((1, 1), (3, 1), (5, 1), (7, 1))
    base_channels: int = 32
    min_channels: int = 4
    top_k: int = 3
    periods: tuple = (2, 3, 5, 7, 11)
    rsd_levels: tuple = (0, 1, 2)
    lambda_fm: float = 2.0
    lambda_stft: float = 45.0
    max_frames: int = 4096
    sf_dilations: tuple = (1, 2, 1, 2)
    sf_kernel: int = 3

    def __post_init__(self):
        if len(self.upsample_rates) != len(self.upsample_kernels):
            raise ContractError("upsample_rates and upsample_kernels differ in length")
        if not 1 <= self.top_k <= len(self.upsample_rates):
            raise ContractError(f"top_k must lie in 1..{len(self.upsample_rates)}")

    @property
    def hop(self) -> int:
        return int(np.prod(self.upsample_rates))

    def stage_channels(self) -> list[int]:
        return [max(self.base_channels // 2 ** (i + 1), self.min_channels)
                for i in range(len(self.upsample_rates))]


class MRFResBlock(nn.Module):
    """Pairs of (dilated, undilated) convs, each pair wrapped in a residual."""

    def __init__(self, channels: int, kernel: int, dilations, rng: np.random.Generator):
        self.convs1 = [nn.Conv1d(channels, channels, kernel, rng, dilation=d1) for d1, _ in dilations]
        self.convs2 = [nn.Conv1d(channels, channels, kernel, rng, dilation=d2) for _, d2 in dilations]

    def forward(self, x: Tensor) -> Tensor:
        for c1, c2 in zip(self.convs1, self.convs2):
            x = x + c2(nn.leaky_relu(c1(nn.leaky_relu(x))))
        return x


class RCGenerator(nn.Module):
    def __init__(self, cfg: VocoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        chans = cfg.stage_channels()
        self.conv_pre = nn.Conv1d(cfg.n_env_bins, cfg.base_channels, 7, rng)
        c_in = [cfg.base_channels] + chans[:-1]
        self.ups = [nn.ConvTranspose1d(ci, co, k, u, rng)
                    for ci, co, k, u in zip(c_in, chans, cfg.upsample_kernels, cfg.upsample_rates)]
        self.mrfs = [[MRFResBlock(co, k, cfg.resblock_dilations, rng) for k in cfg.resblock_kernels]
                     for co in chans]
        first = len(chans) - cfg.top_k
        # Small head init keeps the untrained output inside tanh's linear range.
        self.heads = [nn.Conv1d(chans[i], 1, 7, rng, init_scale=0.1) for i in range(first, len(chans))]

    def forward(self, r: Tensor) -> Tensor:
        """``r`` is (bins, frames); returns (frames * hop,) samples in (-1, 1)."""
        r = nn.as_tensor(r)
        if r.ndim != 2 or r.shape[0] != self.cfg.n_env_bins:
            raise ContractError(f"generator expects ({self.cfg.n_env_bins}, frames), got {r.shape}")
        if r.shape[1] > self.cfg.max_frames:
            raise InvalidInputError(f"{r.shape[1]} frames exceeds max_frames={self.cfg.max_frames}")
        x = self.conv_pre(r)
        n = len(self.ups)
        first = n - self.cfg.top_k
        out = None
        for i, (up, mrf) in enumerate(zip(self.ups, self.mrfs)):
            x = up(nn.leaky_relu(x))
            acc = mrf[0](x)
            for block in mrf[1:]:
                acc = acc + block(x)
            x = acc * (1.0 / len(mrf))
            if i >= first:
                head = self.heads[i - first](nn.leaky_relu(x))
                out = head if out is None else nn.repeat_last(out, self.cfg.upsample_rates[i]) + head
        return nn.tanh(out).reshape(out.shape[-1])


def rcg_generate(r, generator: RCGenerator) -> np.ndarray:
    """Inference helper: frames x bins hidden representation -> samples."""
    r = r.data if isinstance(r, Tensor) else np.asarray(r)
    with nn.no_grad():
        return generator(r.T.astype(nn.get_default_dtype())).data.astype(np.float64)
