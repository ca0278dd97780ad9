"""Signal primitives: waveform container, STFT/ISTFT, Haar DWT and WAV I/O.

Every function here is a pure function of its arguments.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from math import gcd
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window, resample_poly

from ._validation import check_signal
from .errors import ConfigError, FormatError, InvalidInputError

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 32000


@dataclass
class Waveform:
    """Mono audio plus its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidInputError(f"waveform must be mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def clip_waveform(w: Waveform) -> tuple[Waveform, int]:
    """Clip to [-1, 1]; returns the clipped waveform and the number of clipped samples."""
    n_clipped = int(np.count_nonzero(np.abs(w.samples) > 1.0))
    if n_clipped:
        logger.warning("clipped %d samples to [-1, 1]", n_clipped)
    return Waveform(np.clip(w.samples, -1.0, 1.0), w.sample_rate), n_clipped


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 2048
    hop: int = 512

    def __post_init__(self):
        if self.n_fft <= 0 or self.hop <= 0:
            raise ConfigError("n_fft and hop must be positive")
        if self.n_fft % self.hop:
            raise ConfigError(f"hop {self.hop} must divide n_fft {self.n_fft}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return get_window("hann", self.n_fft, fftbins=True)

    def n_frames(self, n_samples: int) -> int:
        return -(-n_samples // self.hop)


@dataclass
class ComplexSpectrogram:
    values: np.ndarray  # frames x bins, complex
    config: StftConfig = field(default_factory=StftConfig)
    sample_rate: int = DEFAULT_SAMPLE_RATE

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def frame_indices(n_samples: int, cfg: StftConfig) -> np.ndarray:
    """Indices into the *unpadded* signal for every centred frame, reflect-padded.

    Row ``t`` holds the ``n_fft`` sample positions of the frame centred on ``t * hop``.
    """
    half = cfg.n_fft // 2
    starts = np.arange(cfg.n_frames(n_samples)) * cfg.hop - half
    idx = starts[:, None] + np.arange(cfg.n_fft)[None, :]
    return _reflect_index(idx, n_samples)


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    # numpy "reflect" convention (edge sample not repeated), iterated for long pads
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def stft(w: Waveform | np.ndarray, cfg: StftConfig | None = None) -> ComplexSpectrogram:
    """Centred, Hann-windowed STFT; frame ``t`` is centred on sample ``t * hop``."""
    cfg = cfg or StftConfig()
    rate = w.sample_rate if isinstance(w, Waveform) else DEFAULT_SAMPLE_RATE
    x = check_signal(w.samples if isinstance(w, Waveform) else w, "waveform")
    frames = x[frame_indices(x.size, cfg)] * cfg.window
    return ComplexSpectrogram(np.fft.rfft(frames, axis=-1), cfg, rate)


def check_cola(cfg: StftConfig, tol: float = 1e-6) -> None:
    """Raise ConfigError unless the squared window overlap-adds to a constant."""
    w2 = cfg.window ** 2
    acc = np.zeros(cfg.hop)
    for start in range(0, cfg.n_fft, cfg.hop):
        seg = w2[start:start + cfg.hop]
        acc[: seg.size] += seg
    if acc.min() <= 0 or np.ptp(acc) > tol * acc.mean():
        raise ConfigError(f"Hann window with n_fft={cfg.n_fft}, hop={cfg.hop} is not COLA")


def istft(s: ComplexSpectrogram) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`; output length is ``frames * hop``."""
    cfg = s.config
    check_cola(cfg)
    n_frames = s.n_frames
    half = cfg.n_fft // 2
    win = cfg.window
    frames = np.fft.irfft(s.values, n=cfg.n_fft, axis=-1) * win
    total = n_frames * cfg.hop
    out = np.zeros(total + cfg.n_fft)
    norm = np.zeros(total + cfg.n_fft)
    # buffer index 0 corresponds to signal sample -half
    for t in range(n_frames):
        a = t * cfg.hop
        out[a:a + cfg.n_fft] += frames[t]
        norm[a:a + cfg.n_fft] += win ** 2
    out = out[half:half + total]
    norm = norm[half:half + total]
    y = np.where(norm > 1e-10, out / np.maximum(norm, 1e-10), 0.0)
    return Waveform(y, s.sample_rate)


class HaarBands:
    """Approximation/detail pair from one Haar level; unpacks as ``approx, detail``."""

    def __init__(self, approx: np.ndarray, detail: np.ndarray, padded: bool):
        self.approx = approx
        self.detail = detail
        self.padded = padded

    def __iter__(self):
        yield self.approx
        yield self.detail


_SQRT2 = np.sqrt(2.0)


def haar_dwt(w) -> HaarBands:
    """Single-level orthonormal Haar transform along the last axis."""
    x = np.asarray(w.samples if isinstance(w, Waveform) else w, dtype=np.float64)
    if x.shape[-1] == 0:
        raise InvalidInputError("cannot transform an empty signal")
    padded = x.shape[-1] % 2 == 1
    if padded:
        x = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
    even, odd = x[..., 0::2], x[..., 1::2]
    return HaarBands((even + odd) / _SQRT2, (even - odd) / _SQRT2, padded)


def haar_idwt(approx, detail, padded: bool = False) -> np.ndarray:
    a = np.asarray(approx, dtype=np.float64)
    d = np.asarray(detail, dtype=np.float64)
    out = np.empty(a.shape[:-1] + (2 * a.shape[-1],))
    out[..., 0::2] = (a + d) / _SQRT2
    out[..., 1::2] = (a - d) / _SQRT2
    return out[..., :-1] if padded else out


def haar_packet(w, level: int) -> np.ndarray:
    """Full ``level``-deep Haar packet: returns ``2**level`` subbands as rows.

    The input length must be divisible by ``2**level``.
    """
    x = np.asarray(w.samples if isinstance(w, Waveform) else w, dtype=np.float64)[None, :]
    if x.shape[-1] % (1 << level):
        raise InvalidInputError(f"length {x.shape[-1]} not divisible by 2**{level}")
    for _ in range(level):
        a, d = haar_dwt(x)
        x = np.stack([a, d], axis=1).reshape(-1, a.shape[-1])
    return x


# --- WAV I/O -----------------------------------------------------------------

_CODEC_NAMES = {1: "PCM", 2: "MS-ADPCM", 3: "IEEE-float", 6: "A-law", 7: "mu-law",
                0x11: "IMA-ADPCM", 0x55: "MP3", 0xFFFE: "extensible"}


def _wav_codec(path: Path) -> tuple[int, int]:
    """Return (format tag, bits per sample) from the RIFF fmt chunk."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
            raise FormatError(f"{path}: not a RIFF/WAVE file")
        while True:
            chunk = fh.read(8)
            if len(chunk) < 8:
                raise FormatError(f"{path}: no fmt chunk")
            cid, size = struct.unpack("<4sI", chunk)
            body = fh.read(size + (size & 1))
            if cid == b"fmt ":
                tag, _, _, _, _, bits = struct.unpack("<HHIIHH", body[:16])
                if tag == 0xFFFE and len(body) >= 26:
                    tag = struct.unpack("<H", body[24:26])[0]
                return tag, bits


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Polyphase resampling; output length is ``round(len * target / source)``."""
    if w.sample_rate == target_rate:
        return w
    g = gcd(int(w.sample_rate), int(target_rate))
    up, down = int(target_rate) // g, int(w.sample_rate) // g
    y = resample_poly(w.samples, up, down)
    n_out = int(round(len(w) * target_rate / w.sample_rate))
    y = np.pad(y, (0, max(0, n_out - y.size)))[:n_out]
    return Waveform(y, int(target_rate))


def load_wav(path, target_rate: int | None = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Read 16-bit PCM or 32-bit float WAV, averaging channels to mono.

    If ``target_rate`` is given and differs from the file's rate the audio is
    resampled and a notice is logged.
    """
    path = Path(path)
    tag, bits = _wav_codec(path)
    if not ((tag == 1 and bits == 16) or (tag == 3 and bits == 32)):
        name = _CODEC_NAMES.get(tag, f"format-0x{tag:04x}")
        raise FormatError(f"{path}: unsupported codec {name} {bits}-bit")
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    w = Waveform(x, int(rate))
    if target_rate is not None and rate != target_rate:
        logger.info("resampling %s from %d Hz to %d Hz", path.name, rate, target_rate)
        w = resample(w, target_rate)
    return w


def save_wav(w: Waveform, path) -> int:
    """Write 16-bit mono PCM; returns the number of samples that had to be clipped."""
    w, n_clipped = clip_waveform(w)
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(Path(path), int(w.sample_rate), pcm)
    return n_clipped
