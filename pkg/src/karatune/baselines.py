"""DSP resynthesis baselines: phase-locked phase vocoder and pulse+noise source-filter synthesis."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .analysis import PitchCurve, SpectralEnvelope
from .errors import ContractError
from .signal import Waveform

log = logging.getLogger(__name__)

MIN_RATIO, MAX_RATIO = 0.25, 4.0


@dataclass
class ShiftPlan:
    """Per-frame pitch ratios on the analysis frame grid."""

    ratios: np.ndarray
    hop: int = 512

    def __post_init__(self):
        r = np.asarray(self.ratios, dtype=np.float64)
        if r.ndim != 1 or r.size == 0 or not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ContractError("ratios must be a non-empty 1-D array of positive finite values")
        clipped = np.clip(r, MIN_RATIO, MAX_RATIO)
        if np.any(clipped != r):
            log.warning("clamped %d pitch ratios into [%g, %g]", int(np.sum(clipped != r)), MIN_RATIO, MAX_RATIO)
        self.ratios = clipped

    @classmethod
    def from_curves(cls, original: PitchCurve, tuned: PitchCurve) -> "ShiftPlan":
        if len(original) != len(tuned):
            raise ContractError("original and tuned curves differ in length")
        shift = np.where(original.voiced, tuned.f0_midi - original.f0_midi, 0.0)
        return cls(2.0 ** (shift / 12.0), original.hop)

    @classmethod
    def constant(cls, ratio: float, n_frames: int, hop: int = 512) -> "ShiftPlan":
        return cls(np.full(n_frames, float(ratio)), hop)


# --- phase vocoder -------------------------------------------------------------

def _peak_regions(mag: np.ndarray) -> np.ndarray:
    """For every bin, the index of the spectral peak whose region it falls in."""
    n = mag.size
    padded = np.concatenate([[-1.0, -1.0], mag, [-1.0, -1.0]])
    centre = padded[2:-2]
    is_peak = ((centre > padded[:-4]) & (centre > padded[1:-3])
               & (centre >= padded[3:-1]) & (centre >= padded[4:]))
    peaks = np.flatnonzero(is_peak)
    if peaks.size == 0:
        return np.arange(n)
    bounds = (peaks[1:] + peaks[:-1]) / 2.0
    return peaks[np.searchsorted(bounds, np.arange(n))]


def phase_vocoder_shift(w: Waveform, plan: ShiftPlan, n_fft: int = 2048, synth_hop: int = 256) -> Waveform:
    """Pitch-shift by a time-varying ratio and keep the duration.

    The signal is first time-stretched by the local ratio with a phase-locked
    vocoder (analysis hop = synthesis hop / ratio), then read back at the
    matching time-varying rate.
    """
    x = w.samples
    n = x.size
    if n == 0:
        return Waveform(x.copy(), w.sample_rate)
    centres = np.arange(len(plan.ratios)) * plan.hop

    def ratio_at(pos):
        return np.interp(pos, centres, plan.ratios)

    positions = [0.0]
    while positions[-1] < n:
        positions.append(positions[-1] + synth_hop / ratio_at(positions[-1]))
    positions = np.asarray(positions)
    half = n_fft // 2
    xp = np.pad(x, (half, half + n_fft))
    win = np.hanning(n_fft + 1)[:-1]
    omega = 2 * np.pi * np.arange(half + 1) / n_fft
    n_frames = len(positions)
    out = np.zeros(n_frames * synth_hop + n_fft)
    norm = np.zeros_like(out)
    prev_phase = synth_phase = None
    for k, pos in enumerate(positions):
        start = int(round(pos))
        spec = np.fft.rfft(win * xp[start:start + n_fft])
        mag, phase = np.abs(spec), np.angle(spec)
        if k == 0:
            synth_phase = phase.copy()
        else:
            step = start - int(round(positions[k - 1]))
            dphi = phase - prev_phase - omega * step
            dphi -= 2 * np.pi * np.round(dphi / (2 * np.pi))
            advance = (omega + dphi / max(step, 1)) * synth_hop
            peaks = _peak_regions(mag)
            peak_phase = synth_phase[peaks] + advance[peaks]
            synth_phase = peak_phase + phase - phase[peaks]
        prev_phase = phase
        frame = np.fft.irfft(mag * np.exp(1j * synth_phase), n_fft) * win
        a = k * synth_hop
        out[a:a + n_fft] += frame
        norm[a:a + n_fft] += win ** 2
    stretched = out / np.maximum(norm, 1e-8 * norm.max() if norm.max() > 0 else 1.0)
    stretched = stretched[half:]
    # Map each output sample back onto the stretched time axis.
    sigma = np.interp(np.arange(n), positions, np.arange(n_frames) * synth_hop)
    y = np.interp(sigma, np.arange(stretched.size), stretched)
    return Waveform(y, w.sample_rate)


# --- pulse + noise synthesis -------------------------------------------------

def minimum_phase_response(sp_frame: np.ndarray, n_fft: int | None = None) -> np.ndarray:
    """Minimum-phase impulse response with power response ``sp_frame`` (cepstral folding)."""
    n_bins = sp_frame.size
    n = n_fft or 2 * (n_bins - 1)
    cep = np.fft.irfft(0.5 * np.log(np.maximum(sp_frame, 1e-300)), n)
    fold = np.zeros(n)
    fold[0] = cep[0]
    fold[1:n // 2] = 2 * cep[1:n // 2]
    fold[n // 2] = cep[n // 2]
    return np.fft.irfft(np.exp(np.fft.rfft(fold)), n)


def _pulse_train(f0_hz: np.ndarray, sample_rate: int) -> np.ndarray:
    """Unit-power band-limited pulse train: scaled sum of harmonics below Nyquist."""
    phi = 2 * np.pi * np.cumsum(f0_hz) / sample_rate
    m = np.maximum(np.floor(0.5 * sample_rate / np.maximum(f0_hz, 1.0)), 1)
    half = np.sin(phi / 2)
    safe = np.abs(half) > 1e-9
    dirichlet = np.where(safe, np.sin((m + 0.5) * phi) / (2 * np.where(safe, half, 1.0)) - 0.5, m)
    return dirichlet * np.sqrt(2.0 / m)


def world_like_synthesize(p: PitchCurve, sp: SpectralEnvelope, ap=None, seed: int = 0) -> Waveform:
    """Mix pulses and noise per frame, shape each frame by its minimum-phase filter, overlap-add.

    ``ap`` defaults to the curve's aperiodicity on voiced frames and 1 elsewhere.
    """
    if len(p) != len(sp):
        raise ContractError(f"pitch has {len(p)} frames but envelope has {len(sp)}")
    hop, sr = sp.hop, sp.sample_rate
    n_frames = len(p)
    if ap is None:
        base = p.aperiodicity if p.aperiodicity is not None else np.zeros(n_frames)
        ap = np.where(p.voiced, np.clip(base, 0.0, 1.0), 1.0)
    ap = np.broadcast_to(np.asarray(ap, dtype=np.float64), (n_frames,))
    if np.any((ap < 0) | (ap > 1)):
        raise ContractError("aperiodicity must lie in [0, 1]")
    n = n_frames * hop
    f0 = np.interp(np.arange(n), np.arange(n_frames) * hop, p.f0_hz)
    pulses = _pulse_train(f0, sr)
    noise = np.random.default_rng(seed).standard_normal(n)
    seg = 2 * hop
    win = np.hanning(seg + 1)[:-1]  # periodic Hann sums to one at hop = seg / 2
    n_env = 2 * (sp.n_bins - 1)
    conv_n = 1 << int(np.ceil(np.log2(seg + n_env)))
    pulses_p = np.pad(pulses, (hop, hop))
    noise_p = np.pad(noise, (hop, hop))
    out = np.zeros(n + 2 * hop + conv_n)
    for t in range(n_frames):
        a = t * hop
        exc = (1 - ap[t]) * pulses_p[a:a + seg] + ap[t] * noise_p[a:a + seg]
        h = minimum_phase_response(sp.env[t], n_env)
        y = np.fft.irfft(np.fft.rfft(exc * win, conv_n) * np.fft.rfft(h, conv_n), conv_n)
        out[a:a + conv_n] += y
    return Waveform(out[hop:hop + n], sr)

