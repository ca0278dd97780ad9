"""Vocal analysis: YIN pitch tracking, CheapTrick-style spectral envelope,
pitch unit conversion and the envelope augmentation used by the predictor.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_frames
from .errors import ConfigError, DomainError, FormatError, InvalidInputError
from .signal import DEFAULT_SAMPLE_RATE, StftConfig, Waveform

MIDI_MIN = 33
MIDI_MAX = 84
DEFAULT_MIDI = 60.0
UNVOICED_F0_HZ = 160.0
ENVELOPE_FLOOR = 1e-10
ARTIFACT_VERSION = 1


def hz_to_midi(f):
    """Convert Hz to MIDI-semitone float (69.0 = 440 Hz)."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0):
        raise DomainError("frequency must be > 0 Hz")
    m = 69.0 + 12.0 * np.log2(f / 440.0)
    return float(m) if m.ndim == 0 else m


def midi_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = 440.0 * 2.0 ** ((m - 69.0) / 12.0)
    return float(f) if f.ndim == 0 else f


@dataclass
class PitchCurve:
    """Per-frame pitch in MIDI semitones with a voicing mask.

    Unvoiced frames hold values interpolated from their voiced neighbours, so
    ``f0_midi`` never contains NaN.
    """

    f0_midi: np.ndarray
    voiced: np.ndarray
    hop: int = 512
    sample_rate: int = DEFAULT_SAMPLE_RATE
    aperiodicity: np.ndarray | None = None

    def __post_init__(self):
        self.f0_midi = np.asarray(self.f0_midi, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0_midi.shape != self.voiced.shape or self.f0_midi.ndim != 1:
            raise InvalidInputError("f0_midi and voiced must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.f0_midi)):
            raise InvalidInputError("f0_midi contains NaN or Inf")
        if self.aperiodicity is not None:
            self.aperiodicity = np.asarray(self.aperiodicity, dtype=np.float64)

    def __len__(self) -> int:
        return self.f0_midi.size

    @property
    def f0_hz(self) -> np.ndarray:
        return midi_to_hz(self.f0_midi)

    def with_f0(self, f0_midi) -> "PitchCurve":
        return PitchCurve(np.asarray(f0_midi, dtype=np.float64).copy(), self.voiced.copy(),
                          self.hop, self.sample_rate, self.aperiodicity)


@dataclass
class SpectralEnvelope:
    """Linear-power envelope, frames x bins, strictly positive."""

    env: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    hop: int = 512

    def __post_init__(self):
        self.env = check_frames(self.env, "envelope")

    def __len__(self) -> int:
        return self.env.shape[0]

    @property
    def n_bins(self) -> int:
        return self.env.shape[1]


def interpolate_unvoiced(f0_midi: np.ndarray, voiced: np.ndarray) -> np.ndarray:
    """Fill unvoiced frames by linear interpolation between voiced neighbours."""
    f0_midi = np.asarray(f0_midi, dtype=np.float64)
    voiced = np.asarray(voiced, dtype=bool)
    if not voiced.any():
        return np.full(f0_midi.shape, DEFAULT_MIDI)
    idx = np.arange(f0_midi.size)
    return np.interp(idx, idx[voiced], f0_midi[voiced])


# --- pitch -----------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisConfig:
    """Parameters of :func:`extract_pitch` and :func:`spectral_envelope`."""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    n_fft: int = 2048
    hop: int = 512
    yin_threshold: float = 0.15
    yin_window: int = 1024  # at 32 kHz; scaled with the sample rate
    aperiodicity_threshold: float = 0.2
    energy_threshold_db: float = -40.0
    midi_min: float = MIDI_MIN
    midi_max: float = MIDI_MAX
    cheaptrick_q1: float = -0.15

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.n_fft, self.hop)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:16]


def _yin_frames(x: np.ndarray, cfg: AnalysisConfig, sr: int):
    win = int(round(cfg.yin_window * sr / DEFAULT_SAMPLE_RATE))
    tau_min = max(2, int(np.floor(sr / midi_to_hz(cfg.midi_max))))
    tau_max = int(np.ceil(sr / midi_to_hz(cfg.midi_min)))
    n_frames = -(-x.size // cfg.hop)
    seg_len = win + tau_max + 2
    starts = np.arange(n_frames) * cfg.hop - win // 2
    idx = starts[:, None] + np.arange(seg_len)[None, :]
    period = 2 * (x.size - 1)
    idx = np.mod(idx, period)
    idx = np.where(idx >= x.size, period - idx, idx)
    segs = x[idx]

    n = 1 << int(np.ceil(np.log2(seg_len + win)))
    head = np.fft.rfft(segs[:, :win], n)
    full = np.fft.rfft(segs, n)
    r = np.fft.irfft(np.conj(head) * full, n)[:, : tau_max + 2]
    sq = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(segs ** 2, axis=1)], axis=1)
    taus = np.arange(tau_max + 2)
    e0 = sq[:, win][:, None]
    etau = sq[:, taus + win] - sq[:, taus]
    d = np.maximum(e0 + etau - 2.0 * r, 0.0)
    d[:, 0] = 0.0

    csum = np.cumsum(d[:, 1:], axis=1)
    cmndf = np.ones_like(d)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = d[:, 1:] * taus[1:] / csum
    cmndf[:, 1:] = np.where(csum > 1e-12 * max(1.0, float(e0.max())), ratio, 1.0)
    rms = np.sqrt(e0[:, 0] / win)
    return d, cmndf, rms, tau_min, tau_max


def _pick_period(d_row, cmndf_row, tau_min, tau_max, threshold):
    band = cmndf_row[tau_min:tau_max + 1]
    below = np.flatnonzero(band < threshold)
    if below.size:
        tau = tau_min + below[0]
        while tau + 1 <= tau_max and cmndf_row[tau + 1] < cmndf_row[tau]:
            tau += 1
    else:
        tau = tau_min + int(np.argmin(band))
    ap = float(cmndf_row[tau])
    # parabolic refinement on the raw difference function
    a, b, c = d_row[tau - 1], d_row[tau], d_row[tau + 1]
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom > 0 else 0.0
    return tau + float(np.clip(shift, -1.0, 1.0)), ap


def extract_pitch(w: Waveform, cfg: AnalysisConfig | None = None) -> PitchCurve:
    """YIN pitch on the STFT frame grid with aperiodicity + energy voicing gates."""
    cfg = cfg or AnalysisConfig()
    sr = w.sample_rate
    if sr < 16000:
        raise InvalidInputError(f"sample rate {sr} Hz below the 16 kHz minimum")
    x = w.samples
    if -(-x.size // cfg.hop) < 2:
        raise InvalidInputError(f"clip of {x.size} samples is shorter than 2 frames")
    d, cmndf, rms, tau_min, tau_max = _yin_frames(x, cfg, sr)
    n_frames = d.shape[0]
    f0 = np.empty(n_frames)
    ap = np.empty(n_frames)
    for t in range(n_frames):
        tau, ap[t] = _pick_period(d[t], cmndf[t], tau_min, tau_max, cfg.yin_threshold)
        f0[t] = hz_to_midi(sr / tau)
    gate = 10.0 ** (cfg.energy_threshold_db / 20.0)
    voiced = (ap < cfg.aperiodicity_threshold) & (rms > gate)
    voiced &= (f0 >= cfg.midi_min) & (f0 <= cfg.midi_max)
    ap = np.where(rms > gate, np.clip(ap, 0.0, 1.0), 1.0)
    return PitchCurve(interpolate_unvoiced(f0, voiced), voiced, cfg.hop, sr, ap)


# --- envelope --------------------------------------------------------------

def _cheaptrick_frame(x, centre, f0, sr, n_fft, q1):
    half = int(round(1.5 * sr / f0))
    base = np.arange(-half, half + 1)
    seg = x[np.clip(centre + base, 0, x.size - 1)]
    win = 0.5 * np.cos(np.pi * base / (1.5 * sr) * f0) + 0.5
    win /= np.sqrt(np.sum(win ** 2))
    wave = seg * win - win * np.mean(seg * win) / np.mean(win)

    power = np.abs(np.fft.rfft(wave, n_fft)) ** 2
    df = sr / n_fft
    freqs = np.arange(power.size) * df
    low = freqs < f0 + df
    # fold the mirror image of the spectrum below f0 back onto itself
    replica = np.interp(freqs[low], (f0 - freqs[low])[::-1], power[low][::-1])
    below = freqs < f0
    power[below] = power[below] + replica[: below.sum()]

    full = np.concatenate([power, power[-2:0:-1]])
    double = np.concatenate([full, full])
    axis = np.arange(2 * n_fft) * df - sr + df / 2.0
    seg_cum = np.cumsum(double * df)
    lo = np.interp(freqs - f0 / 3.0, axis, seg_cum)
    hi = np.interp(freqs + f0 / 3.0, axis, seg_cum)
    smoothed = np.maximum((hi - lo) * 1.5 / f0, ENVELOPE_FLOOR)

    quef = np.arange(n_fft) / sr
    quef = np.minimum(quef, (n_fft - np.arange(n_fft)) / sr)
    with np.errstate(invalid="ignore", divide="ignore"):
        lifter = np.sin(np.pi * f0 * quef) / (np.pi * f0 * quef)
    lifter[0] = 1.0
    lifter *= (1.0 - 2.0 * q1) + 2.0 * q1 * np.cos(2.0 * np.pi * quef * f0)
    cep = np.fft.irfft(np.log(smoothed), n_fft)
    env = np.exp(np.fft.rfft(cep * lifter).real)
    return np.maximum(env, ENVELOPE_FLOOR)


def spectral_envelope(w: Waveform, p: PitchCurve, cfg: AnalysisConfig | None = None) -> SpectralEnvelope:
    """Pitch-adaptive smoothed power spectrum per frame (CheapTrick procedure).

    Unvoiced frames are analysed with a fixed 160 Hz pitch.
    """
    cfg = cfg or AnalysisConfig()
    n_frames = -(-len(w) // cfg.hop)
    if len(p) != n_frames:
        raise InvalidInputError(f"pitch curve has {len(p)} frames, audio has {n_frames}")
    sr = w.sample_rate
    f0_floor = 3.0 * sr / (cfg.n_fft - 3.0)
    f0 = np.where(p.voiced, p.f0_hz, UNVOICED_F0_HZ)
    f0 = np.maximum(f0, f0_floor)
    env = np.empty((n_frames, cfg.n_fft // 2 + 1))
    for t in range(n_frames):
        env[t] = _cheaptrick_frame(w.samples, t * cfg.hop, f0[t], sr, cfg.n_fft, cfg.cheaptrick_q1)
    return SpectralEnvelope(env, sr, cfg.hop)


# --- augmentation ------------------------------------------------------------

def _env_array(sp):
    return sp.env if isinstance(sp, SpectralEnvelope) else np.asarray(sp, dtype=np.float64)


def _like(sp, values):
    if isinstance(sp, SpectralEnvelope):
        return SpectralEnvelope(values, sp.sample_rate, sp.hop)
    return values


def shift_envelope(sp, shift_bins: int, max_shift: int = 24):
    """Translate each frame along frequency, replicating the edge bin into the gap."""
    if abs(shift_bins) > max_shift:
        raise ConfigError(f"|shift_bins|={abs(shift_bins)} exceeds max_shift={max_shift}")
    env = _env_array(sp)
    s = int(shift_bins)
    if s == 0:
        return _like(sp, env.copy())
    out = np.empty_like(env)
    if s > 0:
        out[..., s:] = env[..., :-s]
        out[..., :s] = env[..., :1]
    else:
        out[..., :s] = env[..., -s:]
        out[..., s:] = env[..., -1:]
    return _like(sp, out)


def crop_high_bands(sp, keep_bins: int = 256):
    """Keep the lowest ``keep_bins`` bins."""
    env = _env_array(sp)
    if not 0 < keep_bins <= env.shape[-1]:
        raise ConfigError(f"keep_bins={keep_bins} outside (0, {env.shape[-1]}]")
    return _like(sp, env[..., :keep_bins].copy())


# --- artifact ------------------------------------------------------------------

@dataclass
class Analysis:
    pitch: PitchCurve
    envelope: SpectralEnvelope
    config: AnalysisConfig = field(default_factory=AnalysisConfig)

    @property
    def n_frames(self) -> int:
        return len(self.pitch)


def save_analysis(analysis: Analysis, path, notes=None) -> Path:
    """Write one ``.npz`` artifact per clip; lossless for every array."""
    path = Path(path)
    extra = {}
    if notes is not None:
        extra["notes"] = np.asarray([tuple(n) for n in notes.notes], dtype=np.int64).reshape(-1, 3)
    p = analysis.pitch
    np.savez(
        path,
        version=np.int64(ARTIFACT_VERSION),
        config=np.array(json.dumps(asdict(analysis.config), sort_keys=True)),
        config_hash=np.array(analysis.config.digest()),
        frames=np.int64(len(p)),
        f0_midi=p.f0_midi,
        voiced=p.voiced,
        aperiodicity=p.aperiodicity if p.aperiodicity is not None else np.ones(len(p)),
        envelope=analysis.envelope.env,
        hop=np.int64(p.hop),
        sample_rate=np.int64(p.sample_rate),
        **extra,
    )
    return path if path.suffix == ".npz" else path.with_name(path.name + ".npz")


def load_analysis(path):
    """Inverse of :func:`save_analysis`; returns ``(Analysis, NoteSequence | None)``."""
    from .notes import Note, NoteSequence

    with np.load(Path(path), allow_pickle=False) as z:
        if int(z["version"]) != ARTIFACT_VERSION:
            raise FormatError(f"{path}: artifact version {int(z['version'])} unsupported")
        cfg = AnalysisConfig(**json.loads(str(z["config"])))
        if str(z["config_hash"]) != cfg.digest():
            raise FormatError(f"{path}: config hash mismatch")
        hop, sr = int(z["hop"]), int(z["sample_rate"])
        pitch = PitchCurve(z["f0_midi"], z["voiced"], hop, sr, z["aperiodicity"])
        env = SpectralEnvelope(z["envelope"], sr, hop)
        notes = None
        if "notes" in z.files:
            notes = NoteSequence([Note(*map(int, row)) for row in z["notes"]])
    return Analysis(pitch, env, cfg), notes


class VocalAnalyzer(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``transform(waveform) -> Analysis``.

    Stateless; ``fit`` only validates the parameters.
    """

    def __init__(self, sample_rate=DEFAULT_SAMPLE_RATE, n_fft=2048, hop=512, yin_threshold=0.15,
                 aperiodicity_threshold=0.2, energy_threshold_db=-40.0):
        self.sample_rate = sample_rate
        self.n_fft = n_fft
        self.hop = hop
        self.yin_threshold = yin_threshold
        self.aperiodicity_threshold = aperiodicity_threshold
        self.energy_threshold_db = energy_threshold_db

    def _config(self) -> AnalysisConfig:
        StftConfig(self.n_fft, self.hop)
        return AnalysisConfig(sample_rate=self.sample_rate, n_fft=self.n_fft, hop=self.hop,
                              yin_threshold=self.yin_threshold,
                              aperiodicity_threshold=self.aperiodicity_threshold,
                              energy_threshold_db=self.energy_threshold_db)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X) -> Analysis:
        cfg = getattr(self, "config_", None) or self._config()
        w = X if isinstance(X, Waveform) else Waveform(np.asarray(X), self.sample_rate)
        pitch = extract_pitch(w, cfg)
        return Analysis(pitch, spectral_envelope(w, pitch, cfg), cfg)
