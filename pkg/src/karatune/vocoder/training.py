"""Adversarial training loop and the inference-facing vocoder wrapper."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .. import nn
from ..analysis import PitchCurve, SpectralEnvelope
from ..errors import ContractError, InvalidInputError
from ..signal import Waveform
from .discriminators import DiscriminatorBanks
from .generator import RCGenerator, VocoderConfig
from .losses import discriminator_loss, generator_loss, stft_loss
from .sf_block import SFBlock, sf_block

log = logging.getLogger(__name__)


class SFVocoderNet(nn.Module):
    """SF block feeding the RCG generator."""

    def __init__(self, cfg: VocoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.sf = SFBlock(cfg.n_env_bins, rng, sample_rate=cfg.sample_rate, kernel=cfg.sf_kernel,
                          dilations=cfg.sf_dilations)
        self.generator = RCGenerator(cfg, rng)

    @property
    def binning(self):
        return self.sf.binning

    def forward(self, pitch_ids, sp) -> nn.Tensor:
        return self.generator(self.sf(pitch_ids, sp))


def _align(w: Waveform, pitch: PitchCurve, sp: SpectralEnvelope, hop: int) -> np.ndarray:
    if len(pitch) != len(sp):
        raise ContractError(f"pitch ({len(pitch)}) and envelope ({len(sp)}) frame counts differ")
    n = len(pitch) * hop
    x = w.samples[:n]
    return np.pad(x, (0, n - len(x)))


@dataclass
class VocoderTrainConfig:
    steps: int = 500
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    weight_decay: float = 0.01
    adversarial: bool = True
    segment_frames: int | None = None
    seed: int = 0
    model: VocoderConfig = field(default_factory=VocoderConfig)


def fit_sp_scale(dataset) -> float:
    """Reciprocal RMS of the training envelopes (the linear envelope is heavy-tailed)."""
    ms = np.mean([np.mean(sp.env ** 2) for _, _, sp in dataset])
    return 1.0 / max(float(np.sqrt(ms)), 1e-12)


def train_vocoder(dataset, cfg: VocoderTrainConfig | None = None, model: SFVocoderNet | None = None,
                  discs: DiscriminatorBanks | None = None, callback=None):
    """Alternate discriminator and generator updates on ground-truth pitch.

    ``dataset`` holds ``(Waveform, PitchCurve, SpectralEnvelope)`` triples.
    Returns ``(model, discs, sp_scale, history)``; ``callback(step, model)``
    runs after every generator update when given.
    """
    cfg = cfg or VocoderTrainConfig()
    dataset = list(dataset)
    if not dataset:
        raise InvalidInputError("empty training set")
    mcfg = cfg.model
    rng = np.random.default_rng(cfg.seed)
    model = model or SFVocoderNet(mcfg, rng)
    discs = discs or DiscriminatorBanks(rng, mcfg.periods, mcfg.rsd_levels)
    sp_scale = fit_sp_scale(dataset)
    dtype = nn.get_default_dtype()
    prepared = []
    for w, pitch, sp in dataset:
        audio = _align(w, pitch, sp, mcfg.hop).astype(dtype)
        ids = model.binning(pitch.f0_midi, pitch.voiced)
        prepared.append((audio, ids, (sp.env * sp_scale).astype(dtype)))
    opt_g = nn.AdamW(model.parameters(), lr=cfg.lr_g, weight_decay=cfg.weight_decay)
    opt_d = nn.AdamW(discs.parameters(), lr=cfg.lr_d, weight_decay=cfg.weight_decay)
    history = []
    for step in range(cfg.steps):
        audio, ids, env = prepared[int(rng.integers(len(prepared)))]
        if cfg.segment_frames and len(ids) > cfg.segment_frames:
            a = int(rng.integers(len(ids) - cfg.segment_frames + 1))
            b = a + cfg.segment_frames
            audio, ids, env = audio[a * mcfg.hop:b * mcfg.hop], ids[a:b], env[a:b]
        fake = model(ids, env)
        row = {"step": step}
        if cfg.adversarial:
            opt_d.zero_grad()
            d_loss = discriminator_loss(discs(audio), discs(fake.detach()))
            d_loss.backward()
            opt_d.step()
            row["d_loss"] = d_loss.item()
            with nn.no_grad():
                real_out = discs(audio)
            opt_g.zero_grad()
            total, adv, fm, spec = generator_loss(discs(fake), real_out, audio, fake,
                                                  mcfg.lambda_fm, mcfg.lambda_stft)
            row.update(g_adv=adv.item(), fm=fm.item())
        else:
            opt_g.zero_grad()
            spec = stft_loss(audio, fake)
            total = spec * mcfg.lambda_stft
        total.backward()
        opt_g.step()
        row.update(stft=spec.item(), g_total=total.item())
        history.append(row)
        if callback is not None:
            callback(step, model)
    return model, discs, sp_scale, history


def synthesize(model: SFVocoderNet, pitch: PitchCurve, sp: SpectralEnvelope, sp_scale: float,
               voiced=None) -> Waveform:
    """Vocode ``pitch`` over ``sp``; frames unvoiced in ``voiced`` use the unvoiced bin."""
    with nn.no_grad():
        r = sf_block(pitch, sp, model.sf, sp_scale, voiced)
        out = model.generator(r.T)
    return Waveform(out.data.astype(np.float64), model.cfg.sample_rate)


class SFVocoder(BaseEstimator):
    """Estimator wrapper: ``fit`` on (Waveform, PitchCurve, SpectralEnvelope) triples,
    ``predict((pitch, envelope[, voiced]))`` returns a :class:`Waveform`."""

    def __init__(self, base_channels=32, top_k=3, lambda_fm=2.0, lambda_stft=45.0, steps=500, lr=2e-4,
                 adversarial=True, segment_frames=None, random_state=0):
        self.base_channels = base_channels
        self.top_k = top_k
        self.lambda_fm = lambda_fm
        self.lambda_stft = lambda_stft
        self.steps = steps
        self.lr = lr
        self.adversarial = adversarial
        self.segment_frames = segment_frames
        self.random_state = random_state

    def _model_config(self, n_env_bins=1025, sample_rate=32000) -> VocoderConfig:
        return VocoderConfig(n_env_bins=n_env_bins, sample_rate=sample_rate, base_channels=self.base_channels,
                             top_k=self.top_k, lambda_fm=self.lambda_fm, lambda_stft=self.lambda_stft)

    def fit(self, X, y=None):
        X = list(X)
        if not X:
            raise InvalidInputError("empty training set")
        w, _, sp = X[0]
        cfg = VocoderTrainConfig(steps=self.steps, lr_g=self.lr, lr_d=self.lr, adversarial=self.adversarial,
                                 segment_frames=self.segment_frames, seed=self.random_state,
                                 model=self._model_config(sp.n_bins, w.sample_rate))
        self.model_, self.discs_, self.sp_scale_, self.history_ = train_vocoder(X, cfg)
        return self

    def predict(self, X) -> Waveform:
        if not hasattr(self, "model_"):
            raise ContractError("SFVocoder is not fitted")
        return synthesize(self.model_, *X[:2], self.sp_scale_, X[2] if len(X) > 2 else None)

    def save(self, path) -> None:
        cfg = asdict(self.model_.cfg)
        meta = {"config": cfg, "sp_scale": self.sp_scale_, "params": self.get_params()}
        nn.save_checkpoint(path, {"vocoder": self.model_}, meta=meta)

    @classmethod
    def load(cls, path) -> "SFVocoder":
        meta = nn.read_checkpoint_meta(path)
        est = cls(**meta["params"])
        cfg = {k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
               for k, v in meta["config"].items()}
        est.model_ = SFVocoderNet(VocoderConfig(**cfg), np.random.default_rng(0))
        nn.load_checkpoint(path, {"vocoder": est.model_})
        est.sp_scale_ = meta["sp_scale"]
        est.history_ = []
        return est
