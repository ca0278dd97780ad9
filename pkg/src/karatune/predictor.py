"""Vocal-aware pitch predictor: notes + low-band envelope -> pitch curve (MIDI float)."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import nn
from .analysis import MIDI_MAX, MIDI_MIN, crop_high_bands, shift_envelope
from .errors import ContractError, InvalidInputError
from .nn import Tensor
from .notes import NoteSequence

log = logging.getLogger(__name__)

REST_ID = MIDI_MAX - MIDI_MIN + 1  # 52
NOTE_VOCAB = REST_ID + 1


@dataclass(frozen=True)
class PredictorConfig:
    note_vocab: int = NOTE_VOCAB
    note_embed_dim: int = 32
    env_in_bins: int = 256
    env_proj_dim: int = 32
    model_dim: int = 64
    n_fft_blocks: int = 2
    n_heads: int = 2
    conv_kernel: int = 3
    ff_dim: int = 128
    dropout: float = 0.0

    def __post_init__(self):
        if self.model_dim % self.n_heads:
            raise ContractError(f"model_dim {self.model_dim} not divisible by n_heads {self.n_heads}")


@dataclass
class PredictorBatch:
    """One training clip; ``env`` keeps every bin so augmentation can shift before cropping."""

    notes: np.ndarray
    env: np.ndarray
    target_f0_midi: np.ndarray
    voiced_mask: np.ndarray

    def __post_init__(self):
        self.notes = np.asarray(self.notes, dtype=np.int64)
        self.env = np.asarray(self.env, dtype=np.float64)
        self.target_f0_midi = np.asarray(self.target_f0_midi, dtype=np.float64)
        self.voiced_mask = np.asarray(self.voiced_mask, dtype=bool)
        n = {len(self.notes), len(self.env), len(self.target_f0_midi), len(self.voiced_mask)}
        if len(n) != 1:
            raise InvalidInputError("notes, env, target and mask must share the frame count")

    def __len__(self):
        return len(self.notes)


def note_ids(notes: NoteSequence, n_frames: int) -> np.ndarray:
    """Frame-expanded note ids: ``midi - 33`` while a note sounds, the rest id elsewhere."""
    targets = notes.frame_targets(n_frames)
    ids = np.full(n_frames, REST_ID, dtype=np.int64)
    sounding = ~np.isnan(targets)
    midi = targets[sounding].astype(np.int64)
    if midi.size and (midi.min() < MIDI_MIN or midi.max() > MIDI_MAX):
        raise InvalidInputError(f"notes must lie in MIDI {MIDI_MIN}..{MIDI_MAX}")
    ids[sounding] = midi - MIDI_MIN
    return ids


def sinusoid_positions(n_frames: int, dim: int) -> np.ndarray:
    pos = np.arange(n_frames)[:, None]
    rate = np.exp(-np.log(10000.0) * (np.arange(0, dim, 2) / dim))
    pe = np.zeros((n_frames, dim))
    pe[:, 0::2] = np.sin(pos * rate)
    pe[:, 1::2] = np.cos(pos * rate[: dim // 2])
    return pe


class FFTBlock(nn.Module):
    """Pre-norm self-attention and conv feed-forward, each wrapped in a residual."""

    def __init__(self, cfg: PredictorConfig, rng: np.random.Generator):
        d = cfg.model_dim
        self.ln1 = nn.LayerNorm(d)
        self.attn = nn.MultiHeadAttention(d, cfg.n_heads, rng)
        self.ln2 = nn.LayerNorm(d)
        self.ff1 = nn.Conv1d(d, cfg.ff_dim, cfg.conv_kernel, rng)
        self.ff2 = nn.Conv1d(cfg.ff_dim, d, 1, rng)
        self.dropout = cfg.dropout
        self._rng = rng

    def forward(self, x: Tensor) -> Tensor:
        h = nn.dropout(self.attn(self.ln1(x)), self.dropout, self._rng, self.training)
        x = x + h
        h = self.ln2(x).T
        h = self.ff2(nn.relu(self.ff1(h))).T
        return x + nn.dropout(h, self.dropout, self._rng, self.training)


def fft_block(x, block: FFTBlock) -> Tensor:
    return block(nn.as_tensor(x))


class PitchPredictorNet(nn.Module):
    def __init__(self, cfg: PredictorConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.note_embed = nn.Embedding(cfg.note_vocab, cfg.note_embed_dim, rng)
        self.env_proj = nn.Linear(cfg.env_in_bins, cfg.env_proj_dim, rng)
        self.in_proj = nn.Linear(cfg.note_embed_dim + cfg.env_proj_dim, cfg.model_dim, rng)
        self.blocks = [FFTBlock(cfg, rng) for _ in range(cfg.n_fft_blocks)]
        self.head = nn.Linear(cfg.model_dim, 1, rng)

    def init_note_pathway(self, centre_midi: float, scale: float = 12.0) -> None:
        """Start from "output follows the score".

        Embedding column 0 becomes a pitch ramp around ``centre_midi``, routed
        by ``in_proj`` into the last model channel (whose positional code is
        nearly constant) and read back by the head. Only initial values
        change; the trained model is free to move away from this.
        """
        d = self.cfg.model_dim
        ramp = (np.arange(self.cfg.note_vocab) + MIDI_MIN - centre_midi) / scale
        ramp[REST_ID] = 0.0
        self.note_embed.weight.data[:, 0] = ramp
        self.in_proj.weight.data[:, d - 1] = 0.0
        self.in_proj.weight.data[0, :] = 0.0
        self.in_proj.weight.data[0, d - 1] = 1.0
        self.in_proj.bias.data[d - 1] = 0.0
        for block in self.blocks:
            block.attn.out.weight.data[:, d - 1] = 0.0
            block.ff2.weight.data[d - 1] = 0.0
        self.head.weight.data[:, 0] = 0.0
        self.head.weight.data[d - 1, 0] = scale
        self.head.bias.data[:] = centre_midi - scale * sinusoid_positions(1, d)[0, d - 1]

    def forward(self, notes: np.ndarray, env) -> Tensor:
        notes = np.asarray(notes, dtype=np.int64)
        env = nn.as_tensor(env)
        if env.ndim != 2 or env.shape[0] != len(notes):
            raise ContractError(f"notes ({len(notes)} frames) and env {env.shape} are not frame-aligned")
        if env.shape[1] != self.cfg.env_in_bins:
            raise ContractError(f"env must be cropped to {self.cfg.env_in_bins} bins, got {env.shape[1]}")
        h = nn.concat([self.note_embed(notes), self.env_proj(env)], axis=-1)
        h = self.in_proj(h) + sinusoid_positions(len(notes), self.cfg.model_dim)
        for block in self.blocks:
            h = block(h)
        return self.head(h).reshape(len(notes))


def predict_pitch(notes, env, model: PitchPredictorNet, env_scale: float = 1.0) -> np.ndarray:
    """Run a frozen model; ``env`` must already be cropped to the model's input bins."""
    env = np.asarray(env, dtype=np.float64) * env_scale
    with nn.no_grad():
        model.eval()
        out = model(notes, env.astype(nn.get_default_dtype()))
        model.train()
    return out.data.astype(np.float64)


def mse_pitch_loss(pred: Tensor, target, voiced_mask) -> Tensor:
    """Mean of squared error over voiced frames only."""
    pred = nn.as_tensor(pred)
    target = np.asarray(target, dtype=pred.dtype)
    mask = np.asarray(voiced_mask, dtype=bool)
    if not (len(pred.data) == len(target) == len(mask)):
        raise ContractError(f"lengths differ: pred {len(pred.data)}, target {len(target)}, mask {len(mask)}")
    n = int(mask.sum())
    if n == 0:
        raise InvalidInputError("no voiced frames to score")
    diff = nn.where(mask, pred - np.where(mask, target, 0.0), 0.0)
    return nn.tsum(diff * diff) * (1.0 / n)


@dataclass
class PredictorTrainConfig:
    steps: int = 300
    lr: float = 1e-3
    weight_decay: float = 0.0
    augment: bool = True
    max_shift_bins: int = 8
    seed: int = 0
    model: PredictorConfig = field(default_factory=PredictorConfig)


def _fit_constants(dataset, keep_bins: int):
    env_mean = np.mean([crop_high_bands(b.env, keep_bins).mean() for b in dataset])
    voiced = np.concatenate([b.target_f0_midi[b.voiced_mask] for b in dataset])
    if voiced.size == 0:
        raise InvalidInputError("training set has no voiced frames")
    return 1.0 / max(env_mean, 1e-12), float(voiced.mean())


def train_predictor(dataset, cfg: PredictorTrainConfig | None = None, model: PitchPredictorNet | None = None):
    """Train on frame-aligned clips; returns (model, env_scale, history).

    Every step draws one clip and, when augmenting, shifts its envelope by a
    random number of bins before cropping to the model's input band.
    """
    cfg = cfg or PredictorTrainConfig()
    dataset = list(dataset)
    if not dataset:
        raise InvalidInputError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    keep = cfg.model.env_in_bins
    env_scale, target_mean = _fit_constants(dataset, keep)
    if model is None:
        model = PitchPredictorNet(cfg.model, rng)
        model.init_note_pathway(target_mean)
    opt = nn.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    dtype = nn.get_default_dtype()
    history = []
    for step in range(cfg.steps):
        batch = dataset[int(rng.integers(len(dataset)))]
        env = batch.env
        if cfg.augment and cfg.max_shift_bins:
            env = shift_envelope(env, int(rng.integers(-cfg.max_shift_bins, cfg.max_shift_bins + 1)),
                                 max_shift=cfg.max_shift_bins)
        env = (crop_high_bands(env, keep) * env_scale).astype(dtype)
        opt.zero_grad()
        loss = mse_pitch_loss(model(batch.notes, env), batch.target_f0_midi, batch.voiced_mask)
        loss.backward()
        opt.step()
        history.append({"step": step, "loss": loss.item()})
    return model, env_scale, history


def evaluate_predictor(model, dataset, env_scale: float, shift_bins: int = 0) -> float:
    """Mean masked MSE over ``dataset`` with every envelope shifted by ``shift_bins``."""
    keep = model.cfg.env_in_bins
    losses = []
    for b in dataset:
        env = crop_high_bands(shift_envelope(b.env, shift_bins, max_shift=max(abs(shift_bins), 1)), keep)
        pred = predict_pitch(b.notes, env, model, env_scale)
        m = b.voiced_mask
        losses.append(np.mean((pred[m] - b.target_f0_midi[m]) ** 2))
    return float(np.mean(losses))


class PitchPredictor(RegressorMixin, BaseEstimator):
    """Estimator wrapper; ``fit`` takes a list of :class:`PredictorBatch`.

    ``predict`` accepts one ``(note_ids, full_env)`` pair or a list of them and
    crops the envelope itself.
    """

    def __init__(self, model_dim=64, n_fft_blocks=2, n_heads=2, note_embed_dim=32, env_in_bins=256,
                 conv_kernel=3, dropout=0.0, steps=300, lr=1e-3, augment=True, max_shift_bins=8,
                 random_state=0):
        self.model_dim = model_dim
        self.n_fft_blocks = n_fft_blocks
        self.n_heads = n_heads
        self.note_embed_dim = note_embed_dim
        self.env_in_bins = env_in_bins
        self.conv_kernel = conv_kernel
        self.dropout = dropout
        self.steps = steps
        self.lr = lr
        self.augment = augment
        self.max_shift_bins = max_shift_bins
        self.random_state = random_state

    def _train_config(self) -> PredictorTrainConfig:
        mcfg = PredictorConfig(note_embed_dim=self.note_embed_dim, env_in_bins=self.env_in_bins,
                               model_dim=self.model_dim, n_fft_blocks=self.n_fft_blocks,
                               n_heads=self.n_heads, conv_kernel=self.conv_kernel, dropout=self.dropout)
        return PredictorTrainConfig(steps=self.steps, lr=self.lr, augment=self.augment,
                                    max_shift_bins=self.max_shift_bins, seed=self.random_state, model=mcfg)

    def fit(self, X, y=None):
        self.model_, self.env_scale_, self.history_ = train_predictor(X, self._train_config())
        return self

    def _predict_one(self, notes, env):
        env = crop_high_bands(np.asarray(env, dtype=np.float64), self.model_.cfg.env_in_bins)
        return predict_pitch(notes, env, self.model_, self.env_scale_)

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise ContractError("PitchPredictor is not fitted")
        if isinstance(X, PredictorBatch):
            return self._predict_one(X.notes, X.env)
        if isinstance(X, tuple) and len(X) == 2 and np.ndim(X[1]) == 2:
            return self._predict_one(*X)
        return [self.predict(x) for x in X]

    def save(self, path) -> None:
        meta = {"config": asdict(self.model_.cfg), "env_scale": self.env_scale_, "params": self.get_params()}
        nn.save_checkpoint(path, {"predictor": self.model_}, meta=meta)

    @classmethod
    def load(cls, path) -> "PitchPredictor":
        meta = nn.read_checkpoint_meta(path)
        est = cls(**meta["params"])
        est.model_ = PitchPredictorNet(PredictorConfig(**meta["config"]), np.random.default_rng(0))
        nn.load_checkpoint(path, {"predictor": est.model_})
        est.env_scale_ = meta["env_scale"]
        est.history_ = []
        return est
