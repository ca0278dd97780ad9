"""Pipeline configuration: one JSON document, every field defaulted, overrides logged."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .analysis import AnalysisConfig
from .errors import ConfigError
from .notes import NoteHmmParams

log = logging.getLogger(__name__)

MODES = ("rule", "neural")
BACKENDS = ("sf", "world", "phase")


@dataclass(frozen=True)
class TunerParams:
    crossfade_width: int = 5
    octave_guard: float = 7.0


@dataclass(frozen=True)
class PredictorTrainParams:
    steps: int = 300
    lr: float = 1e-3
    augment: bool = True
    max_shift_bins: int = 8
    model_dim: int = 64
    n_fft_blocks: int = 2
    n_heads: int = 2


@dataclass(frozen=True)
class VocoderTrainParams:
    steps: int = 500
    lr: float = 2e-4
    adversarial: bool = True
    segment_frames: int = 32
    base_channels: int = 32


@dataclass(frozen=True)
class PipelineConfig:
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    hmm: NoteHmmParams = field(default_factory=NoteHmmParams)
    tuner: TunerParams = field(default_factory=TunerParams)
    predictor_train: PredictorTrainParams = field(default_factory=PredictorTrainParams)
    vocoder_train: VocoderTrainParams = field(default_factory=VocoderTrainParams)
    predictor_checkpoint: str | None = None
    vocoder_checkpoint: str | None = None
    mode: str = "rule"
    backend: str = "world"
    seed: int = 0
    out_dir: str = "."

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend == "sf" and self.analysis.hop != 512:
            raise ConfigError(f"the sf backend synthesises 512 samples per frame; hop is {self.analysis.hop}")

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(prefix + k for k in sorted(unknown))}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{prefix}{name}.")
            continue
        if current is not None and not isinstance(value, type(current)) and not (
                isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool)):
            raise ConfigError(f"{prefix}{name}: expected {type(current).__name__}, got {value!r}")
        if value != current:
            log.info("config override %s%s = %r (default %r)", prefix, name, value, current)
        kwargs[name] = value
    try:
        return replace(defaults, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read ``path`` (JSON) if given, then apply keyword overrides (``None`` is ignored)."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    return _build(PipelineConfig, data, "")
