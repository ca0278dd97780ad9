"""End-to-end stages: analyze, tune, metrics and the two training commands."""
from __future__ import annotations

import contextlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .analysis import Analysis, PitchCurve, extract_pitch, save_analysis, spectral_envelope
from .baselines import ShiftPlan, phase_vocoder_shift, world_like_synthesize
from .config import PipelineConfig
from .errors import ConfigError, FormatError, InvalidInputError, KaratuneError
from .notes import NoteSequence, decode_notes, load_notes, save_notes_txt
from .predictor import PitchPredictor, PredictorBatch, note_ids
from .signal import Waveform, load_wav, save_wav
from .tuner import TuneReport, cent_rmse, crossfade_boundaries, note_shift_tune

log = logging.getLogger(__name__)


class StageError(KaratuneError):
    """A failure tagged with the pipeline stage and the artifact involved.

    ``kind`` is ``"config"`` or ``"data"``; the CLI maps it to an exit code.
    """

    def __init__(self, stage: str, artifact, cause: Exception, kind: str):
        self.stage, self.artifact, self.cause, self.kind = stage, str(artifact), cause, kind
        super().__init__(f"[{stage}] {artifact}: {cause}")


@contextlib.contextmanager
def stage(name: str, artifact, timings: dict | None = None):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except ConfigError as exc:
        raise StageError(name, artifact, exc, "config") from exc
    except (KaratuneError, OSError, ValueError, EOFError) as exc:
        raise StageError(name, artifact, exc, "data") from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


# --- metrics -------------------------------------------------------------------

@dataclass
class MetricsReport:
    cent_rmse: float
    vuv_agreement: float
    tune: TuneReport | None = None
    runtimes: dict = field(default_factory=dict)

    def to_text(self) -> str:
        """Deterministic text form; wall-clock runtimes are logged, not written."""
        lines = [f"cent_rmse {self.cent_rmse:.3f}", f"vuv_agreement_pct {self.vuv_agreement:.2f}"]
        if self.tune is not None:
            lines.append("# per-note shifts")
            lines.append(self.tune.to_text().rstrip("\n"))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def measure(w: Waveform, ref: NoteSequence, cfg: PipelineConfig, reference_voicing=None) -> MetricsReport:
    """Score ``w`` against ``ref`` using pitch re-extracted from the audio itself."""
    if len(ref) == 0:
        raise InvalidInputError("reference has no notes; nothing to score")
    p = extract_pitch(w, cfg.analysis)
    rmse = cent_rmse(p, ref)
    if reference_voicing is None:
        agreement = float("nan")
    else:
        n = min(len(p), len(reference_voicing))
        agreement = 100.0 * float(np.mean(p.voiced[:n] == np.asarray(reference_voicing)[:n]))
    return MetricsReport(rmse, agreement)


# --- plot ------------------------------------------------------------------------

def render_plot(notes: NoteSequence, original: PitchCurve, tuned: PitchCurve, width: int = 900,
                height: int = 360) -> str:
    """SVG with three layers: note rectangles, original curve, tuned curve."""
    n = max(len(original), 1)
    voiced_vals = np.concatenate([original.f0_midi[original.voiced], tuned.f0_midi[tuned.voiced],
                                  np.asarray([x.midi for x in notes], dtype=float)])
    lo = float(np.floor(voiced_vals.min())) - 2 if voiced_vals.size else 48.0
    hi = float(np.ceil(voiced_vals.max())) + 2 if voiced_vals.size else 72.0

    def xy(t, m):
        return t * width / n, height - (m - lo) * height / (hi - lo)

    def polyline(curve: PitchCurve, colour: str) -> str:
        parts, run = [], []
        for t in range(len(curve)):
            if curve.voiced[t]:
                run.append("%.2f,%.2f" % xy(t, curve.f0_midi[t]))
            elif run:
                parts.append(run)
                run = []
        if run:
            parts.append(run)
        return "".join(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{" ".join(r)}"/>'
                       for r in parts)

    rects = []
    for note in notes:
        x0, y0 = xy(note.onset, note.midi + 0.5)
        x1, _ = xy(note.offset, note.midi)
        rects.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" '
                     f'height="{height / (hi - lo):.2f}" fill="#cfd8e3"/>')
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">'
            f'<title>{escape("pitch: notes, original, tuned")}</title>'
            f'<g id="notes">{"".join(rects)}</g>'
            f'<g id="original">{polyline(original, "#888888")}</g>'
            f'<g id="tuned">{polyline(tuned, "#d62728")}</g>'
            '</svg>\n')


# --- stages ----------------------------------------------------------------------

def analyze_waveform(w: Waveform, cfg: PipelineConfig) -> tuple[Analysis, NoteSequence]:
    pitch = extract_pitch(w, cfg.analysis)
    env = spectral_envelope(w, pitch, cfg.analysis)
    return Analysis(pitch, env, cfg.analysis), decode_notes(pitch, cfg.hmm)


def cmd_analyze(wav_path, cfg: PipelineConfig) -> tuple[Path, str]:
    wav_path = Path(wav_path)
    with stage("load", wav_path):
        w = load_wav(wav_path, cfg.analysis.sample_rate)
    with stage("analyze", wav_path):
        analysis, notes = analyze_waveform(w, cfg)
    out_dir = Path(cfg.out_dir)
    out = out_dir / f"{wav_path.stem}.analysis.npz"
    with stage("write", out):
        out_dir.mkdir(parents=True, exist_ok=True)
        save_analysis(analysis, out, notes)
        save_notes_txt(notes, out_dir / f"{wav_path.stem}.notes.txt")
    p = analysis.pitch
    summary = f"{wav_path.name}: frames={len(p)} voiced={100 * p.voiced.mean():.1f}% notes={len(notes)}"
    log.info(summary)
    return out, summary


def predict_curve(predictor: PitchPredictor, analysis: Analysis, ref: NoteSequence) -> PitchCurve:
    """Predicted curve keeps the original voicing; unvoiced frames keep the original values."""
    p = analysis.pitch
    pred = predictor.predict((note_ids(ref, len(p)), analysis.envelope.env))
    return p.with_f0(np.where(p.voiced, pred, p.f0_midi))


def synthesize_backend(cfg: PipelineConfig, w: Waveform, analysis: Analysis, tuned: PitchCurve) -> Waveform:
    p, env = analysis.pitch, analysis.envelope
    if cfg.backend == "world":
        out = world_like_synthesize(tuned, env, seed=cfg.seed)
    elif cfg.backend == "phase":
        out = phase_vocoder_shift(w, ShiftPlan.from_curves(p, tuned))
    else:
        from .vocoder import SFVocoder

        if not cfg.vocoder_checkpoint:
            raise ConfigError("backend 'sf' needs vocoder_checkpoint (train one with `karatune train-vocoder`)")
        voc = SFVocoder.load(cfg.vocoder_checkpoint)
        if voc.model_.cfg.sample_rate != cfg.analysis.sample_rate:
            raise ConfigError(f"vocoder was trained at {voc.model_.cfg.sample_rate} Hz but the pipeline "
                              f"runs at {cfg.analysis.sample_rate} Hz")
        out = voc.predict((tuned, env, p.voiced))
    n = len(w)
    samples = out.samples[:n]
    return Waveform(np.pad(samples, (0, n - samples.size)), w.sample_rate)


def tune_waveform(w: Waveform, cfg: PipelineConfig, ref: NoteSequence | None = None, timings=None,
                  label="input"):
    """Run analysis, tuning and synthesis in memory.

    Returns ``(output, analysis, ref, tuned_curve, tune_report)``.
    """
    timings = {} if timings is None else timings
    with stage("analyze", label, timings):
        analysis, decoded = analyze_waveform(w, cfg)
    ref = decoded if ref is None else ref
    p = analysis.pitch
    with stage("tune", label, timings):
        if cfg.mode == "neural":
            if not cfg.predictor_checkpoint:
                raise ConfigError("mode 'neural' needs predictor_checkpoint "
                                  "(train one with `karatune train-predictor`)")
            predictor = PitchPredictor.load(cfg.predictor_checkpoint)
            source = predict_curve(predictor, analysis, ref)
        else:
            source = p
        tuned, report = note_shift_tune(source, ref, cfg.tuner.octave_guard)
        if cfg.mode == "rule":
            tuned = crossfade_boundaries(tuned, p, ref, cfg.tuner.crossfade_width)
    with stage("synthesize", label, timings):
        out = synthesize_backend(cfg, w, analysis, tuned)
    return out, analysis, ref, tuned, report


def cmd_tune(wav_path, cfg: PipelineConfig, ref_path=None) -> dict:
    """Tune one file; writes ``<stem>.<mode>.<backend>.wav`` plus ``.report.txt`` and ``.plot.svg``."""
    wav_path = Path(wav_path)
    timings: dict = {}
    with stage("load", wav_path, timings):
        w = load_wav(wav_path, cfg.analysis.sample_rate)
    ref = None
    if ref_path is not None:
        with stage("load-notes", ref_path, timings):
            ref = load_notes(ref_path, cfg.analysis.hop, cfg.analysis.sample_rate)
    out, analysis, ref, tuned, report = tune_waveform(w, cfg, ref, timings, str(wav_path))
    with stage("metrics", wav_path, timings):
        metrics = measure(out, ref, cfg, analysis.pitch.voiced)
        metrics.tune = report
        metrics.runtimes = dict(timings)
    out_dir = Path(cfg.out_dir)
    base = out_dir / f"{wav_path.stem}.{cfg.mode}.{cfg.backend}"
    paths = {"wav": base.with_name(base.name + ".wav"), "report": base.with_name(base.name + ".report.txt"),
             "plot": base.with_name(base.name + ".plot.svg")}
    with stage("write", out_dir, timings):
        out_dir.mkdir(parents=True, exist_ok=True)
        clipped = save_wav(out, paths["wav"])
        if clipped:
            log.warning("%d samples clipped while writing %s", clipped, paths["wav"])
        metrics.save(paths["report"])
        paths["plot"].write_text(render_plot(ref, analysis.pitch, tuned))
    for name, seconds in timings.items():
        log.info("stage %-10s %.3fs", name, seconds)
    log.info("cent RMSE before %.2f, after %.2f (self-measured)", report.cent_rmse_before, metrics.cent_rmse)
    return {"paths": paths, "metrics": metrics}


def cmd_metrics(wav_path, ref_path, cfg: PipelineConfig) -> MetricsReport:
    with stage("load", wav_path):
        w = load_wav(wav_path, cfg.analysis.sample_rate)
    with stage("load-notes", ref_path):
        ref = load_notes(ref_path, cfg.analysis.hop, cfg.analysis.sample_rate)
    with stage("metrics", wav_path):
        return measure(w, ref, cfg)


def _analyses(wav_paths, cfg: PipelineConfig):
    if not wav_paths:
        raise StageError("load", "<none>", InvalidInputError("no training files given"), "data")
    for path in wav_paths:
        with stage("load", path):
            w = load_wav(path, cfg.analysis.sample_rate)
        with stage("analyze", path):
            analysis, notes = analyze_waveform(w, cfg)
        yield path, w, analysis, notes


def cmd_train_predictor(wav_paths, cfg: PipelineConfig) -> Path:
    """Train on clips whose HMM-decoded notes serve as the score."""
    from .nn import save_loss_csv

    batches = []
    for path, _, analysis, notes in _analyses(wav_paths, cfg):
        p = analysis.pitch
        if not p.voiced.any():
            log.warning("%s has no voiced frames; skipped", path)
            continue
        batches.append(PredictorBatch(note_ids(notes, len(p)), analysis.envelope.env, p.f0_midi, p.voiced))
    t = cfg.predictor_train
    est = PitchPredictor(model_dim=t.model_dim, n_fft_blocks=t.n_fft_blocks, n_heads=t.n_heads, steps=t.steps,
                         lr=t.lr, augment=t.augment, max_shift_bins=t.max_shift_bins, random_state=cfg.seed)
    with stage("train-predictor", f"{len(batches)} clips"):
        est.fit(batches)
    out_dir = Path(cfg.out_dir)
    ckpt = out_dir / "predictor.npz"
    with stage("write", ckpt):
        out_dir.mkdir(parents=True, exist_ok=True)
        est.save(ckpt)
        save_loss_csv(out_dir / "predictor_loss.csv", est.history_)
    return ckpt


def cmd_train_vocoder(wav_paths, cfg: PipelineConfig) -> Path:
    from .nn import save_loss_csv
    from .vocoder import SFVocoder

    clips = [(w, a.pitch, a.envelope) for _, w, a, _ in _analyses(wav_paths, cfg)]
    t = cfg.vocoder_train
    est = SFVocoder(base_channels=t.base_channels, steps=t.steps, lr=t.lr, adversarial=t.adversarial,
                    segment_frames=t.segment_frames, random_state=cfg.seed)
    with stage("train-vocoder", f"{len(clips)} clips"):
        est.fit(clips)
    out_dir = Path(cfg.out_dir)
    ckpt = out_dir / "vocoder.npz"
    with stage("write", ckpt):
        out_dir.mkdir(parents=True, exist_ok=True)
        est.save(ckpt)
        save_loss_csv(out_dir / "vocoder_loss.csv", est.history_)
    return ckpt


__all__ = ["MetricsReport", "StageError", "analyze_waveform", "cmd_analyze", "cmd_metrics", "cmd_train_predictor",
           "cmd_train_vocoder", "cmd_tune", "measure", "render_plot", "tune_waveform", "FormatError"]
